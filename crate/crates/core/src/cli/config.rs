use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};

use super::CliError;
use crate::cycle::{BathPair, CycleOptions, MachineKind};
use crate::fock_oracle::FockConfig;
use crate::quadrature::QuadratureSpec;
use crate::spectrum::CavityConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    Friction,
    Bound,
    Engine,
    Refrigerator,
    Sweep,
    ShortcutCheck,
    Oracle,
}

impl CommandName {
    pub const ALL: [CommandName; 7] = [
        CommandName::Friction,
        CommandName::Bound,
        CommandName::Engine,
        CommandName::Refrigerator,
        CommandName::Sweep,
        CommandName::ShortcutCheck,
        CommandName::Oracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CommandName::Friction => "friction",
            CommandName::Bound => "bound",
            CommandName::Engine => "engine",
            CommandName::Refrigerator => "refrigerator",
            CommandName::Sweep => "sweep",
            CommandName::ShortcutCheck => "shortcut-check",
            CommandName::Oracle => "oracle",
        }
    }

    pub fn about(&self) -> &'static str {
        match self {
            CommandName::Friction => "Friction energy of one compression stroke",
            CommandName::Bound => "Analytic upper bound on the friction energy",
            CommandName::Engine => "Otto engine figures of merit",
            CommandName::Refrigerator => "Otto refrigerator figures of merit",
            CommandName::Sweep => "Engine or refrigerator over a grid of stroke times",
            CommandName::ShortcutCheck => "Running spectral integrals of the shortcut trajectory",
            CommandName::Oracle => "Truncated Fock-space cross-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn bit(&self) -> u8 {
        1 << (*self as u8)
    }
}

const F: u8 = 1 << 0;
const B: u8 = 1 << 1;
const E: u8 = 1 << 2;
const R: u8 = 1 << 3;
const S: u8 = 1 << 4;
const SC: u8 = 1 << 5;
const O: u8 = 1 << 6;
const ALL: u8 = F | B | E | R | S | SC | O;

struct Key {
    name: &'static str,
    default: &'static str,
    commands: u8,
    help: &'static str,
}

const fn key(name: &'static str, default: &'static str, commands: u8, help: &'static str) -> Key {
    Key {
        name,
        default,
        commands,
        help,
    }
}

const KEYS: &[Key] = &[
    key("output", "-", ALL, "Output file; - writes to standard output"),
    key("jobs", "0", ALL, "Worker threads; 0 uses every logical core"),
    key("L0", "3.141592653589793", ALL, "Rest length of the cavity"),
    key("epsilon", "0.01", ALL, "Compression ratio; sweep accepts a list or grid"),
    key("modes", "64", ALL, "Number of cavity modes K"),
    key("tail-tol", "1e-6", ALL, "Relative mode-tail tolerance"),
    key("nodes-per-period", "16", ALL, "Quadrature nodes per oscillation period"),
    key("panel-order", "10", ALL, "Gauss-Legendre points per panel"),
    key("rel-tol", "1e-10", ALL, "Relative quadrature tolerance"),
    key("max-panels", "1000000", ALL, "Panel budget per integral"),
    key("family", "quintic", F | B | E | R | S | O, "Trajectory family: quintic, shortcut or sampled"),
    key("samples", "", F | B | E | R | S | O, "Sample file for the sampled family"),
    key("tau", "1", F | B | E | R | S | SC | O, "Stroke duration"),
    key("tau-grid", "", F | B | S, "Stroke durations: lo:hi:N, lo:hi:Nlog or a comma list"),
    key("beta", "1", F | B | O, "Inverse temperature; inf for vacuum"),
    key("beta-grid", "", F | B, "Inverse temperatures: grid or comma list"),
    key("beta-a", "2", E | R | S, "Inverse temperature of the cold bath"),
    key("beta-c", "", E | R, "Inverse temperature of the hot bath"),
    key("beta-ratio", "0.5", E | R | S, "beta-c / beta-a; sweep accepts a list"),
    key("thermalization-time", "0", E | R | S, "Total time spent in the two baths per cycle"),
    key("casimir", "false", E | R | S, "Include the static Casimir offsets"),
    key("adiabatic", "false", E | R, "Ignore friction"),
    key("per-mode", "false", F, "Emit the per-mode breakdown instead of totals"),
    key("mode", "engine", S, "engine or refrigerator"),
    key("n", "2,4,10", SC, "Harmonic indices"),
    key("points", "201", SC, "Time samples per harmonic"),
    key("fock-modes", "2", O, "Modes kept in the Fock space"),
    key("n-max", "8", O, "Occupation cutoff per mode"),
    key("dt", "0.01", O, "Evolution step"),
    key("order", "4", O, "Integrator order: 2 or 4"),
    key("dim-cap", "10000", O, "Largest Fock-space dimension"),
    key("check", "friction", O, "friction or identities"),
];

fn default_for(key: &Key, cmd: CommandName) -> &'static str {
    match (key.name, cmd) {
        ("beta", CommandName::Oracle) => "2",
        ("beta-ratio", CommandName::Refrigerator) => "0.995",
        _ => key.default,
    }
}

fn env_name(key: &str) -> String {
    format!("CASOTTO_{}", key.to_uppercase().replace('-', "_"))
}

pub fn command_line() -> Command {
    let mut cmd = Command::new("casotto")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Quantum Otto cycles of a cavity field with a moving wall")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in CommandName::ALL {
        let mut sub = Command::new(c.name()).about(c.about()).arg(
            Arg::new("config")
                .long("config")
                .env("CASOTTO_CONFIG")
                .value_name("FILE")
                .help("Flat key = value configuration file"),
        );
        for k in KEYS.iter().filter(|k| k.commands & c.bit() != 0) {
            let mut arg = Arg::new(k.name)
                .long(k.name)
                .env(&*Box::leak(env_name(k.name).into_boxed_str()))
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help(format!("{} [default: {}]", k.help, display_default(default_for(k, c))));
            if k.name == "L0" {
                arg = arg.visible_alias("l0");
            }
            sub = sub.arg(arg);
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn display_default(d: &str) -> &str {
    if d.is_empty() {
        "unset"
    } else {
        d
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandName,
    /// Resolved key = value pairs for this command, in table order.
    pub entries: Vec<(String, String)>,
    pub settings: Settings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyName {
    Quintic,
    Shortcut,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleCheck {
    Friction,
    Identities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub output: Option<PathBuf>,
    pub jobs: usize,
    pub cavity: CavityConfig,
    pub epsilons: Vec<f64>,
    pub quadrature: QuadratureSpec,
    pub family: FamilyName,
    pub samples: Option<PathBuf>,
    pub tau: f64,
    pub taus: Vec<f64>,
    pub betas: Vec<f64>,
    pub beta_a: f64,
    pub beta_c: Option<f64>,
    pub ratios: Vec<f64>,
    pub options: CycleOptions,
    pub adiabatic: bool,
    pub per_mode: bool,
    pub kind: MachineKind,
    pub harmonics: Vec<usize>,
    pub points: usize,
    pub fock: FockConfig,
    pub check: OracleCheck,
}

/// Parses `argv` (program name first) with the precedence
/// flag or environment > config file > default.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command_line().try_get_matches_from(argv).map_err(CliError::Clap)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = CommandName::from_name(name).expect("registered subcommand");
    let file = match sub.get_one::<String>("config") {
        Some(path) => read_config_file(Path::new(path), command)?,
        None => BTreeMap::new(),
    };
    resolve(command, sub, &file)
}

/// Reads a flat `key = value` file; `#` starts a comment line.
pub fn read_config_file(path: &Path, command: CommandName) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    parse_config_text(&text, command)
}

pub fn parse_config_text(text: &str, command: CommandName) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key = value", lineno + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "command" {
            if v != command.name() {
                return Err(CliError::Usage(format!(
                    "config file is for `{v}`, not `{}`",
                    command.name()
                )));
            }
            continue;
        }
        let k = if k == "l0" { "L0" } else { k };
        match KEYS.iter().find(|key| key.name == k) {
            Some(key) if key.commands & command.bit() != 0 => {
                out.insert(k.to_string(), v.to_string());
            }
            Some(_) => {
                return Err(CliError::Usage(format!(
                    "key `{k}` does not apply to `{}`",
                    command.name()
                )))
            }
            None => return Err(CliError::Usage(format!("unknown config key `{k}`"))),
        }
    }
    Ok(out)
}

fn resolve(
    command: CommandName,
    sub: &ArgMatches,
    file: &BTreeMap<String, String>,
) -> Result<RunConfig, CliError> {
    let mut values: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut entries = Vec::new();
    for k in KEYS {
        let applies = k.commands & command.bit() != 0;
        let v = if applies {
            sub.get_one::<String>(k.name)
                .cloned()
                .or_else(|| file.get(k.name).cloned())
                .unwrap_or_else(|| default_for(k, command).to_string())
        } else {
            default_for(k, command).to_string()
        };
        if applies {
            entries.push((k.name.to_string(), v.clone()));
        }
        values.insert(k.name, v);
    }
    let settings = Settings::from_values(command, &values)?;
    Ok(RunConfig {
        command,
        entries,
        settings,
    })
}

fn usage(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("`{key}`: {reason}"))
}

fn get<'a>(values: &'a BTreeMap<&'static str, String>, key: &str) -> &'a str {
    values.get(key).map(String::as_str).unwrap_or("")
}

fn float(values: &BTreeMap<&'static str, String>, key: &str) -> Result<f64, CliError> {
    let s = get(values, key);
    s.parse::<f64>()
        .ok()
        .filter(|x| !x.is_nan())
        .ok_or_else(|| usage(key, format!("expected a number, got `{s}`")))
}

fn uint(values: &BTreeMap<&'static str, String>, key: &str) -> Result<usize, CliError> {
    let s = get(values, key);
    s.parse::<usize>()
        .map_err(|_| usage(key, format!("expected a non-negative integer, got `{s}`")))
}

fn boolean(values: &BTreeMap<&'static str, String>, key: &str) -> Result<bool, CliError> {
    match get(values, key) {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        s => Err(usage(key, format!("expected true or false, got `{s}`"))),
    }
}

/// `lo:hi:N` (linear), `lo:hi:Nlog` (geometric) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` must read lo:hi:N"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| format!("bad grid start `{}`", parts[0]))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| format!("bad grid end `{}`", parts[1]))?;
        let (count, log) = match parts[2].trim().strip_suffix("log") {
            Some(c) => (c, true),
            None => (parts[2].trim(), false),
        };
        let n: usize = count.parse().map_err(|_| format!("bad grid count `{}`", parts[2]))?;
        if n == 0 {
            return Err("grid count must be positive".into());
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err("grid ends must be finite".into());
        }
        if log && !(lo > 0.0 && hi > 0.0) {
            return Err("log grid needs positive ends".into());
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        let step = |i: usize| i as f64 / (n - 1) as f64;
        Ok((0..n)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == n - 1 {
                    hi
                } else if log {
                    (lo.ln() + (hi.ln() - lo.ln()) * step(i)).exp()
                } else {
                    lo + (hi - lo) * step(i)
                }
            })
            .collect())
    } else {
        s.split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| !v.is_nan())
                    .ok_or_else(|| format!("bad list entry `{x}`"))
            })
            .collect()
    }
}

fn grid(values: &BTreeMap<&'static str, String>, key: &str) -> Result<Vec<f64>, CliError> {
    let s = get(values, key);
    if s.is_empty() {
        return Ok(Vec::new());
    }
    parse_grid(s).map_err(|e| usage(key, e))
}

fn from_core(err: crate::Error) -> CliError {
    match err {
        crate::Error::InvalidParameter { name, reason } => usage(name, reason),
        other => CliError::Usage(other.to_string()),
    }
}

impl Settings {
    fn from_values(command: CommandName, v: &BTreeMap<&'static str, String>) -> Result<Self, CliError> {
        let output = match get(v, "output") {
            "-" | "" => None,
            p => Some(PathBuf::from(p)),
        };
        let epsilons = grid(v, "epsilon")?;
        if epsilons.is_empty() {
            return Err(usage("epsilon", "missing value"));
        }
        if command != CommandName::Sweep && epsilons.len() != 1 {
            return Err(usage("epsilon", "lists are only accepted by sweep"));
        }
        for &e in &epsilons {
            if !(e > 0.0 && e < 1.0) {
                return Err(usage("epsilon", format!("must lie in (0, 1), got {e}")));
            }
        }
        let cavity = CavityConfig::with_tail_tol(
            float(v, "L0")?,
            epsilons[0],
            uint(v, "modes")?,
            float(v, "tail-tol")?,
        )
        .map_err(from_core)?;
        let quadrature = QuadratureSpec {
            nodes_per_period: uint(v, "nodes-per-period")?,
            panel_order: uint(v, "panel-order")?,
            rel_tol: float(v, "rel-tol")?,
            max_panels: uint(v, "max-panels")?,
        };
        quadrature.validate().map_err(from_core)?;
        let family = match get(v, "family") {
            "quintic" => FamilyName::Quintic,
            "shortcut" => FamilyName::Shortcut,
            "sampled" => FamilyName::Sampled,
            s => return Err(usage("family", format!("unknown family `{s}`"))),
        };
        let samples = match get(v, "samples") {
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        if family == FamilyName::Sampled {
            match &samples {
                None => return Err(usage("samples", "the sampled family needs a sample file")),
                Some(p) if !p.is_file() => {
                    return Err(usage("samples", format!("no such file {}", p.display())))
                }
                _ => {}
            }
        }
        let tau = float(v, "tau")?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(usage("tau", format!("must be positive, got {tau}")));
        }
        let mut taus = grid(v, "tau-grid")?;
        if taus.is_empty() {
            taus.push(tau);
        }
        if let Some(bad) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(usage("tau-grid", format!("durations must be positive, got {bad}")));
        }
        let mut betas = grid(v, "beta-grid")?;
        if betas.is_empty() {
            betas.push(float(v, "beta")?);
        }
        if let Some(bad) = betas.iter().find(|b| !(**b > 0.0)) {
            return Err(usage("beta", format!("must be positive, got {bad}")));
        }
        let beta_a = float(v, "beta-a")?;
        if !(beta_a > 0.0) {
            return Err(usage("beta-a", format!("must be positive, got {beta_a}")));
        }
        let beta_c = match get(v, "beta-c") {
            "" => None,
            _ => Some(float(v, "beta-c")?),
        };
        let ratios = grid(v, "beta-ratio")?;
        if ratios.is_empty() {
            return Err(usage("beta-ratio", "missing value"));
        }
        if command != CommandName::Sweep && ratios.len() != 1 {
            return Err(usage("beta-ratio", "lists are only accepted by sweep"));
        }
        if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(usage("beta-ratio", format!("must lie in (0, 1], got {bad}")));
        }
        if matches!(command, CommandName::Engine | CommandName::Refrigerator) {
            let pair = match beta_c {
                Some(bc) => BathPair::new(beta_a, bc),
                None => BathPair::from_ratio(beta_a, ratios[0]),
            };
            pair.map_err(from_core)?;
        }
        let thermalization_time = float(v, "thermalization-time")?;
        if !(thermalization_time >= 0.0 && thermalization_time.is_finite()) {
            return Err(usage("thermalization-time", "must be non-negative"));
        }
        let options = CycleOptions {
            include_casimir: boolean(v, "casimir")?,
            thermalization_time,
        };
        let kind = match command {
            CommandName::Refrigerator => MachineKind::Refrigerator,
            CommandName::Sweep => match get(v, "mode") {
                "engine" => MachineKind::Engine,
                "refrigerator" => MachineKind::Refrigerator,
                s => return Err(usage("mode", format!("expected engine or refrigerator, got `{s}`"))),
            },
            _ => MachineKind::Engine,
        };
        let harmonics = get(v, "n")
            .split(',')
            .map(|x| x.trim().parse::<usize>().ok().filter(|&n| n > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| usage("n", "expected a comma list of positive integers"))?;
        let points = uint(v, "points")?;
        if points < 2 {
            return Err(usage("points", "need at least two samples"));
        }
        let fock = FockConfig::with_dim_cap(
            uint(v, "fock-modes")?,
            uint(v, "n-max")?,
            float(v, "dt")?,
            uint(v, "order")?,
            uint(v, "dim-cap")?,
        )
        .map_err(from_core)?;
        if command == CommandName::Oracle && fock.n_modes > cavity.n_modes {
            return Err(usage("fock-modes", "may not exceed modes"));
        }
        let check = match get(v, "check") {
            "friction" => OracleCheck::Friction,
            "identities" => OracleCheck::Identities,
            s => return Err(usage("check", format!("expected friction or identities, got `{s}`"))),
        };
        Ok(Self {
            output,
            jobs: uint(v, "jobs")?,
            cavity,
            epsilons,
            quadrature,
            family,
            samples,
            tau,
            taus,
            betas,
            beta_a,
            beta_c,
            ratios,
            options,
            adiabatic: boolean(v, "adiabatic")?,
            per_mode: boolean(v, "per-mode")?,
            kind,
            harmonics,
            points,
            fock,
            check,
        })
    }
}

/// The `key = value` lines of an echoed header, ready to be read back as a
/// config file.
pub fn config_from_header(csv: &str) -> String {
    let mut out = String::new();
    let mut inside = false;
    for line in csv.lines() {
        let Some(body) = line.strip_prefix("# ") else {
            if !line.starts_with('#') {
                break;
            }
            continue;
        };
        match body {
            "[config]" => inside = true,
            b if b.starts_with('[') => inside = false,
            b if inside => {
                out.push_str(b);
                out.push('\n');
            }
            _ => {}
        }
    }
    out
}
