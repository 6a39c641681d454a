use rayon::prelude::*;

use super::config::{CommandName, FamilyName, OracleCheck, RunConfig, Settings};
use super::csv::{Cell, Column, Table};
use crate::cycle::{self, BathPair, CycleReport, StrokePair, SweepSpec};
use crate::error::{Error, Result};
use crate::fock_oracle::{validate_friction, verify_trace_identities};
use crate::friction::{acceleration_extrema, friction_bound, partial_spectral_trace, FrictionModel, FrictionResult};
use crate::spectrum::ThermalBath;
use crate::trajectory::{load_sampled, Trajectory, TrajectoryFamily};

pub const FRICTION_COLUMNS: &[Column] = &[
    ("tau", "stroke duration"),
    ("beta", "inverse temperature of the initial thermal state"),
    ("epsilon", "compression ratio"),
    ("modes", "modes summed"),
    ("E_F", "friction energy"),
    ("quad_error", "propagated quadrature error of E_F"),
    ("tail_estimate", "estimated contribution of modes beyond modes"),
    ("bound", "analytic upper bound; nan when the trajectory shape does not admit it"),
    ("truncation_warning", "1 when tail_estimate exceeds tail-tol relative to E_F"),
];

pub const PER_MODE_COLUMNS: &[Column] = &[
    ("tau", "stroke duration"),
    ("beta", "inverse temperature of the initial thermal state"),
    ("epsilon", "compression ratio"),
    ("k", "mode index, starting at 1"),
    ("diag_term", "thermal-occupation term of mode k"),
    ("create_term", "pair-creation term of mode k"),
    ("scatter_term", "inter-mode scattering term of mode k"),
    ("cumulative", "running sum of the three terms over modes 1..k"),
];

pub const BOUND_COLUMNS: &[Column] = &[
    ("tau", "stroke duration"),
    ("beta", "inverse temperature"),
    ("epsilon", "compression ratio"),
    ("modes", "modes summed"),
    ("t_max", "time of the largest wall acceleration"),
    ("t_min", "time of the smallest wall acceleration"),
    ("d2_max", "largest wall acceleration"),
    ("d2_min", "smallest wall acceleration"),
    ("bound", "upper bound on the friction energy"),
];

pub const CYCLE_COLUMNS: &[Column] = &[
    ("beta_a", "inverse temperature of the cold bath"),
    ("beta_c", "inverse temperature of the hot bath"),
    ("epsilon", "compression ratio"),
    ("tau", "stroke-time parameter; nan for the adiabatic cycle"),
    ("stroke_time", "duration of each unitary stroke; nan for the adiabatic cycle"),
    ("modes", "modes summed"),
    ("E_A", "energy after thermalization with the cold bath"),
    ("E_B", "energy after compression"),
    ("E_C", "energy after thermalization with the hot bath"),
    ("E_D", "energy after expansion"),
    ("Q", "heat from the hot bath (engine) or extracted from the cold bath (refrigerator)"),
    ("W", "work produced (engine) or consumed (refrigerator)"),
    ("eta", "efficiency W/Q (engine) or coefficient of performance Q/W (refrigerator)"),
    ("eta_adiabatic", "eta of the adiabatic cycle"),
    ("eta_second_order", "eta expanded to first order in the friction energies"),
    ("power", "W per cycle time"),
    ("heat_rate", "Q per cycle time"),
    ("EF_A", "friction energy of the compression stroke"),
    ("EF_C", "friction energy of the expansion stroke"),
    ("operating_mode", "engine, refrigerator, dissipator or idle"),
    ("warnings", "diagnostic flags joined by |, or none"),
    ("status", "ok, or the error that stopped this cell"),
];

pub const SHORTCUT_COLUMNS: &[Column] = &[
    ("n", "harmonic index"),
    ("Omega", "angular frequency n*pi/L0"),
    ("t", "upper integration limit"),
    ("I", "running integral of the wall velocity times cos(Omega t)"),
    ("J", "running integral of the wall velocity times sin(Omega t)"),
    ("magnitude", "sqrt(I^2 + J^2)"),
];

pub const ORACLE_COLUMNS: &[Column] = &[
    ("epsilon", "compression ratio"),
    ("E_full", "energy after direct evolution in the truncated Fock space"),
    ("E_adiab", "adiabatically transported thermal energy"),
    ("E_pert", "E_adiab plus the friction energy of the retained modes"),
    ("ratio", "(E_full - E_adiab) / friction energy"),
    ("richardson_ratio", "ratio extrapolated linearly to epsilon = 0"),
];

pub const IDENTITY_COLUMNS: &[Column] = &[
    ("identity", "operator product"),
    ("i", "first mode"),
    ("j", "second mode, - when unused"),
    ("k", "mode of N_k"),
    ("numeric", "trace against the truncated thermal state"),
    ("truncated_product", "the same trace with cutoff-truncated ladder operators"),
    ("published", "closed form as published"),
    ("exact", "closed form from thermal factorial moments"),
    ("published_deviation", "|numeric - published|"),
    ("exact_deviation", "|numeric - exact|"),
];

pub fn columns_for(command: CommandName, s: &Settings) -> &'static [Column] {
    match command {
        CommandName::Friction if s.per_mode => PER_MODE_COLUMNS,
        CommandName::Friction => FRICTION_COLUMNS,
        CommandName::Bound => BOUND_COLUMNS,
        CommandName::Engine | CommandName::Refrigerator | CommandName::Sweep => CYCLE_COLUMNS,
        CommandName::ShortcutCheck => SHORTCUT_COLUMNS,
        CommandName::Oracle => match s.check {
            OracleCheck::Friction => ORACLE_COLUMNS,
            OracleCheck::Identities => IDENTITY_COLUMNS,
        },
    }
}

/// Runs the command. Numerical failures are recorded in the returned table
/// after the rows completed so far.
pub fn run(cfg: &RunConfig) -> Table {
    let s = &cfg.settings;
    let mut table = Table::new(columns_for(cfg.command, s));
    let outcome = match cfg.command {
        CommandName::Friction => friction(s, &mut table).map_err(|e| e.to_string()),
        CommandName::Bound => bound(s, &mut table).map_err(|e| e.to_string()),
        CommandName::Engine | CommandName::Refrigerator => {
            single_cycle(s, &mut table).map_err(|e| e.to_string())
        }
        CommandName::Sweep => sweep(s, &mut table),
        CommandName::ShortcutCheck => shortcut_check(s, &mut table).map_err(|e| e.to_string()),
        CommandName::Oracle => oracle(s, &mut table).map_err(|e| e.to_string()),
    };
    table.failure = outcome.err();
    table
}

fn family(s: &Settings) -> Result<TrajectoryFamily> {
    Ok(match s.family {
        FamilyName::Quintic => TrajectoryFamily::Quintic,
        FamilyName::Shortcut => TrajectoryFamily::Shortcut { l0: s.cavity.l0 },
        FamilyName::Sampled => {
            let path = s.samples.as_ref().ok_or_else(|| Error::param("samples", "missing"))?;
            TrajectoryFamily::Sampled(load_sampled(path)?)
        }
    })
}

fn flag(b: bool) -> Cell {
    Cell::Int(b as usize)
}

/// Pushes rows until the first error.
fn push_all(table: &mut Table, groups: Vec<Result<Vec<Vec<Cell>>>>) -> Result<()> {
    for g in groups {
        for row in g? {
            table.push(row);
        }
    }
    Ok(())
}

fn friction(s: &Settings, table: &mut Table) -> Result<()> {
    let fam = family(s)?;
    let eps = s.cavity.epsilon;
    let groups: Vec<Result<Vec<Vec<Cell>>>> = s
        .taus
        .par_iter()
        .map(|&tau| {
            let traj = fam.build(tau)?;
            let model = FrictionModel::new(&s.cavity, &traj, &s.quadrature)?;
            s.betas
                .iter()
                .map(|&beta| {
                    let r = model.evaluate(&ThermalBath::new(beta)?, eps)?;
                    if s.per_mode {
                        return Ok(per_mode_rows(tau, &r));
                    }
                    Ok(vec![vec![
                        tau.into(),
                        beta.into(),
                        eps.into(),
                        r.k_used.into(),
                        r.value.into(),
                        r.quad_error.into(),
                        r.tail_estimate.into(),
                        r.bound.unwrap_or(f64::NAN).into(),
                        flag(r.truncation_warning),
                    ]])
                })
                .collect::<Result<Vec<Vec<Vec<Cell>>>>>()
                .map(|g| g.concat())
        })
        .collect();
    push_all(table, groups)
}

fn per_mode_rows(tau: f64, r: &FrictionResult) -> Vec<Vec<Cell>> {
    r.per_mode
        .iter()
        .zip(r.cumulative())
        .enumerate()
        .map(|(i, (m, acc))| {
            vec![
                tau.into(),
                r.beta.into(),
                r.epsilon.into(),
                (i + 1).into(),
                m.diag.into(),
                m.create.into(),
                m.scatter.into(),
                acc.into(),
            ]
        })
        .collect()
}

fn bound(s: &Settings, table: &mut Table) -> Result<()> {
    let fam = family(s)?;
    let eps = s.cavity.epsilon;
    let groups: Vec<Result<Vec<Vec<Cell>>>> = s
        .taus
        .par_iter()
        .map(|&tau| {
            let traj = fam.build(tau)?;
            let ext = acceleration_extrema(&traj)?;
            s.betas
                .iter()
                .map(|&beta| {
                    let b = friction_bound(&s.cavity, &ThermalBath::new(beta)?, &traj)?;
                    Ok(vec![
                        tau.into(),
                        beta.into(),
                        eps.into(),
                        s.cavity.n_modes.into(),
                        ext.t_max.into(),
                        ext.t_min.into(),
                        ext.d2_max.into(),
                        ext.d2_min.into(),
                        b.into(),
                    ])
                })
                .collect()
        })
        .collect();
    push_all(table, groups)
}

fn warnings(r: &CycleReport) -> String {
    let d = &r.diagnostics;
    let flags = [
        (d.condition_warning, "condition"),
        (d.tail_warning, "tail"),
        (d.friction_tail_warning, "friction_tail"),
        (d.degenerate, "degenerate"),
        (d.eta_undefined, "eta_undefined"),
        (d.direction_warning, "direction"),
        (d.perturbative_warning, "perturbative"),
    ];
    let set: Vec<&str> = flags.iter().filter(|f| f.0).map(|f| f.1).collect();
    if set.is_empty() {
        "none".into()
    } else {
        set.join("|")
    }
}

fn cycle_row(baths: &BathPair, eps: f64, tau: f64, r: &CycleReport) -> Vec<Cell> {
    vec![
        baths.beta_a.into(),
        baths.beta_c.into(),
        eps.into(),
        tau.into(),
        r.stroke_time.unwrap_or(f64::NAN).into(),
        r.k_used.into(),
        r.e_a.into(),
        r.e_b.into(),
        r.e_c.into(),
        r.e_d.into(),
        r.q.into(),
        r.w.into(),
        r.eta.into(),
        r.eta_adiabatic.into(),
        r.eta_second_order.into(),
        r.power.into(),
        r.heat_rate.into(),
        r.ef_a.into(),
        r.ef_c.into(),
        r.mode.name().into(),
        warnings(r).into(),
        "ok".into(),
    ]
}

fn failed_row(beta_a: f64, beta_c: f64, eps: f64, tau: f64, modes: usize, msg: &str) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![beta_a.into(), beta_c.into(), eps.into(), tau.into()];
    row.push(f64::NAN.into());
    row.push(modes.into());
    row.extend((0..13).map(|_| Cell::Float(f64::NAN)));
    row.push("none".into());
    row.push("none".into());
    row.push(msg.into());
    row
}

fn bath_pair(s: &Settings) -> Result<BathPair> {
    match s.beta_c {
        Some(bc) => BathPair::new(s.beta_a, bc),
        None => BathPair::from_ratio(s.beta_a, s.ratios[0]),
    }
}

fn single_cycle(s: &Settings, table: &mut Table) -> Result<()> {
    let baths = bath_pair(s)?;
    let pair = if s.adiabatic {
        None
    } else {
        let traj: Trajectory = family(s)?.build(s.tau)?;
        Some(StrokePair::new(&s.cavity, &traj, &s.quadrature)?)
    };
    let r = cycle::cycle_with(&s.cavity, &baths, s.kind, pair.as_ref(), &s.options)?;
    let tau = if s.adiabatic { f64::NAN } else { s.tau };
    table.push(cycle_row(&baths, s.cavity.epsilon, tau, &r));
    Ok(())
}

fn sweep(s: &Settings, table: &mut Table) -> std::result::Result<(), String> {
    let fam = family(s).map_err(|e| e.to_string())?;
    let grid = SweepSpec {
        beta_a: s.beta_a,
        ratios: s.ratios.clone(),
        epsilons: s.epsilons.clone(),
        taus: s.taus.clone(),
        kind: s.kind,
        options: s.options,
    };
    let cells = cycle::sweep(&s.cavity, &grid, &fam, &s.quadrature).map_err(|e| e.to_string())?;
    let mut first_error = None;
    for c in &cells {
        match &c.report {
            Ok(r) => {
                let baths = BathPair::from_ratio(s.beta_a, c.ratio).map_err(|e| e.to_string())?;
                table.push(cycle_row(&baths, c.epsilon, c.tau, r));
            }
            Err(msg) => {
                table.push(failed_row(s.beta_a, s.beta_a * c.ratio, c.epsilon, c.tau, s.cavity.n_modes, msg));
                first_error.get_or_insert_with(|| msg.clone());
            }
        }
    }
    match first_error {
        Some(msg) => Err(format!("sweep cell failed: {msg}")),
        None => Ok(()),
    }
}

fn shortcut_check(s: &Settings, table: &mut Table) -> Result<()> {
    let l0 = s.cavity.l0;
    let traj = TrajectoryFamily::Shortcut { l0 }.build(s.tau)?;
    let (a, b) = (traj.t_start(), traj.t_end());
    let m = s.points - 1;
    let times: Vec<f64> = (0..=m)
        .map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 })
        .collect();
    let groups: Vec<Result<Vec<Vec<Cell>>>> = s
        .harmonics
        .par_iter()
        .map(|&n| {
            let omega = n as f64 * std::f64::consts::PI / l0;
            let trace = partial_spectral_trace(&traj, n, l0, &times, &s.quadrature)?;
            Ok(times
                .iter()
                .zip(trace)
                .map(|(&t, (i, j))| vec![n.into(), omega.into(), t.into(), i.into(), j.into(), i.hypot(j).into()])
                .collect())
        })
        .collect();
    push_all(table, groups)
}

fn oracle(s: &Settings, table: &mut Table) -> Result<()> {
    let beta = s.betas[0];
    match s.check {
        OracleCheck::Friction => {
            let traj = family(s)?.build(s.tau)?;
            let c = validate_friction(&s.cavity, &ThermalBath::new(beta)?, &traj, &s.fock, &s.quadrature)?;
            for r in &c.rows {
                table.push(vec![
                    r.epsilon.into(),
                    r.e_full.into(),
                    r.e_adiab.into(),
                    r.e_pert.into(),
                    r.ratio.into(),
                    c.richardson_ratio.into(),
                ]);
            }
        }
        OracleCheck::Identities => {
            let r = verify_trace_identities(beta, &s.fock, &s.cavity)?;
            for c in &r.checks {
                table.push(vec![
                    c.kind.name().into(),
                    c.i.into(),
                    c.j.map_or_else(|| Cell::from("-"), Cell::Int),
                    c.k.into(),
                    c.numeric.into(),
                    c.truncated_product.into(),
                    c.published.into(),
                    c.exact.into(),
                    c.published_deviation().into(),
                    c.exact_deviation().into(),
                ]);
            }
        }
    }
    Ok(())
}
