//! Otto-cycle thermodynamics: stroke energies, heat, work, efficiency or COP,
//! power and operating-mode classification.
//!
//! Stroke A thermalizes the long cavity (L₀) with the cold bath β_A, stroke B
//! compresses it to L₁, stroke C thermalizes with the hot bath β_C and stroke D
//! expands back along the reversed trajectory. Heat and work come from the
//! mode sums directly so that adding the static Casimir offsets to the stroke
//! energies cannot perturb them, not even in the last bit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::friction::{FrictionModel, FrictionResult};
use crate::quadrature::{pairwise_sum, QuadratureSpec};
use crate::spectrum::{casimir_energy, CavityConfig, ThermalBath};
use crate::trajectory::{reverse, Trajectory, TrajectoryFamily};

/// Relative disagreement allowed between the forward and reversed friction
/// energies before the cross-check is flagged.
pub const DIRECTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathPair {
    /// Cold bath.
    pub beta_a: f64,
    /// Hot bath.
    pub beta_c: f64,
}

impl BathPair {
    /// Requires β_A ≥ β_C > 0; β_A may be infinite.
    pub fn new(beta_a: f64, beta_c: f64) -> Result<Self> {
        if beta_c.is_nan() || beta_c <= 0.0 || beta_c.is_infinite() {
            return Err(Error::param("beta-c", format!("must be positive and finite, got {beta_c}")));
        }
        if beta_a.is_nan() || beta_a < beta_c {
            return Err(Error::param(
                "beta-a",
                format!("the cold bath needs beta_A >= beta_C, got {beta_a} < {beta_c}"),
            ));
        }
        Ok(Self { beta_a, beta_c })
    }

    pub fn from_ratio(beta_a: f64, ratio: f64) -> Result<Self> {
        Self::new(beta_a, ratio * beta_a)
    }

    pub fn ratio(&self) -> f64 {
        self.beta_c / self.beta_a
    }

    pub fn cold(&self) -> ThermalBath {
        ThermalBath { beta: self.beta_a }
    }

    pub fn hot(&self) -> ThermalBath {
        ThermalBath { beta: self.beta_c }
    }

    pub fn carnot_efficiency(&self) -> f64 {
        1.0 - self.beta_c / self.beta_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineKind {
    Engine,
    Refrigerator,
}

impl MachineKind {
    pub fn name(&self) -> &'static str {
        match self {
            MachineKind::Engine => "engine",
            MachineKind::Refrigerator => "refrigerator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingMode {
    Engine,
    Refrigerator,
    Dissipator,
    /// No net heat flow: the compression exactly matches the bath ratio.
    Idle,
}

impl OperatingMode {
    pub fn name(&self) -> &'static str {
        match self {
            OperatingMode::Engine => "engine",
            OperatingMode::Refrigerator => "refrigerator",
            OperatingMode::Dissipator => "dissipator",
            OperatingMode::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    pub include_casimir: bool,
    pub thermalization_time: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            include_casimir: false,
            thermalization_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Bath ratio outside the range where the adiabatic machine works.
    pub condition_warning: bool,
    pub tail_warning: bool,
    pub q_tail: f64,
    pub w_tail: f64,
    pub friction_tail_warning: bool,
    /// Q^Otto vanishes to rounding; the adiabatic ratio is taken as a limit.
    pub degenerate: bool,
    /// |Q| too small to divide by; `eta` is NaN.
    pub eta_undefined: bool,
    /// Relative difference between E_F^{β_C} on the reversed and forward strokes.
    pub direction_mismatch: f64,
    pub direction_warning: bool,
    pub perturbative_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub kind: MachineKind,
    pub e_a: f64,
    pub e_b: f64,
    pub e_c: f64,
    pub e_d: f64,
    pub q: f64,
    pub w: f64,
    /// Efficiency (engine) or COP (refrigerator).
    pub eta: f64,
    pub eta_adiabatic: f64,
    /// Expansion of `eta` to first order in the friction energies.
    pub eta_second_order: f64,
    pub q_adiabatic: f64,
    pub w_adiabatic: f64,
    /// W over the cycle time; NaN for adiabatic reports.
    pub power: f64,
    /// Q over the cycle time; NaN for adiabatic reports.
    pub heat_rate: f64,
    pub mode: OperatingMode,
    pub ef_a: f64,
    pub ef_c: f64,
    pub k_used: usize,
    pub stroke_time: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Geometric extrapolation of Σ_{k>K} from the last two terms.
pub fn geometric_tail(terms: &[f64]) -> f64 {
    let n = terms.len();
    if n == 0 {
        return 0.0;
    }
    let last = terms[n - 1];
    if last == 0.0 {
        return 0.0;
    }
    if n < 2 {
        return f64::INFINITY;
    }
    let r = last / terms[n - 2];
    if r > 0.0 && r < 1.0 {
        last.abs() * r / (1.0 - r)
    } else {
        f64::INFINITY
    }
}

struct OttoSums {
    e_a: f64,
    e_b: f64,
    e_c: f64,
    e_d: f64,
    q: f64,
    w: f64,
    q_tail: f64,
    w_tail: f64,
    scale: f64,
    limit_ratio: f64,
}

fn otto_sums(cfg: &CavityConfig, baths: &BathPair, kind: MachineKind) -> OttoSums {
    let k_max = cfg.n_modes;
    let cold = baths.cold();
    let hot = baths.hot();
    let mut ea = Vec::with_capacity(k_max);
    let mut eb = Vec::with_capacity(k_max);
    let mut ec = Vec::with_capacity(k_max);
    let mut ed = Vec::with_capacity(k_max);
    let mut qs = Vec::with_capacity(k_max);
    let mut ws = Vec::with_capacity(k_max);
    let mut scale = Vec::with_capacity(k_max);
    let mut lim_num = Vec::with_capacity(k_max);
    let mut lim_den = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let w0 = cfg.omega(k);
        let w1 = cfg.omega_compressed(k);
        let na = cold.occupation(w0);
        let nc = hot.occupation(w1);
        ea.push(w0 * na);
        eb.push(w1 * na);
        ec.push(w1 * nc);
        ed.push(w0 * nc);
        // First-order response of the occupation difference near the
        // matched point, where N^C(ω_k(L₁)) = N^A(ω_k).
        let weight = w1 * na * (na + 1.0);
        match kind {
            MachineKind::Engine => {
                qs.push(w1 * (nc - na));
                ws.push((w1 - w0) * (nc - na));
                lim_num.push((w1 - w0) * weight);
                lim_den.push(w1 * weight);
            }
            MachineKind::Refrigerator => {
                qs.push(w0 * (na - nc));
                ws.push((w1 - w0) * (na - nc));
                lim_num.push(w0 * weight);
                lim_den.push((w1 - w0) * weight);
            }
        }
        scale.push(w1 * (na + nc));
    }
    OttoSums {
        e_a: pairwise_sum(&ea),
        e_b: pairwise_sum(&eb),
        e_c: pairwise_sum(&ec),
        e_d: pairwise_sum(&ed),
        q: pairwise_sum(&qs),
        w: pairwise_sum(&ws),
        q_tail: geometric_tail(&qs),
        w_tail: geometric_tail(&ws),
        scale: pairwise_sum(&scale),
        limit_ratio: pairwise_sum(&lim_num) / pairwise_sum(&lim_den),
    }
}

fn condition_ok(cfg: &CavityConfig, baths: &BathPair, kind: MachineKind) -> bool {
    let slack = 1e-12;
    let r = baths.ratio();
    let compressed = 1.0 - cfg.epsilon;
    match kind {
        MachineKind::Engine => r <= compressed * (1.0 + slack),
        MachineKind::Refrigerator => r >= compressed * (1.0 - slack) && r <= 1.0,
    }
}

/// Friction models for the compression stroke and its time reverse.
#[derive(Debug, Clone)]
pub struct StrokePair {
    pub forward: FrictionModel,
    pub reverse: FrictionModel,
    pub stroke_time: f64,
}

impl StrokePair {
    pub fn new(cfg: &CavityConfig, traj: &Trajectory, spec: &QuadratureSpec) -> Result<Self> {
        if !traj.is_normalized() {
            return Err(Error::Shape(format!(
                "cycle strokes need δ(start) = 0 and δ(end) = 1, got {} and {}",
                traj.delta(traj.t_start()),
                traj.delta(traj.t_end())
            )));
        }
        let (forward, reverse) = rayon::join(
            || FrictionModel::new(cfg, traj, spec),
            || FrictionModel::new(cfg, &reverse(traj), spec),
        );
        Ok(Self {
            forward: forward?,
            reverse: reverse?,
            stroke_time: traj.duration(),
        })
    }
}

struct Friction {
    a: FrictionResult,
    c: FrictionResult,
    mismatch: f64,
    mismatch_tol: f64,
}

fn evaluate_friction(pair: &StrokePair, baths: &BathPair, epsilon: f64) -> Result<Friction> {
    let a = pair.forward.evaluate(&baths.cold(), epsilon)?;
    let c = pair.reverse.evaluate(&baths.hot(), epsilon)?;
    let c_fwd = pair.forward.evaluate(&baths.hot(), epsilon)?;
    let diff = (c.value - c_fwd.value).abs();
    let mismatch = if c_fwd.value != 0.0 {
        diff / c_fwd.value.abs()
    } else {
        diff
    };
    let mismatch_tol =
        DIRECTION_TOL + 10.0 * (c.quad_error + c_fwd.quad_error) / c_fwd.value.abs().max(f64::MIN_POSITIVE);
    Ok(Friction {
        a,
        c,
        mismatch,
        mismatch_tol,
    })
}

fn build_report(
    cfg: &CavityConfig,
    baths: &BathPair,
    kind: MachineKind,
    friction: Option<(&StrokePair, f64)>,
    opts: &CycleOptions,
) -> Result<CycleReport> {
    let sums = otto_sums(cfg, baths, kind);
    let mut diag = Diagnostics {
        condition_warning: !condition_ok(cfg, baths, kind),
        q_tail: sums.q_tail,
        w_tail: sums.w_tail,
        tail_warning: sums.q_tail > cfg.tail_tol * sums.q.abs()
            || sums.w_tail > cfg.tail_tol * sums.w.abs(),
        perturbative_warning: cfg.perturbative_warning(),
        ..Diagnostics::default()
    };
    let tiny = 64.0 * f64::EPSILON * sums.scale;
    diag.degenerate = sums.q.abs() <= tiny;
    let eta_adiabatic = if diag.degenerate {
        sums.limit_ratio
    } else {
        sums.q_adiabatic_ratio(kind)
    };

    let (ef_a, ef_c, stroke_time) = match friction {
        Some((pair, _)) => {
            let f = evaluate_friction(pair, baths, cfg.epsilon)?;
            diag.direction_mismatch = f.mismatch;
            diag.direction_warning = f.mismatch > f.mismatch_tol;
            diag.friction_tail_warning = f.a.truncation_warning || f.c.truncation_warning;
            (f.a.value, f.c.value, Some(pair.stroke_time))
        }
        None => (0.0, 0.0, None),
    };

    let (c0, c1) = if opts.include_casimir {
        (casimir_energy(cfg.l0)?, casimir_energy(cfg.l1())?)
    } else {
        (0.0, 0.0)
    };
    let e_a = sums.e_a + c0;
    let e_b = sums.e_b + ef_a + c1;
    let e_c = sums.e_c + c1;
    let e_d = sums.e_d + ef_c + c0;

    let (q, w, eta_second_order) = match kind {
        MachineKind::Engine => (
            sums.q - ef_a,
            sums.w - (ef_a + ef_c),
            eta_adiabatic - (ef_a + ef_c) / sums.q,
        ),
        MachineKind::Refrigerator => (
            sums.q - ef_c,
            sums.w + ef_a + ef_c,
            eta_adiabatic * (1.0 - ef_c / sums.q - (ef_a + ef_c) / sums.w),
        ),
    };
    let eta = if friction.is_none() {
        eta_adiabatic
    } else if q.abs() <= tiny || (kind == MachineKind::Refrigerator && w.abs() <= tiny) {
        diag.eta_undefined = true;
        f64::NAN
    } else {
        match kind {
            MachineKind::Engine => w / q,
            MachineKind::Refrigerator => q / w,
        }
    };
    if eta.is_nan() {
        diag.eta_undefined = true;
    }

    let mode = if q.abs() <= tiny && friction.is_none() {
        OperatingMode::Idle
    } else {
        match kind {
            MachineKind::Engine if w > 0.0 && q > 0.0 => OperatingMode::Engine,
            MachineKind::Refrigerator if q > 0.0 && w > 0.0 => OperatingMode::Refrigerator,
            _ => OperatingMode::Dissipator,
        }
    };
    let (power, heat_rate) = match stroke_time {
        Some(t) => {
            let p = cycle_power(w, t, opts.thermalization_time)?;
            (p, cycle_power(q, t, opts.thermalization_time)?)
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(CycleReport {
        kind,
        e_a,
        e_b,
        e_c,
        e_d,
        q,
        w,
        eta,
        eta_adiabatic,
        eta_second_order: if friction.is_some() {
            eta_second_order
        } else {
            eta_adiabatic
        },
        q_adiabatic: sums.q,
        w_adiabatic: sums.w,
        power,
        heat_rate,
        mode,
        ef_a,
        ef_c,
        k_used: cfg.n_modes,
        stroke_time,
        diagnostics: diag,
    })
}

impl OttoSums {
    fn q_adiabatic_ratio(&self, kind: MachineKind) -> f64 {
        match kind {
            MachineKind::Engine => self.w / self.q,
            MachineKind::Refrigerator => self.q / self.w,
        }
    }
}

pub fn adiabatic_engine(cfg: &CavityConfig, baths: &BathPair) -> Result<CycleReport> {
    build_report(cfg, baths, MachineKind::Engine, None, &CycleOptions::default())
}

pub fn adiabatic_refrigerator(cfg: &CavityConfig, baths: &BathPair) -> Result<CycleReport> {
    build_report(cfg, baths, MachineKind::Refrigerator, None, &CycleOptions::default())
}

pub fn nonadiabatic_engine(
    cfg: &CavityConfig,
    baths: &BathPair,
    traj: &Trajectory,
    spec: &QuadratureSpec,
) -> Result<CycleReport> {
    let pair = StrokePair::new(cfg, traj, spec)?;
    cycle_with(cfg, baths, MachineKind::Engine, Some(&pair), &CycleOptions::default())
}

pub fn nonadiabatic_refrigerator(
    cfg: &CavityConfig,
    baths: &BathPair,
    traj: &Trajectory,
    spec: &QuadratureSpec,
) -> Result<CycleReport> {
    let pair = StrokePair::new(cfg, traj, spec)?;
    cycle_with(cfg, baths, MachineKind::Refrigerator, Some(&pair), &CycleOptions::default())
}

/// General entry point; `pair = None` gives the adiabatic cycle. The pair may
/// have been built for more modes than `cfg.n_modes`.
pub fn cycle_with(
    cfg: &CavityConfig,
    baths: &BathPair,
    kind: MachineKind,
    pair: Option<&StrokePair>,
    opts: &CycleOptions,
) -> Result<CycleReport> {
    match pair {
        Some(p) if p.forward.n_modes() != cfg.n_modes => {
            if p.forward.n_modes() < cfg.n_modes {
                return Err(Error::param("modes", "stroke tables were built for fewer modes"));
            }
            let cut = StrokePair {
                forward: p.forward.truncated(cfg.n_modes),
                reverse: p.reverse.truncated(cfg.n_modes),
                stroke_time: p.stroke_time,
            };
            build_report(cfg, baths, kind, Some((&cut, cfg.epsilon)), opts)
        }
        Some(p) => build_report(cfg, baths, kind, Some((p, cfg.epsilon)), opts),
        None => build_report(cfg, baths, kind, None, opts),
    }
}

/// W / (2τ + t_th): both unitary strokes last τ.
pub fn power(report: &CycleReport, tau: f64, thermalization_time: f64) -> Result<f64> {
    cycle_power(report.w, tau, thermalization_time)
}

fn cycle_power(x: f64, tau: f64, thermalization_time: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    if !(thermalization_time >= 0.0) {
        return Err(Error::param(
            "thermalization-time",
            format!("must be non-negative, got {thermalization_time}"),
        ));
    }
    Ok(x / (2.0 * tau + thermalization_time))
}

/// Least-squares slope of log|y| against log x.
pub fn scaling_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y != 0.0)
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub beta_a: f64,
    pub ratios: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub taus: Vec<f64>,
    pub kind: MachineKind,
    pub options: CycleOptions,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub ratio: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub report: std::result::Result<CycleReport, String>,
}

/// One report per (ratio, ε, τ), ordered by ratio, then ε, then τ ascending.
/// Friction tables are built once per τ and reused for every bath and ε.
pub fn sweep(
    cfg: &CavityConfig,
    grid: &SweepSpec,
    family: &TrajectoryFamily,
    spec: &QuadratureSpec,
) -> Result<Vec<SweepCell>> {
    if grid.ratios.is_empty() || grid.epsilons.is_empty() || grid.taus.is_empty() {
        return Err(Error::param("grid", "sweep grids must be non-empty"));
    }
    let mut taus = grid.taus.clone();
    taus.sort_by(f64::total_cmp);
    let pairs: Vec<std::result::Result<StrokePair, String>> = taus
        .par_iter()
        .map(|&tau| {
            family
                .build(tau)
                .and_then(|t| StrokePair::new(cfg, &t, spec))
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut cells = Vec::with_capacity(grid.ratios.len() * grid.epsilons.len() * taus.len());
    for &ratio in &grid.ratios {
        for &eps in &grid.epsilons {
            for (tau, pair) in taus.iter().zip(&pairs) {
                let report = (|| -> std::result::Result<CycleReport, String> {
                    let pair = pair.as_ref().map_err(Clone::clone)?;
                    let c = cfg.with_epsilon(eps).map_err(|e| e.to_string())?;
                    let baths = BathPair::from_ratio(grid.beta_a, ratio).map_err(|e| e.to_string())?;
                    cycle_with(&c, &baths, grid.kind, Some(pair), &grid.options).map_err(|e| e.to_string())
                })();
                cells.push(SweepCell {
                    ratio,
                    epsilon: eps,
                    tau: *tau,
                    report,
                });
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::quintic;
    use proptest::prelude::*;

    fn unit(eps: f64, k: usize) -> CavityConfig {
        CavityConfig::unit_fundamental(eps, k).unwrap()
    }

    #[test]
    fn adiabatic_engine_efficiency_is_compression() {
        for eps in [0.01, 0.06] {
            let r = adiabatic_engine(&unit(eps, 64), &BathPair::new(2.0, 0.5).unwrap()).unwrap();
            assert!((r.eta - eps).abs() < 1e-12);
            assert_eq!(r.mode, OperatingMode::Engine);
            assert!(r.q > 0.0 && r.w > 0.0);
            assert!(!r.diagnostics.condition_warning);
        }
    }

    #[test]
    fn adiabatic_refrigerator_cop() {
        let eps = 0.06;
        let r = adiabatic_refrigerator(&unit(eps, 64), &BathPair::new(2.0, 1.97).unwrap()).unwrap();
        assert!((r.eta - (1.0 / eps - 1.0)).abs() < 1e-12);
        assert!((r.eta - 15.666_666_666_666_666).abs() < 1e-10);
        assert_eq!(r.mode, OperatingMode::Refrigerator);
    }

    #[test]
    fn carnot_matching() {
        let baths = BathPair::new(2.0, 1.5).unwrap();
        let eps = 1.0 - baths.ratio();
        let r = adiabatic_engine(&unit(eps, 64), &baths).unwrap();
        assert!(r.diagnostics.degenerate);
        assert!((r.eta - baths.carnot_efficiency()).abs() < 1e-12);
        assert_eq!(r.mode, OperatingMode::Idle);

        // Refrigerator at its boundary: no heat is pumped.
        let f = adiabatic_refrigerator(&unit(eps, 64), &baths).unwrap();
        assert!(f.q.abs() < 1e-14);
    }

    #[test]
    fn equal_baths_do_nothing() {
        let r = adiabatic_engine(&unit(0.05, 32), &BathPair::new(1.0, 1.0).unwrap()).unwrap();
        // With equal β the compressed cavity is colder, so heat flows the wrong way.
        assert!(r.q < 0.0 && r.diagnostics.condition_warning);
        assert!(BathPair::new(1.0, 2.0).is_err());
        assert!(BathPair::new(1.0, 0.0).is_err());
    }

    #[test]
    fn stroke_identities() {
        let cfg = unit(0.01, 40);
        let baths = BathPair::new(3.0, 1.0).unwrap();
        let pair = StrokePair::new(&cfg, &quintic(1.0).unwrap(), &QuadratureSpec::default()).unwrap();
        for kind in [MachineKind::Engine, MachineKind::Refrigerator] {
            for casimir in [false, true] {
                let opts = CycleOptions {
                    include_casimir: casimir,
                    ..CycleOptions::default()
                };
                let r = cycle_with(&cfg, &baths, kind, Some(&pair), &opts).unwrap();
                let (q, w) = match kind {
                    MachineKind::Engine => (r.e_c - r.e_b, (r.e_a - r.e_b) + (r.e_c - r.e_d)),
                    MachineKind::Refrigerator => (r.e_a - r.e_d, (r.e_b - r.e_a) + (r.e_d - r.e_c)),
                };
                assert!((q - r.q).abs() <= 1e-12 * r.q.abs(), "{kind:?} casimir={casimir}");
                assert!((w - r.w).abs() <= 1e-12 * r.w.abs(), "{kind:?} casimir={casimir}");
            }
        }
    }

    #[test]
    fn casimir_offsets_leave_q_and_w_untouched() {
        let cfg = unit(0.01, 32);
        let baths = BathPair::new(2.0, 0.66).unwrap();
        let pair = StrokePair::new(&cfg, &quintic(0.7).unwrap(), &QuadratureSpec::default()).unwrap();
        let off = cycle_with(&cfg, &baths, MachineKind::Engine, Some(&pair), &CycleOptions::default()).unwrap();
        let on = cycle_with(
            &cfg,
            &baths,
            MachineKind::Engine,
            Some(&pair),
            &CycleOptions {
                include_casimir: true,
                ..CycleOptions::default()
            },
        )
        .unwrap();
        assert_eq!(off.q.to_bits(), on.q.to_bits());
        assert_eq!(off.w.to_bits(), on.w.to_bits());
        assert_ne!(off.e_a, on.e_a);
    }

    #[test]
    fn friction_lowers_efficiency() {
        let cfg = unit(0.01, 40);
        let baths = BathPair::new(2.0, 1.0).unwrap();
        let spec = QuadratureSpec::default();
        let r = nonadiabatic_engine(&cfg, &baths, &quintic(1.0).unwrap(), &spec).unwrap();
        assert!(r.eta < r.eta_adiabatic);
        assert!(r.ef_a > 0.0 && r.ef_c > 0.0);
        assert!(!r.diagnostics.direction_warning, "{}", r.diagnostics.direction_mismatch);
        assert!((r.power - r.w / 2.0).abs() < 1e-15);

        let slow = nonadiabatic_engine(&cfg, &baths, &quintic(200.0).unwrap(), &spec).unwrap();
        let adiabatic = adiabatic_engine(&cfg, &baths).unwrap();
        assert!((slow.eta - adiabatic.eta).abs() < 1e-9);

        let fast = nonadiabatic_engine(&cfg, &baths, &quintic(0.1).unwrap(), &spec).unwrap();
        assert!(fast.w < 0.0);
        assert_eq!(fast.mode, OperatingMode::Dissipator);

        let fr = nonadiabatic_refrigerator(&cfg, &BathPair::new(2.0, 1.995).unwrap(), &quintic(1.0).unwrap(), &spec).unwrap();
        assert!(fr.eta <= fr.eta_adiabatic);
        let fr_fast = nonadiabatic_refrigerator(&cfg, &BathPair::new(2.0, 1.995).unwrap(), &quintic(0.1).unwrap(), &spec).unwrap();
        assert!(fr_fast.q < 0.0);
        assert_eq!(fr_fast.mode, OperatingMode::Dissipator);
    }

    #[test]
    fn second_order_error_is_cubic() {
        let baths = BathPair::new(2.0, 1.0).unwrap();
        let spec = QuadratureSpec::default();
        let pair = StrokePair::new(&unit(0.01, 32), &quintic(2.0).unwrap(), &spec).unwrap();
        let gap = |eps: f64| {
            let r = cycle_with(&unit(eps, 32), &baths, MachineKind::Engine, Some(&pair), &CycleOptions::default()).unwrap();
            (r.eta - r.eta_second_order).abs()
        };
        let (g1, g2, g3) = (gap(0.01), gap(0.005), gap(0.0025));
        for ratio in [g1 / g2, g2 / g3] {
            assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
        }
    }

    #[test]
    fn power_examples() {
        let cfg = unit(0.01, 16);
        let r = adiabatic_engine(&cfg, &BathPair::new(2.0, 1.0).unwrap()).unwrap();
        assert!(r.power.is_nan());
        let p1 = power(&r, 10.0, 0.0).unwrap();
        let p2 = power(&r, 20.0, 0.0).unwrap();
        assert!((p1 / p2 - 2.0).abs() < 1e-15);
        assert_eq!(power(&r, 1.0, 2.0).unwrap(), r.w / 4.0);
        let mut zero = r.clone();
        zero.w = 0.0;
        assert_eq!(power(&zero, 1.0, 0.0).unwrap(), 0.0);
        assert!(power(&r, 0.0, 0.0).is_err());
        assert!(power(&r, 1.0, -1.0).is_err());
    }

    #[test]
    fn tails() {
        let terms: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        assert!((geometric_tail(&terms) - 0.5f64.powi(9)).abs() < 1e-15);
        assert_eq!(geometric_tail(&[1.0, 0.0]), 0.0);
        assert!(geometric_tail(&[1.0, 1.0]).is_infinite());
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(-5)).collect();
        assert!((scaling_exponent(&xs, &ys) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_direct_call() {
        let cfg = unit(0.01, 24);
        let spec = QuadratureSpec::default();
        let grid = SweepSpec {
            beta_a: 2.0,
            ratios: vec![0.5, 0.33],
            epsilons: vec![0.01, 0.02],
            taus: vec![3.0, 1.0],
            kind: MachineKind::Engine,
            options: CycleOptions::default(),
        };
        let cells = sweep(&cfg, &grid, &TrajectoryFamily::Quintic, &spec).unwrap();
        assert_eq!(cells.len(), 8);
        assert_eq!((cells[0].ratio, cells[0].epsilon, cells[0].tau), (0.5, 0.01, 1.0));
        assert_eq!((cells[1].ratio, cells[1].epsilon, cells[1].tau), (0.5, 0.01, 3.0));
        assert_eq!((cells[2].epsilon, cells[2].tau), (0.02, 1.0));
        let direct = nonadiabatic_engine(&cfg.with_epsilon(0.02).unwrap(), &BathPair::from_ratio(2.0, 0.5).unwrap(), &quintic(1.0).unwrap(), &spec).unwrap();
        let cell = cells[2].report.as_ref().unwrap();
        assert_eq!(cell.q.to_bits(), direct.q.to_bits());
        assert_eq!(cell.w.to_bits(), direct.w.to_bits());

        let bad = SweepSpec {
            epsilons: vec![1.5],
            ..grid.clone()
        };
        let cells = sweep(&cfg, &bad, &TrajectoryFamily::Quintic, &spec).unwrap();
        assert!(cells.iter().all(|c| c.report.is_err()));
        assert!(sweep(&cfg, &SweepSpec { taus: vec![], ..grid }, &TrajectoryFamily::Quintic, &spec).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adiabatic_engine_always_eps(eps in 0.001f64..0.5, beta_a in 0.2f64..20.0, r in 0.05f64..0.95) {
            let baths = BathPair::from_ratio(beta_a, r).unwrap();
            let rep = adiabatic_engine(&unit(eps, 64), &baths).unwrap();
            prop_assert!((rep.eta - eps).abs() < 1e-12);
        }

        #[test]
        fn refrigerator_cop_grows_with_bath_similarity(r1 in 0.995f64..0.9975, dr in 1e-4f64..0.002) {
            let cfg = unit(0.005, 32);
            let pair = StrokePair::new(&cfg, &quintic(1.0).unwrap(), &QuadratureSpec::default()).unwrap();
            let a = cycle_with(&cfg, &BathPair::from_ratio(2.0, r1).unwrap(), MachineKind::Refrigerator, Some(&pair), &CycleOptions::default()).unwrap();
            let b = cycle_with(&cfg, &BathPair::from_ratio(2.0, (r1 + dr).min(1.0)).unwrap(), MachineKind::Refrigerator, Some(&pair), &CycleOptions::default()).unwrap();
            prop_assert!(b.eta >= a.eta);
        }
    }
}
