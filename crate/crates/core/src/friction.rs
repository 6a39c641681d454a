//! Dynamical-Casimir friction energy.
//!
//! The double time integral of the second-order kernel factorizes into
//! |A(Ω)|² with A(Ω) = ∫ δ̇(t) e^{iΩt} dt. For the equidistant spectrum every
//! frequency that appears is a harmonic nω₁ with 1 ≤ n ≤ 2K, so one table of
//! amplitudes per trajectory serves every bath temperature and every ε.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{
    integrate_1d_knots, integrate_2d_oracle, integrate_multi, pairwise_sum, QuadratureSpec,
};
use crate::spectrum::{coupling_g, mode_frequency_derivative, CavityConfig, ThermalBath};
use crate::trajectory::Trajectory;

/// Grid used to locate the extrema of δ̈ for the bound.
pub const BOUND_GRID: usize = 10_000;

/// Cosine and sine transforms of δ̇ at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralAmplitudes {
    pub omega: f64,
    pub c: f64,
    pub s: f64,
    /// Bound on the error of the complex amplitude C + iS.
    pub err: f64,
    /// True when the frequency was too high to resolve and the amplitude was
    /// replaced by zero with an integration-by-parts error bound.
    pub asymptotic: bool,
}

impl SpectralAmplitudes {
    pub fn power(&self) -> f64 {
        self.c * self.c + self.s * self.s
    }

    /// Error bound on [`power`](Self::power).
    pub fn power_err(&self) -> f64 {
        2.0 * self.c.hypot(self.s) * self.err + self.err * self.err
    }
}

fn knots(traj: &Trajectory) -> Vec<f64> {
    let mut k = Vec::with_capacity(traj.breakpoints().len() + 2);
    k.push(traj.t_start());
    k.extend_from_slice(traj.breakpoints());
    k.push(traj.t_end());
    k
}

fn knots_upto(traj: &Trajectory, t: f64) -> Vec<f64> {
    let mut k = vec![traj.t_start()];
    k.extend(traj.breakpoints().iter().copied().filter(|&b| b < t));
    k.push(t);
    k
}

/// ∫|δ⃛| over the domain, used by the high-frequency amplitude bound.
fn jerk_variation(traj: &Trajectory, spec: &QuadratureSpec) -> Result<f64> {
    Ok(integrate_1d_knots(|t| traj.d3delta(t).abs(), &knots(traj), 0.0, spec)?.value)
}

fn asymptotic_amplitude(traj: &Trajectory, omega: f64, jerk: f64) -> SpectralAmplitudes {
    let a = traj.derivs(traj.t_start());
    let b = traj.derivs(traj.t_end());
    let err = (a.d1.abs() + b.d1.abs()) / omega + (a.d2.abs() + b.d2.abs() + jerk) / (omega * omega);
    SpectralAmplitudes {
        omega,
        c: 0.0,
        s: 0.0,
        err,
        asymptotic: true,
    }
}

fn resolvable(traj: &Trajectory, omega: f64, spec: &QuadratureSpec) -> bool {
    spec.panels_for(traj.duration(), omega) <= spec.max_panels / 4
}

pub fn spectral_amplitudes(
    traj: &Trajectory,
    omega: f64,
    spec: &QuadratureSpec,
) -> Result<SpectralAmplitudes> {
    if !(omega >= 0.0) {
        return Err(Error::param("omega", format!("must be non-negative, got {omega}")));
    }
    if !resolvable(traj, omega, spec) {
        return Ok(asymptotic_amplitude(traj, omega, jerk_variation(traj, spec)?));
    }
    amplitudes_by_quadrature(traj, omega, spec)
}

fn amplitudes_by_quadrature(
    traj: &Trajectory,
    omega: f64,
    spec: &QuadratureSpec,
) -> Result<SpectralAmplitudes> {
    let [c, s] = integrate_multi(
        |t| {
            let v = traj.ddelta(t);
            let (sn, cs) = (omega * t).sin_cos();
            [v * cs, v * sn]
        },
        &knots(traj),
        omega,
        spec,
    )?;
    Ok(SpectralAmplitudes {
        omega,
        c: c.value,
        s: s.value,
        err: c.error + s.error,
        asymptotic: false,
    })
}

/// Running integrals I_n(t), J_n(t) of δ̇ against cos and sin of nπt/L₀ from
/// the start of the domain up to t.
pub fn partial_spectral_integral(
    traj: &Trajectory,
    n: usize,
    l0: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::param("n", "harmonic index starts at 1"));
    }
    if !(l0 > 0.0) {
        return Err(Error::param("L0", format!("must be positive, got {l0}")));
    }
    traj.derivs_checked(t)?;
    if t == traj.t_start() {
        return Ok((0.0, 0.0));
    }
    let omega = n as f64 * std::f64::consts::PI / l0;
    let [c, s] = integrate_multi(
        |x| {
            let v = traj.ddelta(x);
            let (sn, cs) = (omega * x).sin_cos();
            [v * cs, v * sn]
        },
        &knots_upto(traj, t),
        omega,
        spec,
    )?;
    Ok((c.value, s.value))
}

/// I_n, J_n on an ascending grid of times, accumulated interval by interval.
pub fn partial_spectral_trace(
    traj: &Trajectory,
    n: usize,
    l0: f64,
    times: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::param("n", "harmonic index starts at 1"));
    }
    if !(l0 > 0.0) {
        return Err(Error::param("L0", format!("must be positive, got {l0}")));
    }
    let omega = n as f64 * std::f64::consts::PI / l0;
    let mut out = Vec::with_capacity(times.len());
    let (mut ci, mut si) = (0.0, 0.0);
    let mut last = traj.t_start();
    for &t in times {
        traj.derivs_checked(t)?;
        if t < last {
            return Err(Error::param("times", "must be ascending"));
        }
        if t > last {
            let mut k = vec![last];
            k.extend(traj.breakpoints().iter().copied().filter(|&b| b > last && b < t));
            k.push(t);
            let [c, s] = integrate_multi(
                |x| {
                    let v = traj.ddelta(x);
                    let (sn, cs) = (omega * x).sin_cos();
                    [v * cs, v * sn]
                },
                &k,
                omega,
                spec,
            )?;
            ci += c.value;
            si += s.value;
            last = t;
        }
        out.push((ci, si));
    }
    Ok(out)
}

/// Amplitudes at the harmonics nω₁, n = 1..=len.
#[derive(Debug, Clone)]
pub struct SpectralTable {
    omega1: f64,
    amps: Vec<SpectralAmplitudes>,
}

impl SpectralTable {
    pub fn build(traj: &Trajectory, omega1: f64, harmonics: usize, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let needs_bound = (1..=harmonics).any(|n| !resolvable(traj, n as f64 * omega1, spec));
        let jerk = if needs_bound {
            jerk_variation(traj, spec)?
        } else {
            0.0
        };
        let amps = (1..=harmonics)
            .into_par_iter()
            .map(|n| {
                let omega = n as f64 * omega1;
                if resolvable(traj, omega, spec) {
                    amplitudes_by_quadrature(traj, omega, spec)
                } else {
                    Ok(asymptotic_amplitude(traj, omega, jerk))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { omega1, amps })
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    pub fn harmonics(&self) -> usize {
        self.amps.len()
    }

    /// Amplitudes at nω₁, n ≥ 1.
    pub fn get(&self, n: usize) -> &SpectralAmplitudes {
        &self.amps[n - 1]
    }

    pub fn power(&self, n: usize) -> f64 {
        self.amps[n - 1].power()
    }

    pub fn power_err(&self, n: usize) -> f64 {
        self.amps[n - 1].power_err()
    }

    pub fn any_asymptotic(&self) -> bool {
        self.amps.iter().any(|a| a.asymptotic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTerms {
    pub k: usize,
    pub diag: f64,
    pub create: f64,
    pub scatter: f64,
}

impl ModeTerms {
    pub fn total(&self) -> f64 {
        self.diag + self.create + self.scatter
    }

    fn scaled(&self, f: f64) -> Self {
        Self {
            k: self.k,
            diag: self.diag * f,
            create: self.create * f,
            scatter: self.scatter * f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionResult {
    pub value: f64,
    pub per_mode: Vec<ModeTerms>,
    pub bound: Option<f64>,
    pub k_used: usize,
    pub tail_estimate: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// Accumulated quadrature error propagated into `value`.
    pub quad_error: f64,
    pub truncation_warning: bool,
}

impl FrictionResult {
    /// The same result for another compression ratio; every term is O(ε²).
    pub fn rescaled(&self, epsilon: f64) -> Self {
        let f = (epsilon / self.epsilon).powi(2);
        Self {
            value: self.value * f,
            per_mode: self.per_mode.iter().map(|m| m.scaled(f)).collect(),
            bound: self.bound.map(|b| b * f),
            k_used: self.k_used,
            tail_estimate: self.tail_estimate * f,
            beta: self.beta,
            epsilon,
            quad_error: self.quad_error * f,
            truncation_warning: self.truncation_warning,
        }
    }

    /// Running sums of the per-mode totals.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.per_mode
            .iter()
            .map(|m| {
                acc += m.total();
                acc
            })
            .collect()
    }
}

/// Tail of Σ_{k > K} from a power-law fit to the last few per-mode totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub estimate: f64,
    pub exponent: Option<f64>,
}

pub fn power_law_tail(values: &[f64], noise: &[f64]) -> TailFit {
    let n = values.len();
    let take = n.min(8);
    let lo = n - take;
    let tail_vals = &values[lo..];
    if tail_vals.iter().zip(&noise[lo..]).all(|(v, e)| v.abs() <= 10.0 * e) {
        return TailFit {
            estimate: 0.0,
            exponent: None,
        };
    }
    let pts: Vec<(f64, f64)> = tail_vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (((lo + i + 1) as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return TailFit {
            estimate: f64::INFINITY,
            exponent: None,
        };
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let p = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let a = (sy - p * sx) / m;
    if !(p < -1.0) {
        return TailFit {
            estimate: f64::INFINITY,
            exponent: Some(p),
        };
    }
    let start = n as f64 + 0.5;
    TailFit {
        estimate: a.exp() * start.powf(p + 1.0) / (-p - 1.0),
        exponent: Some(p),
    }
}

/// Location of the single interior maximum and minimum of δ̈.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JerkExtrema {
    pub t_max: f64,
    pub t_min: f64,
    pub d2_max: f64,
    pub d2_min: f64,
}

impl JerkExtrema {
    pub fn prefactor(&self) -> f64 {
        (self.d2_max - self.d2_min).powi(2)
    }
}

pub fn acceleration_extrema(traj: &Trajectory) -> Result<JerkExtrema> {
    let (a, b) = (traj.t_start(), traj.t_end());
    let grid: Vec<f64> = (0..=BOUND_GRID)
        .map(|i| a + (b - a) * i as f64 / BOUND_GRID as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&t| traj.d2delta(t)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Shape("δ̈ vanishes identically".into()));
    }
    let end_tol = 1e-9 * scale;
    if vals[0].abs() > end_tol || vals[BOUND_GRID].abs() > end_tol {
        return Err(Error::Shape(format!(
            "δ̈ must vanish at both ends (got {:e} and {:e})",
            vals[0], vals[BOUND_GRID]
        )));
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..BOUND_GRID {
        let (l, c, r) = (vals[i - 1], vals[i], vals[i + 1]);
        if c > l && c >= r {
            maxima.push(i);
        } else if c < l && c <= r {
            minima.push(i);
        }
    }
    if maxima.len() != 1 || minima.len() != 1 {
        return Err(Error::Shape(format!(
            "δ̈ must have exactly one interior maximum and one minimum, found {} and {}",
            maxima.len(),
            minima.len()
        )));
    }
    let refine = |i: usize, sign: f64| {
        let f = |t: f64| -sign * traj.d2delta(t);
        golden_min(f, grid[i - 1], grid[i + 1])
    };
    let t_max = refine(maxima[0], 1.0);
    let t_min = refine(minima[0], -1.0);
    Ok(JerkExtrema {
        t_max,
        t_min,
        d2_max: traj.d2delta(t_max),
        d2_min: traj.d2delta(t_min),
    })
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Mode sum of the bound per unit ε² and per unit (δ̈_max − δ̈_min)².
pub fn bound_mode_sum(l0: f64, n_modes: usize, bath: &ThermalBath) -> Result<f64> {
    let omega1 = std::f64::consts::PI / l0;
    let w = |k: usize| k as f64 * omega1;
    let occ: Vec<f64> = (1..=n_modes).map(|k| bath.occupation(w(k))).collect();
    let mut terms = Vec::with_capacity(n_modes);
    for k in 1..=n_modes {
        let wk = w(k);
        let dw = mode_frequency_derivative(k, l0)?;
        let nk = occ[k - 1];
        let mut row = Vec::with_capacity(n_modes);
        row.push(l0 * l0 * dw * dw / (16.0 * wk.powi(5)) * (2.0 * nk + 1.0));
        for j in (1..=n_modes).filter(|&j| j != k) {
            let wj = w(j);
            let nj = occ[j - 1];
            let g2 = coupling_g(j, k).powi(2);
            let sum = wk + wj;
            let diff = wk - wj;
            assert!(diff != 0.0, "degenerate mode pair ({k}, {j})");
            row.push(
                g2 / wj
                    * (diff * diff / sum.powi(4) * (nk + nj + 1.0)
                        + sum * sum / diff.powi(4) * (nj - nk)),
            );
        }
        terms.push(pairwise_sum(&row));
    }
    Ok(pairwise_sum(&terms))
}

/// Upper bound on the friction energy, including the ε² factor.
pub fn friction_bound(cfg: &CavityConfig, bath: &ThermalBath, traj: &Trajectory) -> Result<f64> {
    let ext = acceleration_extrema(traj)?;
    Ok(cfg.epsilon * cfg.epsilon * ext.prefactor() * bound_mode_sum(cfg.l0, cfg.n_modes, bath)?)
}

/// Spectral table plus geometry, reusable across baths and compression ratios.
#[derive(Debug, Clone)]
pub struct FrictionModel {
    l0: f64,
    n_modes: usize,
    tail_tol: f64,
    table: SpectralTable,
    extrema: Option<JerkExtrema>,
}

impl FrictionModel {
    pub fn new(cfg: &CavityConfig, traj: &Trajectory, spec: &QuadratureSpec) -> Result<Self> {
        let table = SpectralTable::build(traj, cfg.omega1(), 2 * cfg.n_modes, spec)?;
        Ok(Self {
            l0: cfg.l0,
            n_modes: cfg.n_modes,
            tail_tol: cfg.tail_tol,
            table,
            extrema: acceleration_extrema(traj).ok(),
        })
    }

    pub fn table(&self) -> &SpectralTable {
        &self.table
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Same table, fewer modes.
    pub fn truncated(&self, n_modes: usize) -> Self {
        assert!(n_modes >= 1 && n_modes <= self.n_modes);
        Self {
            n_modes,
            ..self.clone()
        }
    }

    pub fn evaluate(&self, bath: &ThermalBath, epsilon: f64) -> Result<FrictionResult> {
        let k_max = self.n_modes;
        let omega1 = self.table.omega1();
        let w = |k: usize| k as f64 * omega1;
        let occ: Vec<f64> = (1..=k_max).map(|k| bath.occupation(w(k))).collect();

        let per: Vec<(ModeTerms, f64)> = (1..=k_max)
            .map(|k| -> Result<(ModeTerms, f64)> {
                let wk = w(k);
                let nk = occ[k - 1];
                let dw = mode_frequency_derivative(k, self.l0)?;
                let shape = dw * dw * self.l0 * self.l0 / (wk * wk);
                let pre = wk / 4.0;
                let c_diag = pre * shape * (2.0 * nk + 1.0);
                let diag = c_diag * self.table.power(2 * k);
                let mut err = c_diag.abs() * self.table.power_err(2 * k);
                let mut create = Vec::with_capacity(k_max);
                let mut scatter = Vec::with_capacity(k_max);
                for j in (1..=k_max).filter(|&j| j != k) {
                    let wj = w(j);
                    let nj = occ[j - 1];
                    let base = pre * coupling_g(j, k).powi(2) / (wj * wk);
                    let c_cr = base * (wk - wj).powi(2) * (nk + nj + 1.0);
                    let d = k.abs_diff(j);
                    assert!(d > 0, "degenerate mode pair ({k}, {j})");
                    let c_sc = base * (wj + wk).powi(2) * (nj - nk);
                    create.push(c_cr * self.table.power(j + k));
                    scatter.push(c_sc * self.table.power(d));
                    err += c_cr.abs() * self.table.power_err(j + k)
                        + c_sc.abs() * self.table.power_err(d);
                }
                Ok((
                    ModeTerms {
                        k,
                        diag,
                        create: pairwise_sum(&create),
                        scatter: pairwise_sum(&scatter),
                    },
                    err,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let eps2 = epsilon * epsilon;
        let per_mode: Vec<ModeTerms> = per.iter().map(|(m, _)| m.scaled(eps2)).collect();
        let errs: Vec<f64> = per.iter().map(|(_, e)| e * eps2).collect();
        let totals: Vec<f64> = per_mode.iter().map(ModeTerms::total).collect();
        let value = pairwise_sum(&totals);
        let quad_error = pairwise_sum(&errs);
        let tail = power_law_tail(&totals, &errs).estimate;
        let bound = match &self.extrema {
            Some(ext) => Some(eps2 * ext.prefactor() * bound_mode_sum(self.l0, k_max, bath)?),
            None => None,
        };
        Ok(FrictionResult {
            value,
            per_mode,
            bound,
            k_used: k_max,
            tail_estimate: tail,
            beta: bath.beta,
            epsilon,
            quad_error,
            truncation_warning: tail > self.tail_tol * value.abs(),
        })
    }
}

pub fn friction_energy(
    cfg: &CavityConfig,
    bath: &ThermalBath,
    traj: &Trajectory,
    spec: &QuadratureSpec,
) -> Result<FrictionResult> {
    FrictionModel::new(cfg, traj, spec)?.evaluate(bath, cfg.epsilon)
}

/// Per-mode friction energies from the unfactorized double time integral of
/// the kernel. Quadratically slower than [`friction_energy`]; for testing.
pub fn friction_energy_oracle(
    cfg: &CavityConfig,
    bath: &ThermalBath,
    traj: &Trajectory,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let k_max = cfg.n_modes;
    let w = |k: usize| cfg.omega(k);
    let occ: Vec<f64> = (1..=k_max).map(|k| bath.occupation(w(k))).collect();
    let eps2 = cfg.epsilon * cfg.epsilon;
    (1..=k_max)
        .map(|k| {
            let wk = w(k);
            let nk = occ[k - 1];
            let dw = mode_frequency_derivative(k, cfg.l0)?;
            let pre = wk / 4.0;
            // (frequency, coefficient) pairs of the kernel for mode k.
            let mut parts = vec![(2.0 * wk, pre * dw * dw * cfg.l0 * cfg.l0 / (wk * wk) * (2.0 * nk + 1.0))];
            for j in (1..=k_max).filter(|&j| j != k) {
                let wj = w(j);
                let nj = occ[j - 1];
                let base = pre * coupling_g(j, k).powi(2) / (wj * wk);
                parts.push((wj + wk, base * (wk - wj).powi(2) * (nk + nj + 1.0)));
                parts.push((wj - wk, base * (wj + wk).powi(2) * (nj - nk)));
            }
            let omega_max = parts.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
            let kernel = |t1: f64, t2: f64| {
                let dd = traj.ddelta(t1) * traj.ddelta(t2);
                let u = t1 - t2;
                dd * parts.iter().map(|(om, c)| c * (om * u).cos()).sum::<f64>()
            };
            let e = integrate_2d_oracle(kernel, traj.t_start(), traj.t_end(), omega_max, spec)?;
            Ok(eps2 * e.value)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{quintic, quintic_shortcut, reverse, static_wall};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(eps: f64, k: usize) -> CavityConfig {
        CavityConfig::unit_fundamental(eps, k).unwrap()
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn zero_frequency_amplitude_is_displacement() {
        let q = quintic(1.3).unwrap();
        let a = spectral_amplitudes(&q, 0.0, &spec()).unwrap();
        assert!((a.c - 1.0).abs() < 1e-14);
        assert_eq!(a.s, 0.0);
        let s = quintic_shortcut(1.0, 1.0).unwrap();
        let a = spectral_amplitudes(&s, 0.0, &spec()).unwrap();
        assert!((a.c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quintic_amplitude_closed_form() {
        // A(Ω) for the quintic: e^{iΩτ/2} times a real even function; check
        // |A|² against an independent high-order single-panel evaluation.
        let tau = 1.0;
        let q = quintic(tau).unwrap();
        for omega in [0.5, 2.0 * PI, 13.0] {
            let a = spectral_amplitudes(&q, omega, &spec()).unwrap();
            let rule = crate::quadrature::GaussLegendre::new(60);
            let c = rule.integrate(|t| q.ddelta(t) * (omega * t).cos(), 0.0, tau);
            let s = rule.integrate(|t| q.ddelta(t) * (omega * t).sin(), 0.0, tau);
            assert!((a.c - c).abs() < 1e-13 && (a.s - s).abs() < 1e-13);
        }
    }

    #[test]
    fn shortcut_amplitudes_vanish_on_harmonics() {
        let s = quintic_shortcut(1.0, 1.0).unwrap();
        for n in [2usize, 4, 10] {
            let a = spectral_amplitudes(&s, n as f64 * PI, &spec()).unwrap();
            assert!(a.c.abs() < 1e-12 && a.s.abs() < 1e-12, "n={n}: {a:?}");
        }
        let a = spectral_amplitudes(&s, 2.5 * PI, &spec()).unwrap();
        assert!(a.power() > 1e-6);
    }

    #[test]
    fn partial_integrals() {
        let sc = quintic_shortcut(1.0, 1.0).unwrap();
        let sp = spec();
        assert_eq!(partial_spectral_integral(&sc, 2, 1.0, -1.0, &sp).unwrap(), (0.0, 0.0));
        let (i, j) = partial_spectral_integral(&sc, 2, 1.0, 2.0, &sp).unwrap();
        assert!(i.abs() < 1e-12 && j.abs() < 1e-12);
        let (i, j) = partial_spectral_integral(&sc, 2, 1.0, 0.5, &sp).unwrap();
        assert!(i.hypot(j) > 1e-3);
        assert!(partial_spectral_integral(&sc, 2, 1.0, 3.0, &sp).is_err());

        let times: Vec<f64> = (0..=60).map(|i| -1.0 + 3.0 * i as f64 / 60.0).collect();
        let trace = partial_spectral_trace(&sc, 4, 1.0, &times, &sp).unwrap();
        for (t, (i, j)) in times.iter().zip(&trace).step_by(7) {
            let (a, b) = partial_spectral_integral(&sc, 4, 1.0, *t, &sp).unwrap();
            assert!((a - i).abs() < 1e-12 && (b - j).abs() < 1e-12);
        }
    }

    #[test]
    fn static_wall_has_no_friction() {
        let r = friction_energy(&unit(0.01, 16), &ThermalBath::new(1.0).unwrap(), &static_wall(0.0, 1.0).unwrap(), &spec()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.tail_estimate, 0.0);
        assert!(!r.truncation_warning);
        assert!(r.bound.is_none());
    }

    #[test]
    fn slow_motion_suppresses_friction() {
        let cfg = unit(0.01, 64);
        let bath = ThermalBath::new(1.0).unwrap();
        let fast = friction_energy(&cfg, &bath, &quintic(1.0).unwrap(), &spec()).unwrap();
        let slow = friction_energy(&cfg, &bath, &quintic(100.0).unwrap(), &spec()).unwrap();
        assert!(slow.value < 1e-6 * fast.value);
        assert!(slow.value >= 0.0);
    }

    #[test]
    fn huge_tau_uses_asymptotic_bound() {
        let cfg = unit(0.01, 64);
        let q = quintic(1e9).unwrap();
        let m = FrictionModel::new(&cfg, &q, &spec()).unwrap();
        assert!(m.table().any_asymptotic());
        let r = m.evaluate(&ThermalBath::new(1.0).unwrap(), 0.01).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!(r.quad_error < 1e-12);
    }

    #[test]
    fn value_is_sum_of_modes_and_rescales() {
        let cfg = unit(0.01, 24);
        let bath = ThermalBath::new(0.7).unwrap();
        let r = friction_energy(&cfg, &bath, &quintic(0.8).unwrap(), &spec()).unwrap();
        let sum: f64 = r.per_mode.iter().map(ModeTerms::total).sum();
        assert!((sum - r.value).abs() <= 1e-12 * r.value);
        assert!((r.cumulative().last().unwrap() - r.value).abs() <= 1e-12 * r.value);
        let r2 = r.rescaled(0.02);
        assert!((r2.value / r.value - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scattering_is_nonnegative_when_summed() {
        let cfg = unit(0.01, 20);
        for beta in [0.3, 1.0, 4.0] {
            let r = friction_energy(&cfg, &ThermalBath::new(beta).unwrap(), &quintic(0.5).unwrap(), &spec()).unwrap();
            let sc: f64 = r.per_mode.iter().map(|m| m.scatter).sum();
            assert!(sc >= -1e-14 * r.value, "beta={beta}: {sc}");
        }
        let r = friction_energy(&cfg, &ThermalBath::vacuum(), &quintic(0.5).unwrap(), &spec()).unwrap();
        assert!(r.per_mode.iter().all(|m| m.scatter == 0.0));
    }

    #[test]
    fn quintic_bound_prefactor() {
        for tau in [0.5, 1.0, 3.0] {
            let ext = acceleration_extrema(&quintic(tau).unwrap()).unwrap();
            let expect = 400.0 / 3.0 / tau.powi(4);
            assert!((ext.prefactor() / expect - 1.0).abs() < 1e-12);
            let s = 0.5 * (1.0 - 1.0 / 3f64.sqrt());
            assert!((ext.t_max / tau - s).abs() < 1e-7);
            assert!((ext.d2_max * tau * tau - 10.0 / 3f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn bound_shape_errors() {
        let q = quintic(1.0).unwrap();
        let wiggly = Trajectory::new("wiggly", 0.0, 1.0, move |t| {
            let mut d = q.derivs(t);
            d.d2 += 8.0 * (6.0 * PI * t).sin() * (PI * t).sin().powi(2);
            d
        })
        .unwrap();
        assert!(matches!(acceleration_extrema(&wiggly), Err(Error::Shape(_))));
        let lin = crate::trajectory::linear(1.0).unwrap();
        assert!(acceleration_extrema(&lin).is_err());
    }

    #[test]
    fn vacuum_bound_drops_occupation_terms() {
        let l0 = PI;
        let k = 12;
        let got = bound_mode_sum(l0, k, &ThermalBath::vacuum()).unwrap();
        let mut expect = 0.0;
        for kk in 1..=k {
            let wk = kk as f64;
            expect += 1.0 / (16.0 * wk.powi(3));
            for j in (1..=k).filter(|&j| j != kk) {
                let wj = j as f64;
                expect += coupling_g(j, kk).powi(2) / wj * (wk - wj).powi(2) / (wk + wj).powi(4);
            }
        }
        assert!((got / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bound_dominates_on_grid() {
        let cfg = unit(0.01, 40);
        for tau in [0.3, 1.0, 3.0, 10.0] {
            let m = FrictionModel::new(&cfg, &quintic(tau).unwrap(), &spec()).unwrap();
            for beta in [1.0, 5.0, f64::INFINITY] {
                let bath = ThermalBath { beta };
                let r = m.evaluate(&bath, 0.01).unwrap();
                let b = r.bound.unwrap();
                assert!(b >= r.value, "tau={tau} beta={beta}: {b} < {}", r.value);
                let direct = friction_bound(&cfg, &bath, &quintic(tau).unwrap()).unwrap();
                assert!((direct / b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_agrees_mode_by_mode() {
        let cfg = unit(0.01, 6);
        let bath = ThermalBath::new(1.0).unwrap();
        let q = quintic(1.0).unwrap();
        let fast = friction_energy(&cfg, &bath, &q, &spec()).unwrap();
        let slow = friction_energy_oracle(&cfg, &bath, &q, &spec()).unwrap();
        for (m, o) in fast.per_mode.iter().zip(&slow) {
            assert!((m.total() - o).abs() <= 1e-6 * o.abs(), "k={}: {} vs {o}", m.k, m.total());
        }
    }

    #[test]
    fn frozen_reference_value() {
        // Quintic(τ=1), βω₁ = 1, ε = 0.01, K = 8, from the double-integral oracle.
        let cfg = unit(0.01, 8);
        let bath = ThermalBath::new(1.0).unwrap();
        let r = friction_energy(&cfg, &bath, &quintic(1.0).unwrap(), &spec()).unwrap();
        assert!((r.value / REFERENCE_X - 1.0).abs() < 1e-9, "{:.17e}", r.value);
    }

    const REFERENCE_X: f64 = 1.280_712_325_272_04e-3;

    #[test]
    fn tail_fit() {
        let vals: Vec<f64> = (1..=40).map(|k| 3.0 * (k as f64).powi(-4)).collect();
        let noise = vec![0.0; 40];
        let t = power_law_tail(&vals, &noise);
        assert!((t.exponent.unwrap() + 4.0).abs() < 1e-10);
        let exact: f64 = (41..200_000).map(|k| 3.0 * (k as f64).powi(-4)).sum();
        assert!((t.estimate / exact - 1.0).abs() < 1e-2);
        let flat = vec![1.0; 10];
        assert!(power_law_tail(&flat, &noise[..10]).estimate.is_infinite());
        let zeros = vec![0.0; 10];
        assert_eq!(power_law_tail(&zeros, &noise[..10]).estimate, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn friction_nonnegative_and_direction_independent(
            log_tau in (0.1f64).ln()..(30.0f64).ln(),
            log_beta in (0.2f64).ln()..(20.0f64).ln(),
            use_shortcut in any::<bool>(),
        ) {
            let cfg = unit(0.01, 16);
            let tau = log_tau.exp();
            let bath = ThermalBath::new(log_beta.exp()).unwrap();
            let traj = if use_shortcut { quintic_shortcut(tau, PI).unwrap() } else { quintic(tau).unwrap() };
            let fwd = friction_energy(&cfg, &bath, &traj, &spec()).unwrap();
            prop_assert!(fwd.value >= -10.0 * fwd.quad_error);
            let back = friction_energy(&cfg, &bath, &reverse(&traj), &spec()).unwrap();
            prop_assert!((fwd.value - back.value).abs() <= 1e-8 * fwd.value.abs() + 10.0 * fwd.quad_error);
        }

        #[test]
        fn vacuum_is_the_cold_limit(tau in 0.3f64..3.0) {
            let cfg = unit(0.01, 16);
            let m = FrictionModel::new(&cfg, &quintic(tau).unwrap(), &spec()).unwrap();
            let vac = m.evaluate(&ThermalBath::vacuum(), 0.01).unwrap().value;
            let cold = m.evaluate(&ThermalBath::new(60.0).unwrap(), 0.01).unwrap().value;
            prop_assert!((cold - vac).abs() <= 1e-12 * vac);
            prop_assert!(vac.is_finite() && vac > 0.0);
        }
    }
}
