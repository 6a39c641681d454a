//! Panel Gauss-Legendre quadrature with frequency-aware panel sizing.
//!
//! [`integrate_2d_oracle`] is a brute-force tensor-product rule kept for
//! cross-checks only; the friction fast path never calls it.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Panel counts at or above this are evaluated on the rayon pool.
const PARALLEL_PANELS: usize = 2048;

/// Gauss-Legendre rule on [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Single-panel rule on [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_per_period: usize,
    pub panel_order: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_period: 16,
            panel_order: 10,
            rel_tol: 1e-10,
            max_panels: 1_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_period < 4 {
            return Err(Error::param(
                "nodes-per-period",
                format!("must be at least 4, got {}", self.nodes_per_period),
            ));
        }
        if self.panel_order < 1 {
            return Err(Error::param("panel-order", "must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::param(
                "rel-tol",
                format!("must be positive, got {}", self.rel_tol),
            ));
        }
        if self.max_panels < 8 {
            return Err(Error::param("max-panels", "must be at least 8"));
        }
        Ok(())
    }

    /// Panels needed on an interval of length `len` for oscillation frequency ω.
    pub fn panels_for(&self, len: f64, omega: f64) -> usize {
        let per_period = self.nodes_per_period as f64 / self.panel_order as f64;
        let n = (len * omega.abs() * per_period / (2.0 * PI)).ceil();
        if n.is_finite() && n < usize::MAX as f64 {
            n as usize
        } else {
            usize::MAX
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Last refinement delta, floored at a few ulps of ∫|f|.
    pub error: f64,
    /// ∫|f|, the scale used for the relative convergence test.
    pub abs_integral: f64,
    pub panels: usize,
}

/// Sum in a fixed binary-tree order, independent of thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

fn error_floor(abs_integral: f64) -> f64 {
    64.0 * f64::EPSILON * abs_integral
}

/// ∫ₐᵇ f with the highest oscillation frequency in f given by `omega_max`.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, omega_max: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let [e] = integrate_multi(|t| [f(t)], &[a, b], omega_max, spec)?;
    Ok(e)
}

/// As [`integrate_1d`] but with panel edges aligned to the sorted `knots`,
/// whose first and last entries are the integration limits.
pub fn integrate_1d_knots<F>(f: F, knots: &[f64], omega_max: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let [e] = integrate_multi(|t| [f(t)], knots, omega_max, spec)?;
    Ok(e)
}

/// Integrates N functions sharing the same evaluation points; refinement
/// continues until every component has converged.
pub fn integrate_multi<const N: usize, F>(
    f: F,
    knots: &[f64],
    omega_max: f64,
    spec: &QuadratureSpec,
) -> Result<[Estimate; N]>
where
    F: Fn(f64) -> [f64; N] + Sync,
{
    spec.validate()?;
    check_knots(knots)?;
    if !(omega_max >= 0.0) {
        return Err(Error::param("omega_max", format!("must be non-negative, got {omega_max}")));
    }
    let rule = GaussLegendre::new(spec.panel_order);
    let total = knots[knots.len() - 1] - knots[0];
    let mut counts: Vec<usize> = knots
        .windows(2)
        .map(|w| {
            let len = w[1] - w[0];
            let by_freq = spec.panels_for(len, omega_max);
            let by_min = (8.0 * len / total).ceil() as usize;
            by_freq.max(by_min).max(1)
        })
        .collect();

    let mut prev: Option<([f64; N], [f64; N])> = None;
    loop {
        let panels: usize = counts.iter().sum();
        if panels > spec.max_panels {
            let (best, _) = prev.unwrap_or(([f64::NAN; N], [f64::NAN; N]));
            return Err(Error::Convergence {
                estimate: best[0],
                delta: f64::INFINITY,
                panels,
            });
        }
        let (vals, abss) = panel_pass(&f, &rule, knots, &counts);
        if let Some((old, _)) = prev {
            let deltas: [f64; N] = std::array::from_fn(|i| (vals[i] - old[i]).abs());
            let done = (0..N).all(|i| deltas[i] <= spec.rel_tol * abss[i] || deltas[i] == 0.0);
            if done {
                return Ok(std::array::from_fn(|i| Estimate {
                    value: vals[i],
                    error: deltas[i].max(error_floor(abss[i])),
                    abs_integral: abss[i],
                    panels,
                }));
            }
            if 2 * panels > spec.max_panels {
                let worst = deltas.iter().copied().fold(0.0, f64::max);
                return Err(Error::Convergence {
                    estimate: vals[0],
                    delta: worst,
                    panels,
                });
            }
        }
        prev = Some((vals, abss));
        for c in counts.iter_mut() {
            *c *= 2;
        }
    }
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::param("limits", "need at least a lower and an upper limit"));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::param("limits", "integration limits must be finite"));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("limits", "integration limits must be strictly increasing"));
    }
    Ok(())
}

fn panel_pass<const N: usize, F>(
    f: &F,
    rule: &GaussLegendre,
    knots: &[f64],
    counts: &[usize],
) -> ([f64; N], [f64; N])
where
    F: Fn(f64) -> [f64; N] + Sync,
{
    let mut edges = Vec::with_capacity(counts.iter().sum::<usize>());
    for (w, &n) in knots.windows(2).zip(counts) {
        let h = (w[1] - w[0]) / n as f64;
        for p in 0..n {
            let a = w[0] + p as f64 * h;
            let b = if p + 1 == n { w[1] } else { a + h };
            edges.push((a, b));
        }
    }
    let one = |&(a, b): &(f64, f64)| -> ([f64; N], [f64; N]) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = [0.0; N];
        let mut m = [0.0; N];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let y = f(mid + half * x);
            for i in 0..N {
                s[i] += w * y[i];
                m[i] += w * y[i].abs();
            }
        }
        (s.map(|v| v * half), m.map(|v| v * half))
    };
    let parts: Vec<([f64; N], [f64; N])> = if edges.len() >= PARALLEL_PANELS {
        edges.par_iter().map(one).collect()
    } else {
        edges.iter().map(one).collect()
    };
    let mut vals = [0.0; N];
    let mut abss = [0.0; N];
    let mut buf = Vec::with_capacity(parts.len());
    for i in 0..N {
        buf.clear();
        buf.extend(parts.iter().map(|p| p.0[i]));
        vals[i] = pairwise_sum(&buf);
        buf.clear();
        buf.extend(parts.iter().map(|p| p.1[i]));
        abss[i] = pairwise_sum(&buf);
    }
    (vals, abss)
}

/// Tensor-product rule over [a, b]². Slow by design: cost grows as the square
/// of the 1-D node count.
pub fn integrate_2d_oracle<F>(f: F, a: f64, b: f64, omega_max: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    spec.validate()?;
    check_knots(&[a, b])?;
    let rule = GaussLegendre::new(spec.panel_order);
    let mut n = spec.panels_for(b - a, omega_max).max(8);
    let mut prev: Option<f64> = None;
    loop {
        if n.saturating_mul(n) > spec.max_panels {
            return Err(Error::Convergence {
                estimate: prev.unwrap_or(f64::NAN),
                delta: f64::INFINITY,
                panels: n,
            });
        }
        let h = (b - a) / n as f64;
        let mut pts = Vec::with_capacity(n * rule.order());
        for p in 0..n {
            let lo = a + p as f64 * h;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                pts.push((lo + 0.5 * h * (1.0 + x), 0.5 * h * w));
            }
        }
        let rows: Vec<(f64, f64)> = pts
            .par_iter()
            .map(|&(t1, w1)| {
                let vals: Vec<f64> = pts.iter().map(|&(t2, w2)| w2 * f(t1, t2)).collect();
                let abss: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
                (w1 * pairwise_sum(&vals), w1 * pairwise_sum(&abss))
            })
            .collect();
        let value = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let abs = pairwise_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        if let Some(old) = prev {
            let delta = (value - old).abs();
            if delta <= spec.rel_tol * abs || delta == 0.0 {
                return Ok(Estimate {
                    value,
                    error: delta.max(error_floor(abs)),
                    abs_integral: abs,
                    panels: n * n,
                });
            }
        }
        prev = Some(value);
        n *= 2;
    }
}
