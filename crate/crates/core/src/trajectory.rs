//! Wall-motion profiles δ(t).
//!
//! A [`Trajectory`] is an immutable evaluator for δ and its first three time
//! derivatives on a finite domain. Evaluation outside the domain uses the
//! profile's natural extension (the wall at rest), which is what the shortcut
//! construction relies on.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// δ and its first three derivatives at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Derivatives {
    pub fn get(&self, order: usize) -> f64 {
        match order {
            0 => self.value,
            1 => self.d1,
            2 => self.d2,
            3 => self.d3,
            _ => panic!("only derivatives up to third order are tracked"),
        }
    }
}

type EvalFn = dyn Fn(f64) -> Derivatives + Send + Sync;
type IntegralFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Tolerance used by [`Trajectory::is_normalized`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Tolerance used by [`check_boundary_conditions`].
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct Trajectory {
    label: String,
    t_start: f64,
    t_end: f64,
    eval: Arc<EvalFn>,
    integral: Option<Arc<IntegralFn>>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("label", &self.label)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl Trajectory {
    /// Wraps an arbitrary evaluator. The closure must return consistent
    /// derivatives; nothing here differentiates numerically.
    pub fn new<F>(label: impl Into<String>, t_start: f64, t_end: f64, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> Derivatives + Send + Sync + 'static,
    {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::Shape(format!(
                "domain [{t_start}, {t_end}] must be finite and nonempty"
            )));
        }
        Ok(Self {
            label: label.into(),
            t_start,
            t_end,
            eval: Arc::new(eval),
            integral: None,
            breakpoints: Vec::new(),
        })
    }

    /// Attaches ∫_{t_start}^t δ, used when this profile serves as a shortcut ramp.
    pub fn with_integral<F>(mut self, integral: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.integral = Some(Arc::new(integral));
        self
    }

    /// Interior points where some derivative is not smooth.
    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.retain(|&p| p > self.t_start && p < self.t_end);
        points.sort_by(f64::total_cmp);
        points.dedup();
        self.breakpoints = points;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    pub fn derivs(&self, t: f64) -> Derivatives {
        (self.eval)(t)
    }

    pub fn derivs_checked(&self, t: f64) -> Result<Derivatives> {
        if !self.contains(t) {
            return Err(Error::OutOfDomain {
                t,
                start: self.t_start,
                end: self.t_end,
            });
        }
        Ok(self.derivs(t))
    }

    pub fn delta(&self, t: f64) -> f64 {
        self.derivs(t).value
    }

    pub fn ddelta(&self, t: f64) -> f64 {
        self.derivs(t).d1
    }

    pub fn d2delta(&self, t: f64) -> f64 {
        self.derivs(t).d2
    }

    pub fn d3delta(&self, t: f64) -> f64 {
        self.derivs(t).d3
    }

    pub fn net_displacement(&self) -> f64 {
        self.delta(self.t_end) - self.delta(self.t_start)
    }

    /// δ(t_start) = 0 and δ(t_end) = 1.
    pub fn is_normalized(&self) -> bool {
        self.delta(self.t_start).abs() <= NORMALIZATION_TOL
            && (self.delta(self.t_end) - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// ∫_{t_start}^t δ(u) du, analytic when available.
    pub fn integral(&self, t: f64) -> f64 {
        if let Some(f) = &self.integral {
            return f(t);
        }
        let rule = GaussLegendre::new(12);
        let mut knots = vec![self.t_start];
        knots.extend(self.breakpoints.iter().copied().filter(|&b| b < t));
        knots.push(t);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let panels = 16;
            let h = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let a = w[0] + p as f64 * h;
                total += rule.integrate(|x| self.delta(x), a, a + h);
            }
        }
        total
    }
}

/// The minimal-jerk polynomial ramp δ = 10s³ − 15s⁴ + 6s⁵, s = t/τ, on [0, τ].
pub fn quintic(tau: f64) -> Result<Trajectory> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let eval = move |t: f64| {
        if t <= 0.0 {
            return Derivatives::default();
        }
        if t >= tau {
            return Derivatives {
                value: 1.0,
                ..Derivatives::default()
            };
        }
        let s = t / tau;
        let u = 1.0 - s;
        Derivatives {
            value: s * s * s * (10.0 + s * (-15.0 + 6.0 * s)),
            d1: 30.0 * s * s * u * u / tau,
            d2: 60.0 * s * u * (1.0 - 2.0 * s) / (tau * tau),
            d3: 60.0 * (1.0 + s * (-6.0 + 6.0 * s)) / (tau * tau * tau),
        }
    };
    let integral = move |t: f64| {
        if t <= 0.0 {
            0.0
        } else if t >= tau {
            t - 0.5 * tau
        } else {
            let s = t / tau;
            tau * s.powi(4) * (2.5 + s * (-3.0 + s))
        }
    };
    Ok(Trajectory::new(format!("quintic(tau={tau})"), 0.0, tau, eval)?.with_integral(integral))
}

/// Constant-velocity ramp δ = t/τ. Fails the rest conditions at both ends.
pub fn linear(tau: f64) -> Result<Trajectory> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let eval = move |t: f64| {
        if t < 0.0 {
            Derivatives::default()
        } else if t > tau {
            Derivatives {
                value: 1.0,
                ..Derivatives::default()
            }
        } else {
            Derivatives {
                value: t / tau,
                d1: 1.0 / tau,
                d2: 0.0,
                d3: 0.0,
            }
        }
    };
    Trajectory::new(format!("linear(tau={tau})"), 0.0, tau, eval)
}

/// A wall that never moves.
pub fn static_wall(t_start: f64, t_end: f64) -> Result<Trajectory> {
    Trajectory::new("static", t_start, t_end, |_| Derivatives::default())
}

/// δ̃(t) = δ(t_start + t_end − t) on the same domain.
pub fn reverse(traj: &Trajectory) -> Trajectory {
    let inner = traj.clone();
    let (a, b) = (traj.t_start, traj.t_end);
    let eval = move |t: f64| {
        let d = inner.derivs(a + b - t);
        Derivatives {
            value: d.value,
            d1: -d.d1,
            d2: d.d2,
            d3: -d.d3,
        }
    };
    let mirrored = traj.breakpoints.iter().map(|&p| a + b - p).collect();
    Trajectory {
        label: format!("reverse({})", traj.label),
        t_start: a,
        t_end: b,
        eval: Arc::new(eval),
        integral: None,
        breakpoints: Vec::new(),
    }
    .with_breakpoints(mirrored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryReport {
    pub delta_start: bool,
    pub ddelta_start: bool,
    pub d2delta_start: bool,
    pub ddelta_end: bool,
    pub d2delta_end: bool,
    pub delta_end_unit: bool,
}

impl BoundaryReport {
    pub fn all_pass(&self) -> bool {
        self.delta_start
            && self.ddelta_start
            && self.d2delta_start
            && self.ddelta_end
            && self.d2delta_end
            && self.delta_end_unit
    }
}

pub fn check_boundary_conditions(traj: &Trajectory) -> BoundaryReport {
    let s = traj.derivs(traj.t_start);
    let e = traj.derivs(traj.t_end);
    let small = |x: f64| x.abs() <= BOUNDARY_TOL;
    BoundaryReport {
        delta_start: small(s.value),
        ddelta_start: small(s.d1),
        d2delta_start: small(s.d2),
        ddelta_end: small(e.d1),
        d2delta_end: small(e.d2),
        delta_end_unit: small(e.value - 1.0),
    }
}

/// Largest relative mismatch between each analytic derivative and the central
/// difference of the derivative one order below, over the given points.
///
/// The scale for derivative n is `max(|analytic|, T⁻ⁿ)` with T the domain length.
pub fn max_derivative_mismatch(traj: &Trajectory, points: &[f64]) -> f64 {
    let span = traj.duration();
    let h = 1e-5 * span;
    let mut worst = 0.0f64;
    for &t in points {
        let lo = traj.derivs(t - h);
        let hi = traj.derivs(t + h);
        let mid = traj.derivs(t);
        for order in 1..=3 {
            let fd = (hi.get(order - 1) - lo.get(order - 1)) / (2.0 * h);
            let exact = mid.get(order);
            let scale = exact.abs().max(span.powi(-(order as i32)));
            worst = worst.max((fd - exact).abs() / scale);
        }
    }
    worst
}

/// Friction-cancelling profile δ̇(t) = Ġ(t + L₀) − Ġ(t − L₀) on [−L₀, L₀ + τ].
///
/// `ramp` supplies Ġ on [0, τ] and is extended by its end values; the result is
/// rescaled to unit net displacement with δ(−L₀) = 0.
pub fn shortcut(ramp: &Trajectory, l0: f64) -> Result<Trajectory> {
    if !(l0.is_finite() && l0 > 0.0) {
        return Err(Error::param("L0", format!("must be positive, got {l0}")));
    }
    let (a, b) = (ramp.t_start, ramp.t_end);
    let start = ramp.derivs(a);
    let end = ramp.derivs(b);
    let tol = BOUNDARY_TOL * (1.0 + start.value.abs().max(end.value.abs()));
    if start.d1.abs() > tol / ramp.duration() || end.d1.abs() > tol / ramp.duration() {
        return Err(Error::Shape(format!(
            "ramp slope must be constant outside its domain (dĠ/dt = {:e} at start, {:e} at end)",
            start.d1, end.d1
        )));
    }
    let rise = end.value - start.value;
    if rise.abs() <= tol {
        return Err(Error::Shape(
            "ramp has no net change, so the shortcut has zero displacement".into(),
        ));
    }

    let g = ramp.clone();
    let (r0, r1) = (start.value, end.value);
    let total = g.integral(b);
    // Antiderivative of the extended ramp, zero at the ramp's start.
    let anti = move |x: f64| {
        if x <= a {
            r0 * (x - a)
        } else if x >= b {
            total + r1 * (x - b)
        } else {
            g.integral(x)
        }
    };
    let ext = {
        let g = ramp.clone();
        move |x: f64| {
            if x <= a {
                Derivatives {
                    value: r0,
                    ..Derivatives::default()
                }
            } else if x >= b {
                Derivatives {
                    value: r1,
                    ..Derivatives::default()
                }
            } else {
                g.derivs(x)
            }
        }
    };

    let t_start = a - l0;
    let t_end = b + l0;
    let norm = 2.0 * l0 * rise;
    let offset = anti(t_start + l0) - anti(t_start - l0);
    let eval = move |t: f64| {
        let p = ext(t + l0);
        let m = ext(t - l0);
        Derivatives {
            value: (anti(t + l0) - anti(t - l0) - offset) / norm,
            d1: (p.value - m.value) / norm,
            d2: (p.d1 - m.d1) / norm,
            d3: (p.d2 - m.d2) / norm,
        }
    };
    let mut bps = vec![a - l0, b - l0, a + l0, b + l0];
    bps.extend(ramp.breakpoints.iter().flat_map(|&p| [p - l0, p + l0]));
    Ok(Trajectory::new(
        format!("shortcut({}, L0={l0})", ramp.label),
        t_start,
        t_end,
        eval,
    )?
    .with_breakpoints(bps))
}

/// Raw net displacement 2L₀·(Ġ(end) − Ġ(start)) before normalization.
pub fn shortcut_raw_displacement(ramp: &Trajectory, l0: f64) -> f64 {
    2.0 * l0 * (ramp.delta(ramp.t_end) - ramp.delta(ramp.t_start))
}

/// The default shortcut built from the quintic ramp.
pub fn quintic_shortcut(tau: f64, l0: f64) -> Result<Trajectory> {
    shortcut(&quintic(tau)?, l0)
}

/// Clamped cubic spline through (t, δ) samples. Approximate: δ⃛ is piecewise
/// constant, so derivative checks only hold to about 10⁻³.
#[derive(Debug, Clone)]
struct CubicSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    slopes: (f64, f64),
}

impl CubicSpline {
    fn new(t: Vec<f64>, y: Vec<f64>, slopes: (f64, f64)) -> Self {
        let n = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * ((y[1] - y[0]) / h[0] - slopes.0);
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = 6.0 * (slopes.1 - (y[n - 1] - y[n - 2]) / h[n - 2]);

        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Self { t, y, m, slopes }
    }

    fn eval(&self, x: f64) -> Derivatives {
        let n = self.t.len();
        if x <= self.t[0] {
            return Derivatives {
                value: self.y[0] + self.slopes.0 * (x - self.t[0]),
                d1: self.slopes.0,
                ..Derivatives::default()
            };
        }
        if x >= self.t[n - 1] {
            return Derivatives {
                value: self.y[n - 1] + self.slopes.1 * (x - self.t[n - 1]),
                d1: self.slopes.1,
                ..Derivatives::default()
            };
        }
        let i = (self.t.partition_point(|&v| v <= x) - 1).min(n - 2);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        Derivatives {
            value: a * self.y[i]
                + b * self.y[i + 1]
                + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            d1: (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0
                + (3.0 * b * b - 1.0) * h * m1 / 6.0,
            d2: a * m0 + b * m1,
            d3: (m1 - m0) / h,
        }
    }
}

/// Smooth interpolant of sampled (t, δ) data with the given end slopes
/// (zero for a wall that starts and ends at rest).
pub fn from_samples(
    label: impl Into<String>,
    t: Vec<f64>,
    delta: Vec<f64>,
    end_slopes: (f64, f64),
) -> Result<Trajectory> {
    if t.len() != delta.len() {
        return Err(Error::Samples(format!(
            "{} times but {} displacements",
            t.len(),
            delta.len()
        )));
    }
    if t.len() < 2 {
        return Err(Error::Samples("at least two samples are required".into()));
    }
    if t.iter().chain(delta.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Samples("samples must be finite".into()));
    }
    if let Some(w) = t.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Samples(format!(
            "times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let knots = t[1..t.len() - 1].to_vec();
    let spline = CubicSpline::new(t, delta, end_slopes);
    Ok(Trajectory::new(label, t0, t1, move |x| spline.eval(x))?.with_breakpoints(knots))
}

/// Reads two-column `t,delta` text: commas between fields, `#` starts a
/// comment, and one non-numeric header line is tolerated.
pub fn read_samples(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Samples(format!("{}: {e}", path.display())))?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    let mut seen_row = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Samples(format!(
                "line {}: expected 2 comma-separated fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(d)) => {
                ts.push(t);
                ds.push(d);
                seen_row = true;
            }
            _ if !seen_row && fields[0].parse::<f64>().is_err() => seen_row = true,
            _ => {
                return Err(Error::Samples(format!(
                    "line {}: cannot parse `{line}` as numbers",
                    lineno + 1
                )))
            }
        }
    }
    Ok((ts, ds))
}

pub fn load_sampled(path: &Path) -> Result<Trajectory> {
    let (t, d) = read_samples(path)?;
    from_samples(format!("sampled({})", path.display()), t, d, (0.0, 0.0))
}

/// Affine time change onto [0, τ]; derivative n picks up (T/τ)ⁿ.
pub fn time_scaled(traj: &Trajectory, tau: f64) -> Result<Trajectory> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let inner = traj.clone();
    let a = traj.t_start;
    let r = traj.duration() / tau;
    let eval = move |t: f64| {
        let d = inner.derivs(a + r * t);
        Derivatives {
            value: d.value,
            d1: d.d1 * r,
            d2: d.d2 * r * r,
            d3: d.d3 * r * r * r,
        }
    };
    let bps = traj.breakpoints.iter().map(|&p| (p - a) / r).collect();
    Ok(Trajectory::new(format!("{}[tau={tau}]", traj.label), 0.0, tau, eval)?.with_breakpoints(bps))
}

/// A one-parameter family of strokes indexed by duration τ.
#[derive(Debug, Clone)]
pub enum TrajectoryFamily {
    Quintic,
    /// Quintic-ramp shortcut with the given cavity length; the stroke lasts τ + 2L₀.
    Shortcut { l0: f64 },
    /// A sampled profile stretched onto [0, τ].
    Sampled(Trajectory),
}

impl TrajectoryFamily {
    pub fn build(&self, tau: f64) -> Result<Trajectory> {
        match self {
            TrajectoryFamily::Quintic => quintic(tau),
            TrajectoryFamily::Shortcut { l0 } => quintic_shortcut(tau, *l0),
            TrajectoryFamily::Sampled(base) => time_scaled(base, tau),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryFamily::Quintic => "quintic",
            TrajectoryFamily::Shortcut { .. } => "shortcut",
            TrajectoryFamily::Sampled(_) => "sampled",
        }
    }
}
