//! Brute-force check of the perturbative results: the first few cavity modes
//! on a truncated Fock space, evolved directly in the Schrödinger picture.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::friction::FrictionModel;
use crate::quadrature::QuadratureSpec;
use crate::spectrum::{coupling_g, CavityConfig, ThermalBath};
use crate::trajectory::Trajectory;

pub type Operator = DMatrix<Complex64>;

/// Largest dimension ever accepted.
pub const HARD_DIM_CAP: usize = 100_000;
/// Default dimension cap.
pub const DEFAULT_DIM_CAP: usize = 10_000;
/// Largest allowed dt·ω_max.
pub const MAX_PHASE_STEP: f64 = 0.1;
/// Largest allowed |Tr(ρN_k) − N̄_k| for a thermal state.
pub const OCCUPATION_TOL: f64 = 1e-4;
/// Largest discarded thermal weight per mode.
pub const WEIGHT_TOL: f64 = 1e-6;
/// Largest energy drift tolerated for a wall at rest.
pub const DRIFT_TOL: f64 = 1e-10;
/// Largest compression ratio accepted by [`validate_friction`].
pub const VALIDATION_MAX_EPSILON: f64 = 0.02;

const IMAG_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockConfig {
    pub n_modes: usize,
    pub n_max: usize,
    pub dt: f64,
    pub integrator_order: usize,
    pub dim_cap: usize,
}

impl FockConfig {
    pub const DEFAULT_DT: f64 = 0.01;

    pub fn new(n_modes: usize, n_max: usize, dt: f64, integrator_order: usize) -> Result<Self> {
        Self::with_dim_cap(n_modes, n_max, dt, integrator_order, DEFAULT_DIM_CAP)
    }

    pub fn with_dim_cap(
        n_modes: usize,
        n_max: usize,
        dt: f64,
        integrator_order: usize,
        dim_cap: usize,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::param("n_modes", "need at least one mode"));
        }
        if n_max == 0 {
            return Err(Error::param("n_max", "cutoff must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if integrator_order != 2 && integrator_order != 4 {
            return Err(Error::param(
                "integrator_order",
                format!("must be 2 or 4, got {integrator_order}"),
            ));
        }
        if dim_cap > HARD_DIM_CAP {
            return Err(Error::param("dim_cap", format!("may not exceed {HARD_DIM_CAP}")));
        }
        let dim = (n_max + 1)
            .checked_pow(n_modes as u32)
            .filter(|&d| d <= dim_cap)
            .ok_or_else(|| {
                Error::param(
                    "n_max",
                    format!("({n_max}+1)^{n_modes} exceeds the dimension cap {dim_cap}"),
                )
            })?;
        debug_assert!(dim >= 2);
        Ok(Self {
            n_modes,
            n_max,
            dt,
            integrator_order,
            dim_cap,
        })
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1).pow(self.n_modes as u32)
    }

    /// Checks dt against the fastest retained mode of `cfg`.
    pub fn check_step(&self, cfg: &CavityConfig) -> Result<()> {
        let phase = self.dt * cfg.omega(self.n_modes);
        if phase > MAX_PHASE_STEP {
            return Err(Error::StepSize(format!(
                "dt·ω_max = {phase:.3e} exceeds {MAX_PHASE_STEP}"
            )));
        }
        Ok(())
    }

    fn basis(&self) -> Basis {
        Basis {
            n_modes: self.n_modes,
            n_max: self.n_max,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Basis {
    n_modes: usize,
    n_max: usize,
}

impl Basis {
    fn dim(&self) -> usize {
        (self.n_max + 1).pow(self.n_modes as u32)
    }

    fn decode(&self, mut index: usize) -> Vec<usize> {
        let r = self.n_max + 1;
        (0..self.n_modes)
            .map(|_| {
                let n = index % r;
                index /= r;
                n
            })
            .collect()
    }

    fn encode(&self, occ: &[usize]) -> usize {
        occ.iter().rev().fold(0, |acc, &n| acc * (self.n_max + 1) + n)
    }

    /// Applies `ops` (written left to right, acting right to left) to a basis
    /// state. Returns the image state and its amplitude, or `None` when the
    /// image vanishes or leaves the truncated space.
    fn apply(&self, ops: &[Ladder], occ: &[usize]) -> Option<(Vec<usize>, f64)> {
        self.apply_clipped(ops, occ, true)
    }

    /// As [`Basis::apply`]; with `clip` false, intermediate states may exceed
    /// the cutoff, giving exact matrix elements of the product.
    fn apply_clipped(&self, ops: &[Ladder], occ: &[usize], clip: bool) -> Option<(Vec<usize>, f64)> {
        let mut state = occ.to_vec();
        let mut amp = 1.0;
        for op in ops.iter().rev() {
            match *op {
                Ladder::Lower(k) => {
                    let n = state[k];
                    if n == 0 {
                        return None;
                    }
                    amp *= (n as f64).sqrt();
                    state[k] = n - 1;
                }
                Ladder::Raise(k) => {
                    let n = state[k];
                    if clip && n == self.n_max {
                        return None;
                    }
                    amp *= ((n + 1) as f64).sqrt();
                    state[k] = n + 1;
                }
                Ladder::Number(k) => amp *= state[k] as f64,
            }
        }
        Some((state, amp))
    }

    /// Dense matrix of a linear combination of ladder words.
    fn matrix(&self, terms: &[(Complex64, Vec<Ladder>)]) -> Operator {
        let dim = self.dim();
        let mut m = Operator::zeros(dim, dim);
        for col in 0..dim {
            let occ = self.decode(col);
            for (c, ops) in terms {
                if let Some((image, amp)) = self.apply(ops, &occ) {
                    m[(self.encode(&image), col)] += *c * amp;
                }
            }
        }
        m
    }
}

/// Ladder operators on mode index `k` (zero based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Raise(usize),
    Lower(usize),
    Number(usize),
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn hermitize(m: &mut Operator) {
    let adj = m.adjoint();
    *m += adj;
    *m *= re(0.5);
}

/// The parts of H(t) = H₀ + εδ(t)·A + εδ̇(t)·B.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub h0: Operator,
    pub a: Operator,
    pub b: Operator,
    pub epsilon: f64,
}

impl HamiltonianParts {
    pub fn new(cfg: &CavityConfig, fock: &FockConfig) -> Self {
        use Ladder::*;
        let basis = fock.basis();
        let w: Vec<f64> = (1..=fock.n_modes).map(|k| cfg.omega(k)).collect();

        let free: Vec<_> = (0..fock.n_modes).map(|k| (re(w[k]), vec![Number(k)])).collect();
        let h0 = basis.matrix(&free);

        // ω′δL = ω_k·εδ for δL = −L₀εδ.
        let mut squeeze = Vec::new();
        for k in 0..fock.n_modes {
            squeeze.push((re(w[k]), vec![Number(k)]));
            squeeze.push((re(w[k] / 2.0), vec![Raise(k), Raise(k)]));
            squeeze.push((re(w[k] / 2.0), vec![Lower(k), Lower(k)]));
        }
        let mut a = basis.matrix(&squeeze);

        // (1/2i)(δL̇/L₀) = (i/2)εδ̇.
        let mut mixing = Vec::new();
        for k in 0..fock.n_modes {
            for j in (0..fock.n_modes).filter(|&j| j != k) {
                let c = Complex64::new(0.0, 0.5) * coupling_g(k + 1, j + 1) * (w[k] / w[j]).sqrt();
                mixing.push((c, vec![Lower(k), Lower(j)]));
                mixing.push((-c, vec![Raise(k), Lower(j)]));
                mixing.push((c, vec![Lower(k), Raise(j)]));
                mixing.push((-c, vec![Raise(k), Raise(j)]));
            }
        }
        let mut b = basis.matrix(&mixing);
        hermitize(&mut a);
        hermitize(&mut b);
        Self {
            h0,
            a,
            b,
            epsilon: cfg.epsilon,
        }
    }

    /// H for a wall displacement δ and velocity δ̇.
    pub fn at(&self, delta: f64, ddelta: f64) -> Operator {
        let mut h = self.h0.clone();
        if delta != 0.0 {
            h += &self.a * re(self.epsilon * delta);
        }
        if ddelta != 0.0 {
            h += &self.b * re(self.epsilon * ddelta);
        }
        h
    }
}

pub fn build_hamiltonian(
    t: f64,
    cfg: &CavityConfig,
    traj: &Trajectory,
    fock: &FockConfig,
) -> Result<Operator> {
    let d = traj.derivs_checked(t)?;
    Ok(HamiltonianParts::new(cfg, fock).at(d.value, d.d1))
}

#[derive(Debug, Clone)]
pub struct ThermalState {
    pub rho: Operator,
    /// Diagonal of ρ in the number basis.
    pub populations: Vec<f64>,
    /// Tr(ρN_k) on the truncated space.
    pub occupations: Vec<f64>,
    /// Untruncated Bose-Einstein occupations.
    pub expected: Vec<f64>,
    pub beta: f64,
}

pub fn thermal_state(beta: f64, fock: &FockConfig, cfg: &CavityConfig) -> Result<ThermalState> {
    let bath = ThermalBath::new(beta)?;
    let basis = fock.basis();
    let discarded = (-beta * cfg.omega1() * (fock.n_max + 1) as f64).exp();
    if discarded > WEIGHT_TOL {
        return Err(Error::Truncation(format!(
            "cutoff n_max = {} discards weight {discarded:.2e} at βω₁ = {:.3}",
            fock.n_max,
            beta * cfg.omega1()
        )));
    }
    // Per-mode truncated geometric distributions; their product is
    // exp(−βH₀)/Z on the truncated space.
    let single: Vec<Vec<f64>> = (1..=fock.n_modes)
        .map(|k| {
            let mut p: Vec<f64> = (0..=fock.n_max)
                .map(|n| {
                    if bath.is_vacuum() {
                        if n == 0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        (-beta * cfg.omega(k) * n as f64).exp()
                    }
                })
                .collect();
            let z: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= z);
            p
        })
        .collect();
    let dim = basis.dim();
    let populations: Vec<f64> = (0..dim)
        .map(|i| {
            basis
                .decode(i)
                .iter()
                .enumerate()
                .map(|(k, &n)| single[k][n])
                .product()
        })
        .collect();
    let occupations: Vec<f64> = single
        .iter()
        .map(|p| p.iter().enumerate().map(|(n, x)| n as f64 * x).sum())
        .collect();
    let expected: Vec<f64> = (1..=fock.n_modes).map(|k| bath.occupation(cfg.omega(k))).collect();
    for (k, (got, want)) in occupations.iter().zip(&expected).enumerate() {
        if (got - want).abs() > OCCUPATION_TOL {
            return Err(Error::Truncation(format!(
                "mode {}: Tr(ρN) = {got:.6e} vs N̄ = {want:.6e}",
                k + 1
            )));
        }
    }
    let rho = Operator::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        populations.iter().map(|&p| re(p)),
    ));
    Ok(ThermalState {
        rho,
        populations,
        occupations,
        expected,
        beta,
    })
}

/// exp(−ihH) from the eigendecomposition of the Hermitian generator.
pub fn unitary_step(h: &Operator, step: f64) -> Operator {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let phases = nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -step * l)),
    );
    let mut vd = v.clone();
    for (mut col, p) in vd.column_iter_mut().zip(phases.iter()) {
        col *= *p;
    }
    vd * v.adjoint()
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Time-ordered propagator of H(t) over the trajectory domain.
pub fn propagator(
    parts: &HamiltonianParts,
    traj: &Trajectory,
    fock: &FockConfig,
    dt: f64,
) -> Result<Operator> {
    let t0 = traj.t_start();
    let steps = (traj.duration() / dt).ceil().max(1.0) as usize;
    let h = traj.duration() / steps as f64;
    let dim = parts.h0.nrows();
    let mut u = Operator::identity(dim, dim);
    let at = |t: f64| {
        let d = traj.derivs(t);
        (d.value, d.d1)
    };
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        let step = match fock.integrator_order {
            2 => {
                let (d, v) = at(t + 0.5 * h);
                unitary_step(&parts.at(d, v), h)
            }
            _ => {
                // Two-exponential commutator-free scheme on the Gauss nodes.
                let a1 = 0.25 - SQRT3_6;
                let a2 = 0.25 + SQRT3_6;
                let (d1, v1) = at(t + (0.5 - SQRT3_6) * h);
                let (d2, v2) = at(t + (0.5 + SQRT3_6) * h);
                // Each combination carries H₀ with weight 1/2.
                let first = parts.at(2.0 * (a2 * d1 + a1 * d2), 2.0 * (a2 * v1 + a1 * v2));
                let second = parts.at(2.0 * (a1 * d1 + a2 * d2), 2.0 * (a1 * v1 + a2 * v2));
                unitary_step(&second, 0.5 * h) * unitary_step(&first, 0.5 * h)
            }
        };
        u = step * u;
    }
    Ok(u)
}

/// ρ(t_end) = UρU† for the time-ordered propagator over the trajectory.
pub fn evolve(
    rho0: &Operator,
    cfg: &CavityConfig,
    traj: &Trajectory,
    fock: &FockConfig,
) -> Result<Operator> {
    fock.check_step(cfg)?;
    let parts = HamiltonianParts::new(cfg, fock);
    evolve_with(rho0, &parts, traj, fock, fock.dt)
}

fn evolve_with(
    rho0: &Operator,
    parts: &HamiltonianParts,
    traj: &Trajectory,
    fock: &FockConfig,
    dt: f64,
) -> Result<Operator> {
    if rho0.nrows() != fock.dim() || rho0.ncols() != fock.dim() {
        return Err(Error::param("rho0", "dimension does not match the Fock space"));
    }
    let u = propagator(parts, traj, fock, dt)?;
    let rho = &u * rho0 * u.adjoint();
    if at_rest(traj) {
        let d0 = traj.derivs(traj.t_start());
        let d1 = traj.derivs(traj.t_end());
        let e0 = energy_expectation(rho0, &parts.at(d0.value, 0.0))?;
        let e1 = energy_expectation(&rho, &parts.at(d1.value, 0.0))?;
        if (e1 - e0).abs() > DRIFT_TOL {
            return Err(Error::StepSize(format!(
                "energy drift {:.3e} for a wall at rest",
                e1 - e0
            )));
        }
    }
    Ok(rho)
}

fn at_rest(traj: &Trajectory) -> bool {
    const PROBES: usize = 64;
    let (a, b) = (traj.t_start(), traj.t_end());
    let d0 = traj.delta(a);
    (0..=PROBES).all(|i| {
        let t = a + (b - a) * i as f64 / PROBES as f64;
        traj.ddelta(t) == 0.0 && traj.delta(t) == d0
    })
}

/// Largest entry of U†U − I.
pub fn unitarity_defect(u: &Operator) -> f64 {
    let dim = u.nrows();
    (u.adjoint() * u - Operator::identity(dim, dim))
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn hermiticity_defect(h: &Operator) -> f64 {
    (h - h.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn energy_expectation(rho: &Operator, h: &Operator) -> Result<f64> {
    if rho.shape() != h.shape() || rho.nrows() != rho.ncols() {
        return Err(Error::param("rho", "dimension does not match the operator"));
    }
    let scale = h.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(defect));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            acc += rho[(i, j)] * h[(j, i)];
        }
    }
    if acc.im.abs() > IMAG_TOL {
        return Err(Error::NotHermitian(acc.im.abs()));
    }
    Ok(acc.re)
}

/// Which operator product a trace identity is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    /// a_i†²a_i²N_k
    PairLoweredN,
    /// a_i²a_i†²N_k
    PairRaisedN,
    /// a_ia_ja_i†a_j†N_k
    CreateN,
    /// a_i†a_ja_ia_j†N_k
    ScatterN,
    /// a_i†a_j†a_ia_jN_k
    AnnihilateN,
    /// a_i†²N_ka_i²
    PairLoweredSandwich,
    /// a_i²N_ka_i†²
    PairRaisedSandwich,
    /// a_ia_jN_ka_i†a_j†
    CreateSandwich,
    /// a_i†a_jN_ka_ia_j†
    ScatterSandwich,
    /// a_i†a_j†N_ka_ia_j
    AnnihilateSandwich,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 10] = [
        IdentityKind::PairLoweredN,
        IdentityKind::PairRaisedN,
        IdentityKind::CreateN,
        IdentityKind::ScatterN,
        IdentityKind::AnnihilateN,
        IdentityKind::PairLoweredSandwich,
        IdentityKind::PairRaisedSandwich,
        IdentityKind::CreateSandwich,
        IdentityKind::ScatterSandwich,
        IdentityKind::AnnihilateSandwich,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IdentityKind::PairLoweredN => "a_i+^2 a_i^2 N_k",
            IdentityKind::PairRaisedN => "a_i^2 a_i+^2 N_k",
            IdentityKind::CreateN => "a_i a_j a_i+ a_j+ N_k",
            IdentityKind::ScatterN => "a_i+ a_j a_i a_j+ N_k",
            IdentityKind::AnnihilateN => "a_i+ a_j+ a_i a_j N_k",
            IdentityKind::PairLoweredSandwich => "a_i+^2 N_k a_i^2",
            IdentityKind::PairRaisedSandwich => "a_i^2 N_k a_i+^2",
            IdentityKind::CreateSandwich => "a_i a_j N_k a_i+ a_j+",
            IdentityKind::ScatterSandwich => "a_i+ a_j N_k a_i a_j+",
            IdentityKind::AnnihilateSandwich => "a_i+ a_j+ N_k a_i a_j",
        }
    }

    fn two_mode(&self) -> bool {
        !matches!(
            self,
            IdentityKind::PairLoweredN
                | IdentityKind::PairRaisedN
                | IdentityKind::PairLoweredSandwich
                | IdentityKind::PairRaisedSandwich
        )
    }

    /// The first five hold only for k distinct from i and j.
    fn k_distinct(&self) -> bool {
        matches!(
            self,
            IdentityKind::PairLoweredN
                | IdentityKind::PairRaisedN
                | IdentityKind::CreateN
                | IdentityKind::ScatterN
                | IdentityKind::AnnihilateN
        )
    }

    pub fn word(&self, i: usize, j: usize, k: usize) -> Vec<Ladder> {
        use Ladder::*;
        match self {
            IdentityKind::PairLoweredN => vec![Raise(i), Raise(i), Lower(i), Lower(i), Number(k)],
            IdentityKind::PairRaisedN => vec![Lower(i), Lower(i), Raise(i), Raise(i), Number(k)],
            IdentityKind::CreateN => vec![Lower(i), Lower(j), Raise(i), Raise(j), Number(k)],
            IdentityKind::ScatterN => vec![Raise(i), Lower(j), Lower(i), Raise(j), Number(k)],
            IdentityKind::AnnihilateN => vec![Raise(i), Raise(j), Lower(i), Lower(j), Number(k)],
            IdentityKind::PairLoweredSandwich => vec![Raise(i), Raise(i), Number(k), Lower(i), Lower(i)],
            IdentityKind::PairRaisedSandwich => vec![Lower(i), Lower(i), Number(k), Raise(i), Raise(i)],
            IdentityKind::CreateSandwich => vec![Lower(i), Lower(j), Number(k), Raise(i), Raise(j)],
            IdentityKind::ScatterSandwich => vec![Raise(i), Lower(j), Number(k), Lower(i), Raise(j)],
            IdentityKind::AnnihilateSandwich => vec![Raise(i), Raise(j), Number(k), Lower(i), Lower(j)],
        }
    }

    /// Closed form as published with the derivation of the friction energy.
    pub fn published(&self, n: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let (ni, nj, nk) = (n[i], n[j], n[k]);
        match self {
            IdentityKind::PairLoweredN => ni * (ni - 1.0) * nk,
            IdentityKind::PairRaisedN => (ni + 1.0) * (ni + 2.0) * nk,
            IdentityKind::CreateN => (ni + 1.0) * (nj + 1.0) * nk,
            IdentityKind::ScatterN => ni * (nj + 1.0) * nk,
            IdentityKind::AnnihilateN => ni * nj * nk,
            IdentityKind::PairLoweredSandwich => ni * (ni - 1.0) * (nk - 2.0 * d(k, i)),
            IdentityKind::PairRaisedSandwich => (ni + 1.0) * (ni + 2.0) * (nk + 2.0 * d(k, i)),
            IdentityKind::CreateSandwich => (ni + 1.0) * (nj + 1.0) * (d(k, j) + d(k, i) + nk),
            IdentityKind::ScatterSandwich => ni * (nj + 1.0) * (-d(k, i) + d(k, j) + nk),
            IdentityKind::AnnihilateSandwich => ni * nj * (-d(k, i) - d(k, j) + nk),
        }
    }

    /// Thermal expectation from the factorial moments ⟨a†ᵐaᵐ⟩ = m!N̄ᵐ and
    /// ⟨aᵐa†ᵐ⟩ = m!(N̄+1)ᵐ.
    pub fn exact(&self, n: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let (ni, nj, nk) = (n[i], n[j], n[k]);
        let (pi, pj) = (ni + 1.0, nj + 1.0);
        match self {
            IdentityKind::PairLoweredN => {
                if k == i {
                    6.0 * ni.powi(3) + 4.0 * ni * ni
                } else {
                    2.0 * ni * ni * nk
                }
            }
            IdentityKind::PairRaisedN => {
                if k == i {
                    // (N+1)(N+2)N = (N+1)(N+2)(N+3) − 3(N+1)(N+2)
                    6.0 * pi.powi(3) - 6.0 * pi * pi
                } else {
                    2.0 * pi * pi * nk
                }
            }
            IdentityKind::CreateN => {
                if k == i {
                    (2.0 * ni + 1.0) * pi * pj - pi * pj
                } else if k == j {
                    (2.0 * nj + 1.0) * pj * pi - pi * pj
                } else {
                    pi * pj * nk
                }
            }
            IdentityKind::ScatterN => {
                if k == i {
                    (2.0 * ni * ni + ni) * pj
                } else if k == j {
                    ni * (2.0 * nj * nj + 2.0 * nj)
                } else {
                    ni * pj * nk
                }
            }
            IdentityKind::AnnihilateN => {
                if k == i {
                    (2.0 * ni * ni + ni) * nj
                } else if k == j {
                    ni * (2.0 * nj * nj + nj)
                } else {
                    ni * nj * nk
                }
            }
            IdentityKind::PairLoweredSandwich => {
                if k == i {
                    6.0 * ni.powi(3)
                } else {
                    2.0 * ni * ni * nk
                }
            }
            IdentityKind::PairRaisedSandwich => {
                if k == i {
                    6.0 * pi.powi(3) - 2.0 * pi * pi
                } else {
                    2.0 * pi * pi * nk
                }
            }
            IdentityKind::CreateSandwich => {
                if k == i {
                    pi * (2.0 * ni + 1.0) * pj
                } else if k == j {
                    pi * pj * (2.0 * nj + 1.0)
                } else {
                    pi * pj * nk
                }
            }
            IdentityKind::ScatterSandwich => {
                if k == i {
                    2.0 * ni * ni * pj
                } else if k == j {
                    ni * pj * (2.0 * nj + 1.0)
                } else {
                    ni * pj * nk
                }
            }
            IdentityKind::AnnihilateSandwich => {
                if k == i {
                    2.0 * ni * ni * nj
                } else if k == j {
                    2.0 * nj * nj * ni
                } else {
                    ni * nj * nk
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub kind: IdentityKind,
    /// One-based mode labels.
    pub i: usize,
    pub j: Option<usize>,
    pub k: usize,
    /// Exact matrix elements averaged over the truncated thermal state.
    pub numeric: f64,
    /// The same trace with every ladder operator truncated to the cutoff.
    pub truncated_product: f64,
    pub published: f64,
    pub exact: f64,
}

impl IdentityCheck {
    pub fn published_deviation(&self) -> f64 {
        (self.numeric - self.published).abs()
    }

    pub fn exact_deviation(&self) -> f64 {
        (self.numeric - self.exact).abs()
    }
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub beta: f64,
    pub n_max: usize,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn max_published_deviation(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.published_deviation()))
    }

    pub fn max_exact_deviation(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.exact_deviation()))
    }

    /// Checks whose published form misses by more than `tol`.
    pub fn published_failures(&self, tol: f64) -> Vec<&IdentityCheck> {
        self.checks.iter().filter(|c| c.published_deviation() > tol).collect()
    }
}

/// Tr(ρ·word) for a diagonal ρ with the given populations.
fn diagonal_trace(basis: &Basis, populations: &[f64], word: &[Ladder], clip: bool) -> f64 {
    let mut terms: Vec<f64> = Vec::with_capacity(populations.len());
    for (idx, &p) in populations.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let occ = basis.decode(idx);
        if let Some((image, amp)) = basis.apply_clipped(word, &occ, clip) {
            if image == occ {
                terms.push(p * amp);
            }
        }
    }
    crate::quadrature::pairwise_sum(&terms)
}

pub fn verify_trace_identities(beta: f64, fock: &FockConfig, cfg: &CavityConfig) -> Result<IdentityReport> {
    let state = thermal_state(beta, fock, cfg)?;
    let basis = fock.basis();
    let n = &state.expected;
    let m = fock.n_modes;
    let mut checks = Vec::new();
    for kind in IdentityKind::ALL {
        for i in 0..m {
            let partners: Vec<Option<usize>> = if kind.two_mode() {
                (0..m).filter(|&j| j != i).map(Some).collect()
            } else {
                vec![None]
            };
            for j in partners {
                let jj = j.unwrap_or(i);
                for k in 0..m {
                    if kind.k_distinct() && (k == i || k == jj) {
                        continue;
                    }
                    let word = kind.word(i, jj, k);
                    let numeric = diagonal_trace(&basis, &state.populations, &word, false);
                    let truncated_product = diagonal_trace(&basis, &state.populations, &word, true);
                    checks.push(IdentityCheck {
                        kind,
                        i: i + 1,
                        j: j.map(|x| x + 1),
                        k: k + 1,
                        numeric,
                        truncated_product,
                        published: kind.published(n, i, jj, k),
                        exact: kind.exact(n, i, jj, k),
                    });
                }
            }
        }
    }
    Ok(IdentityReport {
        beta,
        n_max: fock.n_max,
        checks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub epsilon: f64,
    /// Tr(ρ(τ)H(τ)) from direct evolution.
    pub e_full: f64,
    /// Σ pᵢλᵢ: thermal populations of H₀ carried onto the ordered spectrum of H(τ).
    pub e_adiab: f64,
    /// Friction energy restricted to the retained modes.
    pub e_friction: f64,
    /// e_adiab + e_friction.
    pub e_pert: f64,
    /// (e_full − e_adiab)/e_friction.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionComparison {
    pub rows: Vec<ComparisonRow>,
    /// Linear extrapolation of the ratio to ε → 0.
    pub richardson_ratio: f64,
}

/// Ratio extrapolated linearly in ε to ε = 0.
pub fn richardson(e1: f64, r1: f64, e2: f64, r2: f64) -> f64 {
    (e1 * r2 - e2 * r1) / (e1 - e2)
}

/// Spectral adiabatic baseline: the n-th most populated state of ρ0 is
/// carried onto the n-th lowest level of `h`.
pub fn adiabatic_energy(populations: &[f64], h: &Operator) -> f64 {
    let mut levels: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    levels.sort_by(f64::total_cmp);
    let mut p = populations.to_vec();
    p.sort_by(|a, b| b.total_cmp(a));
    let terms: Vec<f64> = p.iter().zip(&levels).map(|(p, l)| p * l).collect();
    crate::quadrature::pairwise_sum(&terms)
}

fn compare_one(
    cfg: &CavityConfig,
    bath: &ThermalBath,
    traj: &Trajectory,
    fock: &FockConfig,
    spec: &QuadratureSpec,
    state: &ThermalState,
) -> Result<ComparisonRow> {
    let parts = HamiltonianParts::new(cfg, fock);
    let rho = evolve_with(&state.rho, &parts, traj, fock, fock.dt)?;
    let end = traj.derivs(traj.t_end());
    let h_end = parts.at(end.value, end.d1);
    let e_full = energy_expectation(&rho, &h_end)?;
    let e_adiab = adiabatic_energy(&state.populations, &h_end);
    let restricted = cfg.with_modes(fock.n_modes)?;
    let e_friction = FrictionModel::new(&restricted, traj, spec)?
        .evaluate(bath, cfg.epsilon)?
        .value;
    let ratio = if e_friction == 0.0 {
        f64::NAN
    } else {
        (e_full - e_adiab) / e_friction
    };
    Ok(ComparisonRow {
        epsilon: cfg.epsilon,
        e_full,
        e_adiab,
        e_friction,
        e_pert: e_adiab + e_friction,
        ratio,
    })
}

/// Compares direct evolution against the perturbative friction energy at
/// ε = cfg.epsilon and ε/2.
pub fn validate_friction(
    cfg: &CavityConfig,
    bath: &ThermalBath,
    traj: &Trajectory,
    fock: &FockConfig,
    spec: &QuadratureSpec,
) -> Result<FrictionComparison> {
    if cfg.epsilon > VALIDATION_MAX_EPSILON {
        return Err(Error::param(
            "epsilon",
            format!("validation needs ε ≤ {VALIDATION_MAX_EPSILON}, got {}", cfg.epsilon),
        ));
    }
    fock.check_step(cfg)?;
    let state = thermal_state(bath.beta, fock, cfg)?;
    let half = cfg.with_epsilon(0.5 * cfg.epsilon)?;
    let (a, b) = rayon::join(
        || compare_one(cfg, bath, traj, fock, spec, &state),
        || compare_one(&half, bath, traj, fock, spec, &state),
    );
    let (a, b) = (a?, b?);
    Ok(FrictionComparison {
        richardson_ratio: richardson(a.epsilon, a.ratio, b.epsilon, b.ratio),
        rows: vec![a, b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{quintic, static_wall, Trajectory};
    use std::f64::consts::LN_2;

    fn cav(eps: f64) -> CavityConfig {
        CavityConfig::unit_fundamental(eps, 8).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(FockConfig::new(2, 8, 0.01, 4).is_ok());
        assert!(FockConfig::new(2, 8, 0.01, 3).is_err());
        assert!(FockConfig::new(4, 10, 0.01, 2).is_err());
        assert!(FockConfig::with_dim_cap(5, 9, 0.01, 2, 100_000).is_ok());
        assert!(FockConfig::with_dim_cap(2, 8, 0.01, 2, 200_000).is_err());
        let f = FockConfig::new(2, 8, 0.06, 2).unwrap();
        assert!(f.check_step(&cav(0.01)).is_err());
        assert!(FockConfig::new(2, 8, 0.05, 2).unwrap().check_step(&cav(0.01)).is_ok());
    }

    #[test]
    fn basis_round_trip() {
        let b = FockConfig::new(3, 4, 0.01, 2).unwrap().basis();
        for i in 0..b.dim() {
            assert_eq!(b.encode(&b.decode(i)), i);
        }
        assert_eq!(b.decode(1), vec![1, 0, 0]);
        assert_eq!(b.decode(5), vec![0, 1, 0]);
    }

    #[test]
    fn static_hamiltonian_is_free() {
        let fock = FockConfig::new(2, 4, 0.01, 2).unwrap();
        let traj = static_wall(0.0, 1.0).unwrap();
        let h = build_hamiltonian(0.5, &cav(0.01), &traj, &fock).unwrap();
        let b = fock.basis();
        for r in 0..fock.dim() {
            for c in 0..fock.dim() {
                let want = if r == c {
                    let o = b.decode(r);
                    o[0] as f64 + 2.0 * o[1] as f64
                } else {
                    0.0
                };
                assert_eq!(h[(r, c)], re(want));
            }
        }
        assert!(build_hamiltonian(1.5, &cav(0.01), &traj, &fock).is_err());
    }

    #[test]
    fn single_mode_off_diagonal_is_squeezing() {
        let fock = FockConfig::new(1, 6, 0.01, 2).unwrap();
        let traj = Trajectory::new("const", 0.0, 1.0, |_| crate::trajectory::Derivatives { value: 0.5, d1: 0.0, d2: 0.0, d3: 0.0 }).unwrap();
        let h = build_hamiltonian(0.3, &cav(0.02), &traj, &fock).unwrap();
        let wd = 1.0 * 0.02 * 0.5;
        for r in 0..7usize {
            for c in 0..7usize {
                let z = h[(r, c)];
                if r == c {
                    assert!((z.re - r as f64 * (1.0 + wd)).abs() < 1e-15);
                } else if r.abs_diff(c) == 2 {
                    let n = r.max(c) as f64;
                    let want = wd / 2.0 * (n * (n - 1.0)).sqrt();
                    assert!((z.re - want).abs() < 1e-15 && z.im == 0.0);
                } else {
                    assert_eq!(z, re(0.0));
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_exactly_hermitian() {
        let fock = FockConfig::new(3, 4, 0.01, 2).unwrap();
        let traj = quintic(1.0).unwrap();
        let h = build_hamiltonian(0.37, &cav(0.01), &traj, &fock).unwrap();
        assert_eq!(hermiticity_defect(&h), 0.0);
        assert!(h.iter().any(|z| z.im != 0.0));
    }

    #[test]
    fn ladder_matrices_agree_with_dense_products() {
        use Ladder::*;
        let fock = FockConfig::new(2, 5, 0.01, 2).unwrap();
        let b = fock.basis();
        let one = re(1.0);
        let lower = |k| b.matrix(&[(one, vec![Lower(k)])]);
        let raise = |k| b.matrix(&[(one, vec![Raise(k)])]);
        let word = vec![Raise(0), Lower(1), Number(0), Lower(0), Raise(1)];
        let direct = b.matrix(&[(one, word)]);
        let num0 = b.matrix(&[(one, vec![Number(0)])]);
        let dense = raise(0) * lower(1) * num0 * lower(0) * raise(1);
        assert!((direct - dense).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn vacuum_and_ln2_thermal_states() {
        let fock = FockConfig::new(1, 30, 0.01, 2).unwrap();
        let vac = thermal_state(f64::INFINITY, &fock, &cav(0.01)).unwrap();
        assert_eq!(vac.rho[(0, 0)], re(1.0));
        assert_eq!(vac.populations.iter().sum::<f64>(), 1.0);
        let s = thermal_state(LN_2, &fock, &cav(0.01)).unwrap();
        assert!((s.occupations[0] - 1.0).abs() < 1e-4);
        assert!((s.populations.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let e = energy_expectation(&s.rho, &HamiltonianParts::new(&cav(0.01), &fock).h0).unwrap();
        assert!((e - 1.0).abs() < 1e-4);
        let e0 = energy_expectation(&vac.rho, &HamiltonianParts::new(&cav(0.01), &fock).h0).unwrap();
        assert_eq!(e0, 0.0);
    }

    #[test]
    fn coarse_cutoff_is_rejected() {
        let fock = FockConfig::new(1, 6, 0.01, 2).unwrap();
        assert!(matches!(
            thermal_state(0.5, &fock, &cav(0.01)),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn energy_is_linear_and_rejects_non_hermitian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let dim = 6;
        let herm = |rng: &mut rand::rngs::StdRng| {
            let m = Operator::from_fn(dim, dim, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut h = &m + m.adjoint();
            hermitize(&mut h);
            h
        };
        let mut rho = herm(&mut rng);
        rho = &rho * &rho;
        let tr = rho.trace();
        rho /= tr;
        for _ in 0..10 {
            let (x, y) = (herm(&mut rng), herm(&mut rng));
            let sum = energy_expectation(&rho, &(&x + &y)).unwrap();
            let parts = energy_expectation(&rho, &x).unwrap() + energy_expectation(&rho, &y).unwrap();
            assert!((sum - parts).abs() < 1e-12);
        }
        let mut bad = herm(&mut rng);
        bad[(0, 1)] += re(1e-3);
        assert!(matches!(energy_expectation(&rho, &bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn steps_are_unitary() {
        let fock = FockConfig::new(2, 8, 0.01, 4).unwrap();
        let parts = HamiltonianParts::new(&cav(0.05), &fock);
        for (d, v) in [(0.0, 0.0), (0.3, 1.9), (1.0, -0.7)] {
            let u = unitary_step(&parts.at(d, v), 0.01);
            assert!(unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn free_evolution_keeps_occupations() {
        let fock = FockConfig::new(2, 6, 0.02, 4).unwrap();
        let cfg = cav(0.01);
        let s = thermal_state(2.5, &fock, &cfg).unwrap();
        let traj = static_wall(0.0, 3.0).unwrap();
        let rho = evolve(&s.rho, &cfg, &traj, &fock).unwrap();
        for i in 0..fock.dim() {
            assert!((rho[(i, i)].re - s.populations[i]).abs() < 1e-13);
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moving_wall_creates_photons_at_order_eps2() {
        let fock = FockConfig::new(1, 10, 0.005, 4).unwrap();
        let traj = quintic(1.0).unwrap();
        let grow = |eps: f64| {
            let cfg = cav(eps);
            let s = thermal_state(2.0, &fock, &cfg).unwrap();
            let rho = evolve(&s.rho, &cfg, &traj, &fock).unwrap();
            let n = HamiltonianParts::new(&cfg, &fock).h0;
            assert!((rho.trace().re - 1.0).abs() < 1e-10);
            energy_expectation(&rho, &n).unwrap() - s.occupations[0]
        };
        let (g1, g2) = (grow(0.01), grow(0.005));
        assert!(g1 > 0.0);
        assert!((g1 / g2 - 4.0).abs() < 0.1, "{}", g1 / g2);
    }

    fn evolve_error_order(order: usize) -> f64 {
        let cfg = cav(0.1);
        let traj = quintic(1.0).unwrap();
        let fock = FockConfig::new(2, 4, 0.1, order).unwrap();
        let parts = HamiltonianParts::new(&cfg, &fock);
        let s = thermal_state(4.0, &fock, &cfg).unwrap();
        let run = |dt| evolve_with(&s.rho, &parts, &traj, &fock, dt).unwrap();
        let dt = 0.1;
        let reference = run(dt / 4.0);
        let e1 = (run(dt) - &reference).norm();
        let e2 = (run(dt / 2.0) - &reference).norm();
        (e1 / e2).log2()
    }

    #[test]
    fn convergence_orders() {
        // With a dt/4 reference the observed ratio is 2^p + 1.
        let o2 = evolve_error_order(2);
        let o4 = evolve_error_order(4);
        assert!((o2 - 5f64.log2()).abs() < 0.3, "order 2 measured {o2}");
        assert!((o4 - 17f64.log2()).abs() < 0.3, "order 4 measured {o4}");
    }

    #[test]
    fn identities_in_vacuum() {
        let fock = FockConfig::new(3, 4, 0.01, 2).unwrap();
        let r = verify_trace_identities(f64::INFINITY, &fock, &cav(0.01)).unwrap();
        assert!(r.max_published_deviation() < 1e-14);
        assert!(r.max_exact_deviation() < 1e-14);
    }

    #[test]
    fn exact_forms_hold_on_three_modes() {
        let fock = FockConfig::new(3, 8, 0.01, 2).unwrap();
        let r = verify_trace_identities(2.0, &fock, &cav(0.01)).unwrap();
        assert!(r.max_exact_deviation() < 1e-4, "{}", r.max_exact_deviation());
        // The three-index cases of the published forms are right.
        for c in &r.checks {
            let distinct = c.j.is_some_and(|j| c.k != c.i && c.k != j);
            let two_mode = matches!(
                c.kind,
                IdentityKind::CreateN
                    | IdentityKind::ScatterN
                    | IdentityKind::AnnihilateN
                    | IdentityKind::CreateSandwich
                    | IdentityKind::ScatterSandwich
                    | IdentityKind::AnnihilateSandwich
            );
            if distinct && two_mode {
                assert!(c.published_deviation() < 1e-4, "{c:?}");
            }
        }
    }

    #[test]
    fn published_pair_forms_miss() {
        let fock = FockConfig::new(3, 8, 0.01, 2).unwrap();
        let r = verify_trace_identities(2.0, &fock, &cav(0.01)).unwrap();
        let miss = r.published_failures(1e-4);
        assert!(miss.iter().any(|c| c.kind == IdentityKind::PairLoweredN));
        assert!(miss.iter().any(|c| c.kind == IdentityKind::PairRaisedN));
        assert!(r.max_published_deviation() > 1e-3);
    }

    #[test]
    fn ln2_pair_lowered_is_twice_nk() {
        let fock = FockConfig::new(2, 30, 0.01, 2).unwrap();
        let cfg = CavityConfig::unit_fundamental(0.01, 8).unwrap();
        // βω₁ = ln 2 gives N̄₁ = 1.
        let r = verify_trace_identities(LN_2, &fock, &cfg).unwrap();
        let c = r
            .checks
            .iter()
            .find(|c| c.kind == IdentityKind::PairLoweredN && c.i == 1 && c.k == 2)
            .unwrap();
        let nk = 1.0 / (2.0 * LN_2).exp_m1();
        assert!(c.published.abs() < 1e-15);
        assert!((c.numeric - 2.0 * nk).abs() < 1e-4);
    }

    #[test]
    fn deviations_shrink_with_cutoff() {
        let cfg = cav(0.01);
        let dev: Vec<f64> = [6, 8, 10]
            .iter()
            .map(|&n| {
                let fock = FockConfig::new(3, n, 0.01, 2).unwrap();
                verify_trace_identities(2.0, &fock, &cfg).unwrap().max_exact_deviation()
            })
            .collect();
        assert!(dev[1] < dev[0] && dev[2] < dev[1], "{dev:?}");
    }

    /// Thermal expectation of a word on a product state, summing each mode's
    /// untruncated geometric series separately.
    fn series_expectation(word: &[Ladder], nbar: &[f64]) -> f64 {
        let b = Basis { n_modes: 1, n_max: 400 };
        (0..nbar.len())
            .map(|mode| {
                let sub: Vec<Ladder> = word
                    .iter()
                    .filter_map(|op| match *op {
                        Ladder::Raise(q) if q == mode => Some(Ladder::Raise(0)),
                        Ladder::Lower(q) if q == mode => Some(Ladder::Lower(0)),
                        Ladder::Number(q) if q == mode => Some(Ladder::Number(0)),
                        _ => None,
                    })
                    .collect();
                let x = nbar[mode] / (nbar[mode] + 1.0);
                (0..=b.n_max)
                    .map(|m| {
                        let p = (1.0 - x) * x.powi(m as i32);
                        b.apply(&sub, &[m])
                            .filter(|(s, _)| s[0] == m)
                            .map_or(0.0, |(_, a)| p * a)
                    })
                    .sum::<f64>()
            })
            .product()
    }

    #[test]
    fn exact_forms_match_single_mode_series() {
        let n = [0.4, 0.15, 0.05];
        for kind in IdentityKind::ALL {
            for (i, j, k) in [(0, 1, 2), (0, 1, 0), (0, 1, 1), (1, 0, 1), (2, 0, 2)] {
                let j = if kind.two_mode() { j } else { i };
                let got = series_expectation(&kind.word(i, j, k), &n);
                let want = kind.exact(&n, i, j, k);
                assert!((got - want).abs() < 1e-12, "{kind:?} ({i},{j},{k}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn richardson_removes_linear_term() {
        let r = |e: f64| 1.0 + 3.0 * e;
        assert!((richardson(0.01, r(0.01), 0.005, r(0.005)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn static_wall_gives_adiabatic_energy() {
        let fock = FockConfig::new(2, 8, 0.01, 4).unwrap();
        let cfg = cav(0.01);
        let traj = static_wall(0.0, 1.0).unwrap();
        let spec = QuadratureSpec::default();
        let c = validate_friction(&cfg, &ThermalBath::new(2.0).unwrap(), &traj, &fock, &spec).unwrap();
        for row in &c.rows {
            assert!((row.e_full - row.e_adiab).abs() < 1e-12);
            assert_eq!(row.e_friction, 0.0);
        }
    }

    #[test]
    fn validate_rejects_large_epsilon() {
        let fock = FockConfig::new(2, 8, 0.01, 4).unwrap();
        let traj = quintic(1.0).unwrap();
        let r = validate_friction(&cav(0.05), &ThermalBath::new(2.0).unwrap(), &traj, &fock, &QuadratureSpec::default());
        assert!(r.is_err());
    }
}
