//! Static-cavity physics: Dirichlet mode spectrum, Bose-Einstein occupations,
//! the instantaneous-basis coupling coefficients, the static Casimir energy and
//! the SQUID flux to effective-length map.
//!
//! Units are ħ = c = k_B = 1. With the default cavity length `L0 = π` the
//! fundamental frequency is ω₁ = 1, so times and inverse temperatures can be
//! read directly in units of 1/ω₁.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Compression ratios above this value are flagged as outside the perturbative
/// regime of the O(ε²) friction expansion.
pub const PERTURBATIVE_EPSILON: f64 = 0.1;

/// Default floor on |cos f| for [`effective_length`].
pub const DEFAULT_FLUX_FLOOR: f64 = 1e-6;

/// Static cavity geometry and summation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig {
    /// Rest length L₀ of the cavity.
    pub l0: f64,
    /// Compression ratio ε, with L₁ = L₀(1 − ε).
    pub epsilon: f64,
    /// Mode cutoff K.
    pub n_modes: usize,
    /// Relative tolerance on the estimated mode-sum tail.
    pub tail_tol: f64,
}

impl CavityConfig {
    pub const DEFAULT_MODES: usize = 64;
    pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

    pub fn new(l0: f64, epsilon: f64, n_modes: usize) -> Result<Self> {
        Self::with_tail_tol(l0, epsilon, n_modes, Self::DEFAULT_TAIL_TOL)
    }

    pub fn with_tail_tol(l0: f64, epsilon: f64, n_modes: usize, tail_tol: f64) -> Result<Self> {
        if !(l0.is_finite() && l0 > 0.0) {
            return Err(Error::param("L0", format!("must be positive and finite, got {l0}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("must lie in (0, 1), got {epsilon}")));
        }
        if n_modes == 0 {
            return Err(Error::param("modes", "at least one mode is required"));
        }
        if !(tail_tol > 0.0) {
            return Err(Error::param("tail-tol", format!("must be positive, got {tail_tol}")));
        }
        Ok(Self {
            l0,
            epsilon,
            n_modes,
            tail_tol,
        })
    }

    /// Cavity with ω₁ = 1.
    pub fn unit_fundamental(epsilon: f64, n_modes: usize) -> Result<Self> {
        Self::new(PI, epsilon, n_modes)
    }

    pub fn perturbative_warning(&self) -> bool {
        self.epsilon > PERTURBATIVE_EPSILON
    }

    /// Compressed length L₁ = L₀(1 − ε).
    pub fn l1(&self) -> f64 {
        self.l0 * (1.0 - self.epsilon)
    }

    /// ω₁ = π/L₀.
    pub fn omega1(&self) -> f64 {
        PI / self.l0
    }

    /// ω_k(L₀).
    pub fn omega(&self, k: usize) -> f64 {
        k as f64 * (PI / self.l0)
    }

    /// ω_k(L₁).
    pub fn omega_compressed(&self, k: usize) -> f64 {
        k as f64 * (PI / self.l1())
    }

    /// Same geometry with a different compression ratio.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::with_tail_tol(self.l0, epsilon, self.n_modes, self.tail_tol)
    }

    /// Same geometry with a different mode cutoff.
    pub fn with_modes(&self, n_modes: usize) -> Result<Self> {
        Self::with_tail_tol(self.l0, self.epsilon, n_modes, self.tail_tol)
    }
}

/// A heat bath at inverse temperature β; `β = ∞` is the vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalBath {
    pub beta: f64,
}

impl ThermalBath {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn vacuum() -> Self {
        Self { beta: f64::INFINITY }
    }

    pub fn is_vacuum(&self) -> bool {
        self.beta.is_infinite()
    }

    pub fn occupation(&self, omega: f64) -> f64 {
        occupation_unchecked(self.beta, omega)
    }
}

/// Dirichlet eigenfrequency kπ/L.
pub fn mode_frequency(k: usize, l: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "Dirichlet cavities have no zero mode"));
    }
    if !(l > 0.0) {
        return Err(Error::param("L", format!("must be positive, got {l}")));
    }
    Ok(k as f64 * (PI / l))
}

/// dω_k/dL evaluated at L, i.e. −kπ/L².
pub fn mode_frequency_derivative(k: usize, l: f64) -> Result<f64> {
    mode_frequency(k, l).map(|w| -w / l)
}

/// Bose-Einstein occupation 1/(e^{βω} − 1); exactly zero for an infinite β.
pub fn thermal_occupation(beta: f64, omega: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    if !(omega > 0.0) {
        return Err(Error::param("omega", format!("must be positive, got {omega}")));
    }
    Ok(occupation_unchecked(beta, omega))
}

pub(crate) fn occupation_unchecked(beta: f64, omega: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / (beta * omega).exp_m1()
    }
}

/// Antisymmetric coupling g_kj = (−1)^{j+k} 2jk/(j² − k²), with g_kk = 0.
pub fn coupling_g(k: usize, j: usize) -> f64 {
    assert!(k >= 1 && j >= 1, "mode indices start at 1 (got k={k}, j={j})");
    if k == j {
        return 0.0;
    }
    let (kf, jf) = (k as f64, j as f64);
    let sign = if (j + k).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 2.0 * jf * kf / ((jf - kf) * (jf + kf))
}

/// Static Casimir energy −π/(24L).
pub fn casimir_energy(l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::param("L", format!("must be positive, got {l}")));
    }
    Ok(-PI / (24.0 * l))
}

/// Effective cavity length L₀(1 + E_l/(2 E_J cos f)) of a SQUID-terminated line.
pub fn effective_length(f: f64, e_j: f64, e_l: f64, l0: f64) -> Result<f64> {
    effective_length_with_floor(f, e_j, e_l, l0, DEFAULT_FLUX_FLOOR)
}

pub fn effective_length_with_floor(f: f64, e_j: f64, e_l: f64, l0: f64, floor: f64) -> Result<f64> {
    if !(e_j > 0.0) {
        return Err(Error::param("E_J", format!("must be positive, got {e_j}")));
    }
    if !(e_l > 0.0) {
        return Err(Error::param("E_l", format!("must be positive, got {e_l}")));
    }
    if !(l0 > 0.0) {
        return Err(Error::param("L0", format!("must be positive, got {l0}")));
    }
    let cos_f = f.cos();
    if cos_f.abs() < floor {
        return Err(Error::SingularFlux { cos_f, floor });
    }
    Ok(l0 * (1.0 + e_l / (2.0 * e_j * cos_f)))
}
