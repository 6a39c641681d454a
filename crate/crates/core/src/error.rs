use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular flux: |cos f| = {cos_f:e} is below the floor {floor:e}")]
    SingularFlux { cos_f: f64, floor: f64 },

    #[error(
        "quadrature did not converge within {panels} panels \
         (best estimate {estimate:e}, last refinement delta {delta:e})"
    )]
    Convergence {
        estimate: f64,
        delta: f64,
        panels: usize,
    },

    #[error("trajectory shape: {0}")]
    Shape(String),

    #[error("time {t} lies outside the trajectory domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("Fock truncation too coarse: {0}")]
    Truncation(String),

    #[error("step size: {0}")]
    StepSize(String),

    #[error("operator is not Hermitian (residue {0:e})")]
    NotHermitian(f64),

    #[error("sample file: {0}")]
    Samples(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
