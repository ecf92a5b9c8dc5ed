use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not stable: spectral abscissa {abscissa:.6e} is not below {threshold:.1e}")]
    Unstable { abscissa: f64, threshold: f64 },

    #[error("linear system is singular or ill-conditioned (reciprocal condition {rcond:.3e}){detail}")]
    IllConditioned { rcond: f64, detail: String },

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenNoConvergence(usize),

    #[error("friction violates its declared bounds at x = {x:?}: symmetric-part eigenvalues [{min:.6}, {max:.6}] outside [{lower}, {upper}]")]
    FrictionBounds {
        x: Vec<f64>,
        min: f64,
        max: f64,
        lower: f64,
        upper: f64,
    },

    #[error("finite-difference derivatives failed the Richardson check (discrepancy {discrepancy:.3e} > tolerance {tolerance:.3e})")]
    DerivativeTolerance { discrepancy: f64, tolerance: f64 },

    #[error("turbulent kinetic energy {value} falls below its floor {floor} at x = {x:?}")]
    KineticEnergyFloor { value: f64, floor: f64, x: Vec<f64> },

    #[error("step covariance is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trajectory {index} blew up at step {step}")]
    BlowUp { index: u64, step: usize },

    #[error("trajectory {index}: {source}")]
    InTrajectory { index: u64, source: Box<Error> },
}

impl Error {
    pub(crate) fn in_trajectory(self, index: u64) -> Self {
        match self {
            Error::InTrajectory { .. } => self,
            other => Error::InTrajectory {
                index,
                source: Box::new(other),
            },
        }
    }
}
