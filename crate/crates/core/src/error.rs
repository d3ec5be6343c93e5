use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {operand}: expected {expected}, found {found}")]
    DimensionMismatch {
        operand: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("reciprocal guard breached: operand {value:e} is within {guard:e} of zero")]
    Guard { value: f64, guard: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("relative degree check failed: {0}")]
    RelativeDegree(String),

    #[error("degenerate safety constraint: control row norm {norm:e} below {threshold:e}")]
    DegenerateConstraint { norm: f64, threshold: f64 },

    #[error("state too close to the boundary of level {level}: value {value:e}")]
    BoundaryProximity { level: usize, value: f64 },

    #[error("quadratic cost is not positive definite")]
    NotPositiveDefinite,

    #[error("time {t} outside realization horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("initial state is outside the safe set: {0}")]
    InitialStateRejected(String),

    #[error("integration fault at step {step} (t = {t}): {reason}")]
    IntegrationFault { step: usize, t: f64, reason: String },
}
