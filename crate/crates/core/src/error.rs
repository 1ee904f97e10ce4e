use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no interior equilibrium: bordered system is singular")]
    NoInteriorEquilibrium,

    #[error("equilibrium is not interior (entry {index} = {value})")]
    EquilibriumNotInterior { index: usize, value: f64 },

    #[error("singular linear system")]
    SingularSystem,

    #[error("perturbed equilibrium left the open simplex (entry {index} = {value}); delta beyond tolerance")]
    ToleranceExceeded { index: usize, value: f64 },

    #[error("parameter regime violated: {0}")]
    RegimeViolated(String),

    #[error("interaction strength is positive but no mean was supplied")]
    MissingMean,

    #[error("operation not supported for this interaction: {0}")]
    UnsupportedInteraction(&'static str),

    #[error("integrator blow-up at step {step} (particle {particle})")]
    IntegratorBlowup { step: u64, particle: usize },

    #[error("fixed-point iteration exceeded {0} iterations")]
    MaxIterations(usize),

    #[error("map is not contractive at these parameters (successive deltas increased)")]
    NotContractive,

    #[error("invalid rationalization: block {index} has zero width")]
    InvalidRationalization { index: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,
}
