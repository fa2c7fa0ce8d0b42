use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("layer {layer} out of range 0..={horizon}")]
    LayerOutOfRange { layer: usize, horizon: usize },

    #[error("divergence is infinite: reference policy is zero where the occupancy has mass (layer {layer}, state {state}, action {action})")]
    InfiniteDivergence {
        layer: usize,
        state: usize,
        action: usize,
    },

    #[error("invalid gridworld: {0}")]
    InvalidGridworld(String),

    #[error("kernel entry {value} below the declared floor {floor}")]
    KernelFloorViolated { value: f64, floor: f64 },

    #[error("point is not strictly interior (min slack {min_slack})")]
    NotInterior { min_slack: f64 },

    #[error("cholesky factorisation failed")]
    Factorization,

    #[error("{what} did not converge within {iterations} iterations (decrement {decrement})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        decrement: f64,
    },

    #[error("observed objective value {value} outside [0, {upper}]")]
    ObjectiveOutOfRange { value: f64, upper: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
