use thiserror::Error;

/// Errors surfaced by the solver library.
///
/// User-supplied callables are never clamped or repaired; a flow or jump
/// that leaves the state interval is reported, not masked.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{callable} returned {value} outside [{lo}, {hi}] at {context}")]
    CallableRange {
        callable: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
        context: String,
    },

    #[error("state {0} lies outside the state interval")]
    StateOutOfRange(f64),

    #[error("no post-jump state exists after a never-intervene action")]
    AdvanceAfterNever,

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("gradual cost bound is required to integrate over an unbounded horizon")]
    MissingGradualBound,

    #[error("strategy loops without discounting at x = {x}")]
    ZeroProgressLoop { x: f64 },

    #[error("path exceeded {0} decision epochs without terminating")]
    EpochCap(usize),

    #[error("value iteration did not converge in {sweeps} sweeps (last residual {residual:e})")]
    ValueIterationDiverged { sweeps: usize, residual: f64 },

    #[error("the closed-form engine is not available for this model: {0}")]
    UnsupportedEngine(String),

    #[error("dual maximization supports a single constraint; model declares {0}")]
    UnsupportedConstraintCount(usize),

    #[error("constraint level d = {0} must be non-negative")]
    NegativeConstraintLevel(f64),

    #[error("never-order regime ({0}); the critical multiplier is undefined")]
    NeverOrderRegime(String),

    #[error("constraint level {d} does not exceed the critical level {d_c}; use the delayed-order branch")]
    BelowCriticalLevel { d: f64, d_c: f64 },

    #[error("no closed-form value function exists for g = 0 when ordering can pay off")]
    NoClosedForm,

    #[error("capacity {have} is below the required minimum {need}")]
    Capacity { have: f64, need: f64 },

    #[error("order quantity {order} exceeds capacity {capacity}; closed forms are undefined there")]
    OrderExceedsCapacity { order: f64, capacity: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("argument out of domain: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
