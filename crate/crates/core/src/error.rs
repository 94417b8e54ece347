use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("at least two strategies are required, got {0}")]
    TooFewStrategies(usize),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("transmission rates must be strictly increasing: beta[{index}] = {left} >= beta[{}] = {right}", index + 1)]
    NonMonotoneBeta { index: usize, left: f64, right: f64 },

    #[error("strategy costs must be strictly decreasing: cost[{index}] = {left} <= cost[{}] = {right}", index + 1)]
    NonMonotoneCost { index: usize, left: f64, right: f64 },

    #[error("beta_1 = {beta_1} must exceed sigma = {sigma}")]
    BetaOneNotAboveSigma { beta_1: f64, sigma: f64 },

    #[error("invalid epidemic parameters: {0}")]
    InvalidEpidemicParams(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population state is not on the simplex: {0}")]
    NotOnSimplex(String),

    #[error("invalid system state: {0}")]
    InvalidState(String),

    #[error("budget c* = {c_star} outside (0, {upper})")]
    BudgetOutOfRange { c_star: f64, upper: f64 },

    #[error("cost/transmission convexity condition fails at strategy {index}: {left} <= {right}")]
    Assumption1Violated { index: usize, left: f64, right: f64 },

    #[error("penalty rho* = {rho} is invalid, need rho* >= {required}")]
    InvalidRho { rho: f64, required: f64 },

    #[error("infectious fraction must be positive, got {0}")]
    NonPositiveInfectious(f64),

    #[error("step size underflow at t = {t} (h = {h}), state = {state:?}")]
    StepSizeUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("invariant breach at t = {t}: {what}")]
    InvariantBreach { t: f64, what: String },

    #[error("Nash stationarity violated at x = {x:?}, p = {p:?}: |V| = {norm}")]
    NsViolation { x: Vec<f64>, p: Vec<f64>, norm: f64 },

    #[error("dissipation inequality violated at t = {t}: margin {margin}")]
    DissipationViolation { t: f64, margin: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("overshoot target {target} is below the attainable floor {floor}")]
    TargetBelowFloor { target: f64, floor: f64 },
}

/// Broad class of an [`Error`], used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inputs violate a model or design invariant.
    Validation,
    /// The integrator failed or a trajectory left the state space.
    Integration,
    /// A result was requested outside the hypotheses it rests on.
    Precondition,
}

impl Error {
    /// Variant name, e.g. `"BudgetOutOfRange"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::TooFewStrategies(_) => "TooFewStrategies",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonMonotoneBeta { .. } => "NonMonotoneBeta",
            Error::NonMonotoneCost { .. } => "NonMonotoneCost",
            Error::BetaOneNotAboveSigma { .. } => "BetaOneNotAboveSigma",
            Error::InvalidEpidemicParams(_) => "InvalidEpidemicParams",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NotOnSimplex(_) => "NotOnSimplex",
            Error::InvalidState(_) => "InvalidState",
            Error::BudgetOutOfRange { .. } => "BudgetOutOfRange",
            Error::Assumption1Violated { .. } => "Assumption1Violated",
            Error::InvalidRho { .. } => "InvalidRho",
            Error::NonPositiveInfectious(_) => "NonPositiveInfectious",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::InvariantBreach { .. } => "InvariantBreach",
            Error::NsViolation { .. } => "NsViolation",
            Error::DissipationViolation { .. } => "DissipationViolation",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::TargetBelowFloor { .. } => "TargetBelowFloor",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonPositiveInfectious(_)
            | Error::StepSizeUnderflow { .. }
            | Error::InvariantBreach { .. }
            | Error::NsViolation { .. }
            | Error::DissipationViolation { .. } => ErrorClass::Integration,
            Error::PreconditionViolated(_) | Error::TargetBelowFloor { .. } => ErrorClass::Precondition,
            _ => ErrorClass::Validation,
        }
    }
}
