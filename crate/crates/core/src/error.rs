use thiserror::Error;

/// Errors raised by the measure, risk, solver and hedging layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample space must contain at least one atom")]
    EmptySpace,

    #[error("atom {index} has non-positive weight {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("dimension mismatch: expected {expected} atoms, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid random variable: {0}")]
    InvalidRandomVariable(String),

    #[error("invalid convex expectation: {0}")]
    InvalidRisk(String),

    #[error("test level {0} outside [0, 1]")]
    LevelOutOfRange(f64),

    #[error("budget {0} is negative")]
    InfeasibleBudget(f64),

    #[error("tilt denominator vanishes: {0}")]
    DegenerateBounds(String),

    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("infeasible problem: {0}")]
    InfeasibleSpec(String),

    #[error("strategy `{0}` cannot handle this problem")]
    StrategyUnavailable(String),

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("{which} saddle residual {residual:e} exceeds tolerance")]
    SaddleViolation { which: &'static str, residual: f64 },

    #[error("gamma_alpha = {0:e} is within tolerance of zero; P* is not defined")]
    TrivialCase(f64),

    #[error("solution does not have threshold form: {0}")]
    StructureViolation(String),

    #[error("grid search over {atoms} atoms is too large (limit 4)")]
    TooLarge { atoms: usize },

    #[error("no equivalent martingale measure: s0 = {s0} outside [{min}, {max}]")]
    NoEmm { s0: f64, min: f64, max: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("duality check failed: primal {primal} vs dual {dual}")]
    DualityGap { primal: f64, dual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
