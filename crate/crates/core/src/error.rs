use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mode index {index} for {mode_count}-mode system")]
    InvalidMode { index: usize, mode_count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symplectic invariant violated by {deviation:e} (tolerance {tolerance:e})")]
    NotSymplectic { deviation: f64, tolerance: f64 },

    #[error("memory normalisation violated: b1^2+b2^2-c1^2-|c2|^2-c3^2 = {0}")]
    MemoryNormalization(f64),

    #[error("negative population {0:e} on the diagonal")]
    NegativePopulation(f64),

    #[error("truncation leak {leak:e} exceeds tolerance {tolerance:e}")]
    TruncationLeak { leak: f64, tolerance: f64 },

    #[error("gaussian integral is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("series budget exceeded: {requested} coefficients requested, budget {budget}")]
    SeriesBudget { requested: usize, budget: usize },

    #[error("conditioning event has zero probability ({0:e})")]
    ZeroProbability(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
