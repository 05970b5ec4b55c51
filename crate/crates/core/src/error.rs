use thiserror::Error;

/// Errors raised across the solver pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhError {
    #[error("denominator polynomial is zero")]
    ZeroDenominator,
    #[error("numerator degree {num} is not below denominator degree {den}")]
    DegreeViolation { num: usize, den: usize },
    #[error("root clustering is ambiguous: {0}")]
    ClusterAmbiguity(String),
    #[error("partial-fraction linear system is singular")]
    SingularSystem,
    #[error("sample system for beta stayed singular after {0} attempts")]
    SingularSampleSystem(usize),
    #[error("transform has a pole at zero")]
    ZeroPole,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint set {{P 1' = 1', beta P >= 0}} is empty: no representation of this order exists")]
    InfeasibleBeta,
    #[error("invalid generating function: {0}")]
    InvalidGf(String),
    #[error("matrix is singular")]
    SingularA,
    #[error("transform is not admissible: {0}")]
    Inadmissible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, PhError>;
