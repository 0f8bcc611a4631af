use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mixing function: {0}")]
    InvalidMixing(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("pure model requires G = m E / q*^2 (got G = {g}, expected {expected})")]
    PureInconsistent { g: f64, expected: f64 },
    #[error("drift matrix is singular (determinant {0:e})")]
    SingularMatrix(f64),
    #[error("f' is undefined under the hard spherical constraint")]
    HardConstraint,
    #[error("phi = {got} does not match the canonical value {expected}")]
    PhiMismatch { got: f64, expected: f64 },
    #[error("phi = {0} must be positive")]
    PhiNonpositive(f64),
    #[error("step {step} (s = {time}): {field} = {value:e} exceeds the blow-up bound")]
    StepUnstable { step: usize, time: f64, field: &'static str, value: f64 },
    #[error("no bracket found for {0}")]
    NotBracketed(&'static str),
    #[error("beta = {beta} is not above beta_c = {beta_c}")]
    BelowCritical { beta: f64, beta_c: f64 },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("G* = {g} does not exceed the stability threshold {threshold}")]
    Unstable { g: f64, threshold: f64 },
    #[error("no localized branch: beta = {beta} <= beta_+ = {beta_plus}")]
    NoBranch { beta: f64, beta_plus: f64 },
    #[error("argument outside its domain: {0}")]
    Domain(String),
    #[error("delocalized regime: beta = {beta} <= y = {y}")]
    Delocalized { beta: f64, y: f64 },
    #[error("coupling store of {entries} entries exceeds the budget of {budget}")]
    SizeOverflow { entries: usize, budget: usize },
    #[error("constraint covariance is rank deficient")]
    RankDeficient,
    #[error("Langevin blow-up at t = {time}: K_N = {k:e}")]
    Blowup { time: f64, k: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}
