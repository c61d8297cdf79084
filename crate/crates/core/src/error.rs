use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("theta = {theta} lies outside the parameter interval [{lo}, {hi}]")]
    ThetaOutOfDomain { theta: f64, lo: f64, hi: f64 },

    #[error("score undefined at theta = {theta}, k = {k}: model mass is zero")]
    UndefinedScore { theta: f64, k: usize },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid contamination (alpha = {alpha}, L = {location}): {reason}")]
    InvalidContamination {
        alpha: f64,
        location: usize,
        reason: String,
    },

    #[error("truncation at K = {k} leaves tail mass {tail:e} (needs < {tol:e})")]
    TruncationTooShort { k: usize, tail: f64, tol: f64 },

    #[error("invalid family tree: {0}")]
    InvalidTree(String),

    #[error("no progenitors observed; the offspring law cannot be estimated")]
    NoProgenitors,

    #[error("disparity gradient undefined: model mass is zero at k = {k} while q_k > 0")]
    GradientUndefined { k: usize },

    #[error("disparity is infinite at every scanned parameter value")]
    NoFiniteValue,

    #[error("generation schedule requires tau_m > 1, got {tau_m}")]
    SubcriticalSchedule { tau_m: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate ratio: denominator is zero")]
    DegenerateRatio,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
