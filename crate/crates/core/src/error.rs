use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("subshift is empty: every infinite sequence contains a forbidden word")]
    EmptySubshift,

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("branch is not strictly monotone on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },

    #[error("value {y} lies outside the image [{lo}, {hi}]")]
    OutOfRange { y: f64, lo: f64, hi: f64 },

    #[error("system validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("system is not transitive")]
    NoTransitivity,

    #[error("power iteration did not converge after {iters} iterations (last change {last_change:e})")]
    NoConvergence { iters: usize, last_change: f64 },

    #[error("pressure stays positive up to t = {t_max}; parabolic systems may have P(t) >= 0 at finite depth")]
    NoSignChange { t_max: f64 },

    #[error("periodic point with multiplier {multiplier} < 1 found inside the limit set")]
    ContractionDetected { multiplier: f64 },

    #[error("inversion stalled at step {step}: bracket collapsed near {x}")]
    InversionStall { step: usize, x: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
