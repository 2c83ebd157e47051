use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("events are not sorted by time: event {index} at {t_abs} ns precedes its predecessor")]
    Unsorted { index: usize, t_abs: f64 },

    #[error("detection {index} at {t_abs} ns lies outside the exposure window [0, {window} ns)")]
    OutsideExposure { index: usize, t_abs: f64, window: f64 },

    #[error("phase {phase} ns at index {index} lies outside [0, {limit} ns)")]
    PhaseOutOfRange { index: usize, phase: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("true lifetime must be positive, sample {index} has {lifetime} ns")]
    NonPositiveLifetime { index: usize, lifetime: f64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
