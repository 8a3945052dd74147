use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} exceeds the cap of {cap} for {what}")]
    Capacity {
        what: &'static str,
        level: u32,
        cap: u32,
    },

    #[error("{0}")]
    Domain(String),

    #[error("level mismatch: expected {expected}, got {got}")]
    LevelMismatch { expected: u32, got: u32 },

    #[error("partition function does not converge at fugacity {fugacity}: {reason}")]
    NonConvergent { fugacity: f64, reason: String },

    #[error("insufficient data: {have} effective samples, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("bad {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_level(expected: u32, got: u32) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LevelMismatch { expected, got })
    }
}
