use thiserror::Error;

/// Errors raised across the planner, simulator and file formats.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),

    #[error("path needs at least two distinct points")]
    PathTooShort,

    #[error("coincident positions")]
    CoincidentPositions,

    #[error("squared center distance must be positive")]
    ZeroDistance,

    #[error("bands are not synchronized: {0}")]
    Unsynchronized(String),

    #[error("travel direction is undefined")]
    UndefinedDirection,

    #[error("no grid path from {from:?} to {to:?}")]
    NoPath { from: (f64, f64), to: (f64, f64) },

    #[error("point {0:?} lies in a lethal or out-of-bounds cell")]
    BlockedCell((f64, f64)),

    #[error("global path lies entirely outside the local planning area")]
    PathOutsideArea,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("[{section}] {key}: {message}")]
    Scenario {
        section: String,
        key: String,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn scenario(section: &str, key: &str, message: impl Into<String>) -> Self {
        Error::Scenario {
            section: section.to_string(),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
