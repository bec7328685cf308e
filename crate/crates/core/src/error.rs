use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coincident spins")]
    CoincidentSpins,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing hyperfine entry for m = {m}, axis {axis}")]
    MissingHyperfine { m: f64, axis: usize },

    #[error("bath too large: expected {expected:.0} spins exceeds the cap of {cap}")]
    BathTooLarge { expected: f64, cap: usize },

    #[error("no bath spins")]
    NoBathSpins,

    #[error("cluster explosion: reduce radius or order ({count} clusters exceeds the cap of {cap})")]
    ClusterExplosion { count: usize, cap: usize },

    #[error("propagation failed for cluster {cluster:?}: {reason}")]
    Propagation { cluster: Vec<usize>, reason: String },

    #[error("insufficient decay: coherence never drops below 1/e on the time grid")]
    InsufficientDecay,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("empty cell at thickness {thickness} nm, density {density} ppm")]
    EmptyCell { thickness: f64, density: f64 },

    #[error("data outside library support")]
    OutsideSupport,

    #[error("uninformative likelihood")]
    UninformativeLikelihood,

    #[error("multimodal likelihood linecut (relative fit residual {0:.3})")]
    Multimodal(f64),

    #[error("visibility undefined: {0}")]
    VisibilityUndefined(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
