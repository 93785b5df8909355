use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("location ({x}, {y}) lies outside the window")]
    OutOfWindow { x: f64, y: f64 },

    #[error("masked raster value at pixel ({col}, {row})")]
    MaskedValue { col: usize, row: usize },

    #[error("duplicate point at ({x}, {y}); point patterns must be simple")]
    DuplicatePoint { x: f64, y: f64 },

    #[error("raster geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid tessellation: {0}")]
    InvalidTessellation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("intensity overflow at pixel ({col}, {row}): log-intensity {log_intensity}")]
    IntensityOverflow {
        col: usize,
        row: usize,
        log_intensity: f64,
    },

    #[error("circulant embedding is not positive definite even after padding to {size}x{size}")]
    EmbeddingFailed { size: usize },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("design column `{0}` is identically zero")]
    ZeroColumn(String),

    #[error("tile {tile} of tessellation `{block}` contains no quadrature points")]
    EmptyTile { block: String, tile: u32 },

    #[error("models are not nested: column `{0}` of the null model is missing from the alternative")]
    NotNested(String),

    #[error("unknown coefficient block `{0}`")]
    UnknownName(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("{0}")]
    Failed(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
