use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("cell index ({i_x}, {i_y}) outside grid {n_x}x{n_y}")]
    CellOutOfRange {
        i_x: usize,
        i_y: usize,
        n_x: usize,
        n_y: usize,
    },

    #[error("scan {scan} outside 1..={scan_count}")]
    ScanOutOfRange { scan: usize, scan_count: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("all-zero profile cannot be normalised into votes")]
    ZeroProfile,

    #[error("MTI reference needs history: {0}")]
    WarmUp(String),

    #[error("empty clutter history")]
    EmptyHistory,

    #[error("window needs {expected} maps, got {actual}")]
    WindowSize { expected: usize, actual: usize },

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("scan {scan}: {source}")]
    AtScan {
        scan: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metrics serialization failed: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_scan(self, scan: usize) -> Self {
        Error::AtScan {
            scan,
            source: Box::new(self),
        }
    }
}
