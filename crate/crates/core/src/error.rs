use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("points coincide, cannot define a line")]
    CoincidentPoints,
    #[error("degenerate line: normal and direction are both near zero")]
    DegenerateLine,
    #[error("degenerate projection: line passes through the camera center")]
    DegenerateProjection,
    #[error("row {0} is not visible in the image")]
    RowNotVisible(f64),
    #[error("virtual line has a vanishing u-coefficient at row {0}")]
    VerticalTangent(f64),
    #[error("virtual line is degenerate at row {0}")]
    DegenerateVirtualLine(f64),
    #[error("curve gradient vanishes, tangent is indeterminate")]
    TangentIndeterminate,
    #[error("observation graph is disconnected")]
    DisconnectedGraph,
    #[error("missing reference: {0}")]
    MissingReference(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("camera {0} lies inside the scene bounding box")]
    CameraInsideScene(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
