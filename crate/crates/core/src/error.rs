use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("degree {0} outside supported range 1..=7")]
    UnsupportedDegree(usize),
    #[error("unsupported derivative order {0} (max 2)")]
    UnsupportedDerivative(usize),
    #[error("parameter {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("knot multiplicity overflow at {value}: multiplicity {multiplicity} exceeds {max}")]
    MultiplicityOverflow { value: f64, multiplicity: usize, max: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("singular Jacobian at parameter {0:?}")]
    SingularJacobian(Vec<f64>),
    #[error("patch format error (line {line}): {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported quadrature size {0}")]
    UnsupportedQuadrature(usize),
    #[error("index ({row}, {col}) out of range for {nrows}x{ncols} matrix")]
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix: zero pivot at row {0}")]
    SingularMatrix(usize),
    #[error("linear solve residual {0:e} exceeds tolerance")]
    InaccurateSolve(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("marking on an empty mesh")]
    EmptyMesh,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
