use alloc::string::String;
use core::fmt;

/// Shape of a two-axis grid, printed as `rowsxcols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("window {window} does not divide {len}")]
    NonDivisibleWindow { window: usize, len: usize },
    #[error("box time range {start}..{end} is not aligned to segments of width {width}")]
    MisalignedBox { start: usize, end: usize, width: usize },
    #[error("fold {fold} lacks class {class}")]
    DegenerateFold { fold: usize, class: usize },
    #[error("linear system is singular or not positive definite")]
    SingularSystem,
    #[error("kernel weight undefined for coalition size {size} of {players}")]
    DomainError { size: usize, players: usize },
    #[error("exact Shapley values limited to 12 segments, got {0}")]
    TooManySegments(usize),
    #[error("mask needs both informative and uninformative cells")]
    DegenerateMask,
    #[error("saliency map must be rescaled to [0, 100]")]
    NotRescaled,
    #[error("not a permutation of 0..{0}")]
    InvalidPermutation(usize),
    #[error("all averages are equal; scaling undefined")]
    DegenerateSpread,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
