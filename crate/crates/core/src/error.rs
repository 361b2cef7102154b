use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the modelling, inference and learning routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Cholesky factorization hit a non-positive pivot (1-based index).
    NotPositiveDefinite {
        pivot: usize,
    },
    /// Input matrix is not symmetric at the given (1-based) entry.
    Asymmetric {
        row: usize,
        col: usize,
    },
    /// A variogram candidate has a non-zero diagonal entry (1-based).
    NonZeroDiagonal {
        index: usize,
    },
    /// A variogram candidate has a negative (or non-finite) entry.
    NegativeEntry {
        row: usize,
        col: usize,
    },
    /// A variogram candidate is not strictly conditionally negative definite.
    NotConditionallyNegativeDefinite,
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// Requested dimension exceeds what the routine supports.
    Unsupported(String),
    /// A node label is outside `1..=d`.
    NodeOutOfRange {
        node: usize,
        dim: usize,
    },
    InvalidArgument(String),
    Disconnected,
    NotDecomposable,
    /// A block graph was required; names the first offending separator.
    NotBlockGraph {
        separator: alloc::vec::Vec<usize>,
    },
    /// A clique exceeds the allowed size.
    CliqueTooLarge {
        clique: alloc::vec::Vec<usize>,
        max: usize,
    },
    /// Two clique blocks disagree on a shared entry.
    InconsistentEntry {
        row: usize,
        col: usize,
        first: f64,
        second: f64,
    },
    /// The objective is not finite at the starting point.
    NonFiniteObjective,
    /// A sample does not carry enough information for the request.
    DegenerateSample(String),
    /// Extracted graph is not connected: numerically degenerate input.
    Inconsistent(String),
    UnsupportedFamily(String),
    OutsideDomain(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::Asymmetric { row, col } => {
                write!(f, "matrix is not symmetric at ({row}, {col})")
            }
            Error::NonZeroDiagonal { index } => {
                write!(f, "variogram diagonal entry {index} is not zero")
            }
            Error::NegativeEntry { row, col } => {
                write!(
                    f,
                    "variogram entry ({row}, {col}) is negative or not finite"
                )
            }
            Error::NotConditionallyNegativeDefinite => {
                write!(
                    f,
                    "variogram is not strictly conditionally negative definite"
                )
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::NodeOutOfRange { node, dim } => {
                write!(f, "node {node} is out of range 1..={dim}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Disconnected => write!(f, "graph is not connected"),
            Error::NotDecomposable => write!(f, "graph is not decomposable"),
            Error::NotBlockGraph { separator } => {
                write!(
                    f,
                    "not a block graph: separator {separator:?} has more than one node"
                )
            }
            Error::CliqueTooLarge { clique, max } => {
                write!(f, "clique {clique:?} has more than {max} nodes")
            }
            Error::InconsistentEntry {
                row,
                col,
                first,
                second,
            } => write!(
                f,
                "inconsistent values for entry ({row}, {col}) at node {row}: {first} vs {second}"
            ),
            Error::NonFiniteObjective => write!(f, "objective is not finite at the start point"),
            Error::DegenerateSample(msg) => write!(f, "degenerate sample: {msg}"),
            Error::Inconsistent(msg) => write!(f, "internal inconsistency: {msg}"),
            Error::UnsupportedFamily(msg) => write!(f, "unsupported family: {msg}"),
            Error::OutsideDomain(msg) => write!(f, "outside domain: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
