use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single failed model invariant. `validate` collects all of them.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    InvalidParameter { path: String, reason: String },
    RowSumViolation { row: usize, sum: f64 },
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    Reducible { unreachable_from: usize },
    PositiveJumpInSpectrallyNegative { state: usize, context: String },
    DegenerateComponent { state: usize, reason: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "Shape: {msg}"),
            Violation::InvalidParameter { path, reason } => {
                write!(f, "InvalidParameter at {path}: {reason}")
            }
            Violation::RowSumViolation { row, sum } => {
                write!(f, "RowSumViolation: row {row} of Q sums to {sum:e}")
            }
            Violation::NegativeOffDiagonal { row, col, value } => {
                write!(f, "NegativeOffDiagonal: Q[{row}][{col}] = {value}")
            }
            Violation::Reducible { unreachable_from } => {
                write!(f, "Reducible: not every state is reachable from state {unreachable_from}")
            }
            Violation::PositiveJumpInSpectrallyNegative { state, context } => {
                write!(f, "PositiveJumpInSpectrallyNegative: state {state} ({context}) can jump upwards")
            }
            Violation::DegenerateComponent { state, reason } => {
                write!(f, "DegenerateComponent: state {state} is {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("model file: {0}")]
    Parse(String),
    #[error("unknown built-in model {0:?}")]
    UnknownModel(String),
    #[error("argument {arg} outside the transform domain ({lo}, {hi}) of state {state}")]
    DomainViolation { arg: f64, lo: f64, hi: f64, state: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("spectral solver failure: {0}")]
    Spectral(String),
    #[error("kappa stays below {q}; no finite right inverse")]
    NoFiniteRoot { q: f64 },
    #[error(
        "expected {expected} roots in the right half-plane, found {found} (contour count {counted}, radius {radius})"
    )]
    RootCountMismatch { expected: usize, found: usize, counted: i64, radius: f64 },
    #[error("roots coalesce: minimal pairwise distance {min_gap:e}")]
    DefectiveRoots { min_gap: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("matrix is not diagonalizable (eigenvalue gap {gap:e})")]
    DefectiveMatrix { gap: f64 },
    #[error("q + lambda vanishes for an eigenvalue lambda (|q + lambda| = {0:e})")]
    SingularShift(f64),
    #[error("state {state} has no diffusion part; X(t) has no density")]
    NoDensity { state: usize },
    #[error("commutation residual {residual:e} exceeds gate {gate:e}")]
    CommuteGateFailed { residual: f64, gate: f64 },
    #[error("quadrature did not converge: refinement changed the result by {change:e} (tolerance {tol:e})")]
    QuadratureNonconvergence { change: f64, tol: f64 },
    #[error("cell {cell} holds {count} samples (need at least {need})")]
    InsufficientSamples { cell: String, count: usize, need: usize },
    #[error("model is not of the form c*t minus a subordinator: {0}")]
    ShapeViolation(String),
    #[error("no samples start in state {state}")]
    EmptyCell { state: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<Vec<Violation>> for Error {
    fn from(v: Vec<Violation>) -> Self {
        Error::Invalid(v)
    }
}
