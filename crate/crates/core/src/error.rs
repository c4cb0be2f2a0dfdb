use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A grid region cannot be tiled by whole cells of the requested width.
    Sizing(String),
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    NotSymmetric {
        max_asymmetry: f64,
    },
    ZeroDiagonal {
        row: usize,
    },
    /// `pᵀAp <= 0` during conjugate gradients.
    Breakdown {
        iteration: usize,
        curvature: f64,
    },
    NotConverged {
        iterations: usize,
        relative_residual: f64,
    },
    DegenerateBody(String),
    /// A body point's delta support leaves the uniform part of the grid.
    OutsideUniformRegion {
        body: usize,
        point: usize,
        x: f64,
        y: f64,
    },
    Singular(String),
    NonFinite(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Sizing(msg) => write!(f, "grid sizing error: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch {
                op,
                expected,
                found,
            } => write!(f, "{op}: dimension mismatch (expected {expected}, found {found})"),
            Error::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max |A - Aᵀ| = {max_asymmetry:e})")
            }
            Error::ZeroDiagonal { row } => write!(f, "zero diagonal entry in row {row}"),
            Error::Breakdown {
                iteration,
                curvature,
            } => write!(
                f,
                "conjugate gradient breakdown at iteration {iteration}: pᵀAp = {curvature:e} (matrix not positive definite)"
            ),
            Error::NotConverged {
                iterations,
                relative_residual,
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (relative residual {relative_residual:e})"
            ),
            Error::DegenerateBody(msg) => write!(f, "degenerate body: {msg}"),
            Error::OutsideUniformRegion { body, point, x, y } => write!(
                f,
                "body {body} point {point} at ({x}, {y}) is too close to the edge of the uniform grid region"
            ),
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
        }
    }
}

impl core::error::Error for Error {}
