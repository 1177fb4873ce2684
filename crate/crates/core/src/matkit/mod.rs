//! Small-scale numerical kernels.
//!
//! Everything here is sized for the problems in this crate: matrices of
//! dimension at most a few dozen (stability matrices, Vandermonde systems),
//! polynomials of degree at most 16, and banded systems for method-of-lines
//! Jacobians. Nothing allocates behind the caller's back beyond the returned
//! values, and every function is pure.

mod banded;
mod dense;
mod fd;
mod poly;

pub use banded::{BandedLu, BandedMatrix};
pub use dense::{DenseMatrix, Lu, Scalar};
pub(crate) use dense::faddeev_leverrier;
pub use fd::fd_weights;
pub use poly::Polynomial;

pub use num_complex::Complex64;

use thiserror::Error;

/// Relative pivot threshold used by every LU factorization in this module.
pub const PIVOT_TOL: f64 = 1e-14;

/// Largest matrix handed to the characteristic-polynomial routine.
pub const MAX_CHAR_POLY_DIM: usize = 16;

/// Sweep budget for the simultaneous root iteration.
pub const MAX_ROOT_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("matrix is singular: pivot {pivot:e} at column {column} below tolerance {tol:e}")]
    Singular { column: usize, pivot: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("root iteration did not converge after {sweeps} sweeps (worst residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MatError>;
