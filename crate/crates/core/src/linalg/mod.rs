//! Sparse and small dense linear algebra kernels.

mod cg;
mod dense;
mod lu;
mod mmatrix;
mod mtx;
mod sparse;
mod spectral;

pub use cg::{cg_solve, CgOutcome};
pub use dense::{abs_matrix, weighted_max_norm, DenseMatrix};
pub use lu::{lu_factor, lu_solve, BandedLu, LuFactors};
pub use mmatrix::{is_irreducible, is_m_matrix, MMatrixStatus};
pub use mtx::{read_matrix_market, write_matrix_market};
pub use sparse::SparseMatrix;
pub use spectral::{spectral_radius, spectral_radius_nonneg, SpectralEstimate};

/// Default size limit for dense analysis routines.
pub const DENSE_LIMIT: usize = 4096;

pub mod defaults {
    pub use super::spectral::{DEFAULT_MAX_ITER as SPECTRAL_MAX_ITER, DEFAULT_TOL as SPECTRAL_TOL};
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
