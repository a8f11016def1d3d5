//! Poisson model problems with homogeneous Dirichlet boundary conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, lu_factor, BandedLu, SparseMatrix};

pub const DEFAULT_SOURCE: f64 = 4590.0;

/// Largest grid accepted by the assembler.
pub const MAX_UNKNOWNS: usize = 50_000_000;

/// Scaling of the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Stencil `(6, -1, ..)/h^2`, right-hand side `g`.
    #[default]
    Fd,
    /// Stencil `h (6, -1, ..)` and right-hand side `g h^3`, the magnitudes
    /// of a lumped P1 finite-element system on a uniform grid.
    Fe,
}

/// 7-point Poisson problem on a box of interior grid points with uniform
/// spacing `h = 1/(max(nx, ny, nz) + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonSpec {
    pub cells: [usize; 3],
    #[serde(default = "default_source")]
    pub source: f64,
    #[serde(default)]
    pub scaling: Scaling,
}

fn default_source() -> f64 {
    DEFAULT_SOURCE
}

impl PoissonSpec {
    pub fn new(cells: [usize; 3]) -> Self {
        Self { cells, source: DEFAULT_SOURCE, scaling: Scaling::Fd }
    }

    pub fn cube(n: usize) -> Self {
        Self::new([n, n, n])
    }

    pub fn unknowns(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (*self.cells.iter().max().unwrap_or(&0) as f64 + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.iter().any(|&c| c == 0) {
            return Err(Error::InvalidProblem("every grid dimension must be at least 1".into()));
        }
        let n = self.cells.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
        match n {
            Some(n) if n <= MAX_UNKNOWNS => {}
            _ => return Err(Error::InvalidProblem(format!("grid {:?} exceeds {MAX_UNKNOWNS} unknowns", self.cells))),
        }
        if !self.source.is_finite() {
            return Err(Error::InvalidProblem("source must be finite".into()));
        }
        Ok(())
    }
}

/// Assembles the 7-point operator and the constant right-hand side, with
/// lexicographic ordering (x fastest).
pub fn assemble_poisson(spec: &PoissonSpec) -> Result<(SparseMatrix, Vec<f64>)> {
    spec.validate()?;
    let [nx, ny, nz] = spec.cells;
    let h = spec.spacing();
    let (scale, rhs) = match spec.scaling {
        Scaling::Fd => (1.0 / (h * h), spec.source),
        Scaling::Fe => (h, spec.source * h * h * h),
    };
    let n = spec.unknowns();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(7 * n);
    let mut vals = Vec::with_capacity(7 * n);
    row_offsets.push(0);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                // neighbours in increasing index order
                if z > 0 {
                    cols.push(i - nx * ny);
                    vals.push(-scale);
                }
                if y > 0 {
                    cols.push(i - nx);
                    vals.push(-scale);
                }
                if x > 0 {
                    cols.push(i - 1);
                    vals.push(-scale);
                }
                cols.push(i);
                vals.push(6.0 * scale);
                if x + 1 < nx {
                    cols.push(i + 1);
                    vals.push(-scale);
                }
                if y + 1 < ny {
                    cols.push(i + nx);
                    vals.push(-scale);
                }
                if z + 1 < nz {
                    cols.push(i + nx * ny);
                    vals.push(-scale);
                }
                row_offsets.push(cols.len());
            }
        }
    }
    let a = SparseMatrix::from_csr(n, n, row_offsets, cols, vals)?;
    Ok((a, vec![rhs; n]))
}

/// 3-point Laplacian `(2, -1)/h^2` on `n` interior points of the unit
/// interval, with right-hand side `source`.
pub fn assemble_poisson_1d(n: usize, source: f64) -> Result<(SparseMatrix, Vec<f64>)> {
    if n == 0 || n > MAX_UNKNOWNS {
        return Err(Error::InvalidProblem(format!("invalid 1d size {n}")));
    }
    let h = 1.0 / (n as f64 + 1.0);
    let scale = 1.0 / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -scale));
        }
        t.push((i, i, 2.0 * scale));
        if i + 1 < n {
            t.push((i, i + 1, -scale));
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, &t)?, vec![source; n]))
}

const DENSE_EXACT_LIMIT: usize = 512;
const BANDED_STORAGE_LIMIT: usize = 40_000_000;

/// Reference solution of an SPD system: dense LU for small systems, banded
/// LU when the band fits in memory, CG to `1e-12` otherwise.
pub fn exact_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
    }
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if n <= DENSE_EXACT_LIMIT {
        return lu_factor(&a.to_dense())?.solve(b);
    }
    let (lower, upper) = a.bandwidths();
    if n.saturating_mul(lower + upper + 1) <= BANDED_STORAGE_LIMIT {
        return BandedLu::factor(a)?.solve(b);
    }
    let out = cg_solve(a, b, 1e-12, 10 * n)?;
    if !out.converged {
        return Err(Error::NotConverged { max_iter: 10 * n, residual: out.residual });
    }
    Ok(out.x)
}
