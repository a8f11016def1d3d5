//! Direct solvers: dense LU with partial pivoting and a band LU for the
//! subdomain blocks of structured grids.

use super::dense::DenseMatrix;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// `P A = L U` with unit lower-triangular `L` stored below the diagonal.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

/// Partial-pivoting LU factorization of a square dense matrix.
pub fn lu_factor(a: &DenseMatrix) -> Result<LuFactors> {
    if !a.is_square() {
        return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
    }
    let n = a.nrows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let threshold = a.max_abs_entry() * f64::EPSILON * n.max(1) as f64;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold || pivot == 0.0 {
            return Err(Error::Singular { step: k, pivot });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
        }
        let diag = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / diag;
            lu[(i, k)] = factor;
            if factor != 0.0 {
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

/// Solves `A x = b` from a previous [`lu_factor`].
pub fn lu_solve(factors: &LuFactors, b: &[f64]) -> Result<Vec<f64>> {
    factors.solve(b)
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.len() });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        Ok(x)
    }

    /// Dense inverse, one column solve at a time.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension matches");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        inv
    }
}

/// Band LU without pivoting.
///
/// Only valid for matrices where Gaussian elimination needs no row
/// exchanges, e.g. nonsingular M-matrices and SPD matrices, which covers the
/// principal blocks of the Poisson operator. Row `i` stores columns
/// `i - lower ..= i + upper`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
        }
        let n = a.nrows();
        let (lower, upper) = a.bandwidths();
        let width = lower + upper + 1;
        let mut band = vec![0.0; n * width];
        for (i, j, v) in a.triplets() {
            band[i * width + (j + lower - i)] = v;
        }
        let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = scale * f64::EPSILON * n.max(1) as f64;
        for k in 0..n {
            let pivot = band[k * width + lower];
            if pivot.abs() <= threshold || pivot == 0.0 {
                return Err(Error::Singular { step: k, pivot });
            }
            let last_row = (k + lower).min(n - 1);
            let ncols = (k + upper).min(n - 1) - k;
            let (head, tail) = band.split_at_mut((k + 1) * width);
            // pivot row entries right of the diagonal
            let pivot_row = &head[k * width + lower + 1..k * width + lower + 1 + ncols];
            for i in k + 1..=last_row {
                let row = &mut tail[(i - k - 1) * width..(i - k) * width];
                let ik = k + lower - i;
                let factor = row[ik] / pivot;
                row[ik] = factor;
                if factor == 0.0 {
                    continue;
                }
                for (dst, &u) in row[ik + 1..ik + 1 + ncols].iter_mut().zip(pivot_row) {
                    *dst -= factor * u;
                }
            }
        }
        Ok(Self { n, lower, upper, width, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        let mut x = b.to_vec();
        let (n, w, lo, up) = (self.n, self.width, self.lower, self.upper);
        for i in 0..n {
            let first = i.saturating_sub(lo);
            let row = &self.band[i * w + (first + lo - i)..i * w + lo];
            let acc = row.iter().zip(&x[first..i]).fold(x[i], |acc, (l, xj)| acc - l * xj);
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + up).min(n - 1);
            let row = &self.band[i * w + lo + 1..i * w + lo + 1 + (last - i)];
            let acc = row.iter().zip(&x[i + 1..=last]).fold(x[i], |acc, (u, xj)| acc - u * xj);
            x[i] = acc / self.band[i * w + lo];
        }
        Ok(x)
    }
}
