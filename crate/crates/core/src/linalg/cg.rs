use super::sparse::SparseMatrix;
use super::{dot, norm2};
use crate::error::{Error, Result};

/// Result of a conjugate gradient run.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `||b - A x||_2` of the recursively updated residual.
    pub residual: f64,
}

/// Unpreconditioned CG from a zero initial guess, stopping at
/// `||b - A x||_2 <= tol * ||b||_2`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    if !a.is_square() {
        return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
    }
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, converged: true, residual: 0.0 });
    }
    let target = tol * bnorm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for iteration in 0..max_iter {
        a.spmv_into(&p, &mut ap)?;
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { iteration, curvature });
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            return Ok(CgOutcome { x, iterations: iteration + 1, converged: true, residual: rr_next.sqrt() });
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    Ok(CgOutcome { x, iterations: max_iter, converged: false, residual: rr.sqrt() })
}
