//! Power-iteration spectral radius estimates.

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Outcome of a spectral radius estimate. `converged = false` means the
/// iteration budget ran out and `rho` is the last estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn require_square(b: &DenseMatrix) -> Result<()> {
    if b.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare { nrows: b.nrows(), ncols: b.ncols() })
    }
}

/// Perron root of an entrywise nonnegative matrix.
///
/// Power iteration from the all-ones vector on `B + alpha I`, where the shift
/// `alpha` tracks half the current estimate. The shift removes the
/// oscillation of periodic (e.g. bipartite) matrices without moving the
/// Perron root. Stops when the eigenpair residual `max_i |(Bv)_i - rho v_i|`
/// (with `max v = 1`) drops to `tol`, or when the Collatz-Wielandt bounds
/// `min_i (Bv)_i/v_i <= rho <= max_i (Bv)_i/v_i` are within `tol`.
/// Comparing successive estimates alone is not enough: on a near-stochastic
/// matrix the max-norm stays flat for several steps from the ones vector.
pub fn spectral_radius_nonneg(b: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    require_square(b)?;
    let n = b.nrows();
    for i in 0..n {
        for (j, &v) in b.row(i).iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j, value: v });
            }
        }
    }
    if n == 0 {
        return Ok(SpectralEstimate { rho: 0.0, converged: true, iterations: 0 });
    }

    let mut v = vec![1.0; n];
    let mut bv = vec![0.0; n];
    let mut shift = 0.0;
    let mut estimate = 0.0;
    for it in 1..=max_iter {
        for (i, out) in bv.iter_mut().enumerate() {
            *out = b.row(i).iter().zip(&v).map(|(a, x)| a * x).sum();
        }
        let mut norm = 0.0f64;
        let mut cw_low = f64::INFINITY;
        let mut cw_high = 0.0f64;
        for i in 0..n {
            let shifted = bv[i] + shift * v[i];
            norm = norm.max(shifted);
            if v[i] > 0.0 {
                let ratio = bv[i] / v[i];
                cw_low = cw_low.min(ratio);
                cw_high = cw_high.max(ratio);
            } else {
                cw_low = 0.0;
            }
        }
        if norm == 0.0 {
            return Ok(SpectralEstimate { rho: 0.0, converged: true, iterations: it });
        }
        estimate = norm - shift;
        if cw_high - cw_low <= tol {
            return Ok(SpectralEstimate { rho: 0.5 * (cw_high + cw_low), converged: true, iterations: it });
        }
        // v has unit max-norm here
        let residual = (0..n).map(|i| (bv[i] - estimate * v[i]).abs()).fold(0.0, f64::max);
        if residual <= tol {
            return Ok(SpectralEstimate { rho: estimate, converged: true, iterations: it });
        }
        for i in 0..n {
            v[i] = (bv[i] + shift * v[i]) / norm;
        }
        shift = 0.5 * estimate.max(0.0);
    }
    Ok(SpectralEstimate { rho: estimate, converged: false, iterations: max_iter })
}

/// Spectral radius of a general real matrix.
///
/// Plain power iteration; the estimate is the geometric mean of two
/// successive growth factors, which is exact on a dominant pair `±rho`.
/// A dominant complex pair does not converge and is reported through the
/// flag.
pub fn spectral_radius(b: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    require_square(b)?;
    let n = b.nrows();
    if n == 0 {
        return Ok(SpectralEstimate { rho: 0.0, converged: true, iterations: 0 });
    }
    // Deterministic start with no special alignment to any invariant subspace.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).fract()).collect();
    let scale = super::norm2(&v);
    v.iter_mut().for_each(|x| *x /= scale);
    let mut previous_growth = f64::NAN;
    let mut previous = f64::NAN;
    let mut estimate = 0.0;
    for it in 1..=max_iter {
        let w = b.matvec(&v)?;
        let growth = super::norm2(&w);
        if growth == 0.0 {
            return Ok(SpectralEstimate { rho: 0.0, converged: true, iterations: it });
        }
        estimate = if previous_growth.is_nan() { growth } else { (growth * previous_growth).sqrt() };
        if (estimate - previous).abs() <= tol * estimate.max(1.0) {
            return Ok(SpectralEstimate { rho: estimate, converged: true, iterations: it });
        }
        v = w.into_iter().map(|x| x / growth).collect();
        previous_growth = growth;
        previous = estimate;
    }
    Ok(SpectralEstimate { rho: estimate, converged: false, iterations: max_iter })
}
