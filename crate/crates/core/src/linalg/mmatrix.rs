use serde::{Deserialize, Serialize};

use super::lu::lu_factor;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Outcome of the M-matrix test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MMatrixStatus {
    Yes,
    No,
    Unknown,
}

/// Tests whether `a` is a nonsingular M-matrix.
///
/// 1. any positive off-diagonal entry: `No`;
/// 2. positive diagonal and strict, or weak-with-one-strict-row and
///    irreducible, diagonal dominance: `Yes`;
/// 3. otherwise, for `n <= n_dense_limit`, the dense inverse must be
///    entrywise `>= -1e-12 * ||A^-1||_inf` (singular: `No`);
/// 4. otherwise `Unknown`.
pub fn is_m_matrix(a: &SparseMatrix, n_dense_limit: usize) -> Result<MMatrixStatus> {
    if !a.is_square() {
        return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
    }
    let n = a.nrows();
    if a.triplets().any(|(i, j, v)| i != j && v > 0.0) {
        return Ok(MMatrixStatus::No);
    }
    if n == 0 {
        return Ok(MMatrixStatus::Yes);
    }

    let diag = a.diagonal();
    if diag.iter().all(|&d| d > 0.0) {
        let mut all_strict = true;
        let mut all_weak = true;
        let mut any_strict = false;
        for (i, &d) in diag.iter().enumerate() {
            let (cols, vals) = a.row(i);
            let off: f64 = cols.iter().zip(vals).filter(|(&j, _)| j != i).map(|(_, v)| v.abs()).sum();
            if d > off {
                any_strict = true;
            } else {
                all_strict = false;
                if d < off {
                    all_weak = false;
                }
            }
        }
        if all_strict || (all_weak && any_strict && is_irreducible(a)) {
            return Ok(MMatrixStatus::Yes);
        }
    }

    if n > n_dense_limit {
        return Ok(MMatrixStatus::Unknown);
    }
    let inv = match lu_factor(&a.to_dense()) {
        Ok(f) => f.inverse(),
        Err(Error::Singular { .. }) => return Ok(MMatrixStatus::No),
        Err(e) => return Err(e),
    };
    let tol = 1e-12 * inv.inf_norm();
    Ok(if inv.min_entry() >= -tol { MMatrixStatus::Yes } else { MMatrixStatus::No })
}

/// Strong connectivity of the directed adjacency graph of `a`.
pub fn is_irreducible(a: &SparseMatrix) -> bool {
    let n = a.nrows();
    if n <= 1 {
        return true;
    }
    let reaches_all = |m: &SparseMatrix| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in m.row(i).0 {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    };
    reaches_all(a) && reaches_all(&a.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(n: usize, off: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn two_by_two_laplacian_is_m_matrix() {
        assert_eq!(is_m_matrix(&tri(2, -1.0), 0).unwrap(), MMatrixStatus::Yes);
    }

    #[test]
    fn positive_off_diagonal_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(is_m_matrix(&a, 10).unwrap(), MMatrixStatus::No);
    }

    #[test]
    fn weakly_dominant_reducible_falls_back_to_dense() {
        // two decoupled singular blocks [[1,-1],[-1,1]] plus a strict row
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0), (2, 2, 1.0)],
        )
        .unwrap();
        assert_eq!(is_m_matrix(&a, 10).unwrap(), MMatrixStatus::No);
        assert_eq!(is_m_matrix(&a, 1).unwrap(), MMatrixStatus::Unknown);
    }

    #[test]
    fn not_dominant_but_m_matrix() {
        // [[1, -2], [-0.25, 1]]: det = 0.5, inverse = 2 [[1, 2], [0.25, 1]] >= 0
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -2.0), (1, 0, -0.25), (1, 1, 1.0)]).unwrap();
        assert_eq!(is_m_matrix(&a, 10).unwrap(), MMatrixStatus::Yes);
        assert_eq!(is_m_matrix(&a, 1).unwrap(), MMatrixStatus::Unknown);
    }
}
