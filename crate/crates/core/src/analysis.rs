//! Dense numerical checks of the asynchronous convergence conditions on
//! small instances.

use serde::{Deserialize, Serialize};

use crate::decomposition::{restrict_block, CoarseSpace, Decomposition};
use crate::error::{Error, Result};
use crate::linalg::{
    abs_matrix, defaults, is_m_matrix, lu_factor, spectral_radius, spectral_radius_nonneg, DenseMatrix,
    MMatrixStatus, SparseMatrix, DENSE_LIMIT,
};

/// Margin used in `rho < 1 - tol` tests.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Damping values scanned by [`min_damping`], largest first.
pub const DEFAULT_THETA_GRID: [f64; 12] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01];

/// Dense operators of a Schwarz method with exact local and coarse solves.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub a: DenseMatrix,
    /// `sum_s R_s^T W_s A_s^{-1} R_s`.
    pub m: DenseMatrix,
    /// `R~^T A~^{-1} R~`.
    pub n: DenseMatrix,
    pub i_minus_ma: DenseMatrix,
    pub i_minus_na: DenseMatrix,
    /// Global diagonals of `R_s^T W_s R_s`.
    pub weight_diagonals: Vec<Vec<f64>>,
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::TooLarge { n, limit: DENSE_LIMIT })
    } else {
        Ok(())
    }
}

impl OperatorBundle {
    pub fn build(matrix: &SparseMatrix, decomposition: &Decomposition, coarse: &CoarseSpace) -> Result<Self> {
        let size = matrix.nrows();
        check_dense(size)?;
        if decomposition.global_n() != size || coarse.restriction().ncols() != size {
            return Err(Error::DimensionMismatch { expected: size, found: decomposition.global_n() });
        }
        let mut m = DenseMatrix::zeros(size, size);
        for s in 0..decomposition.num_subdomains() {
            let inv = lu_factor(&restrict_block(matrix, decomposition, s)?.to_dense())?.inverse();
            let indices = decomposition.indices(s);
            for (i, (&gi, &w)) in indices.iter().zip(decomposition.weights(s)).enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = m.row_mut(gi);
                for (&gj, &v) in indices.iter().zip(inv.row(i)) {
                    row[gj] += w * v;
                }
            }
        }
        let r = coarse.restriction().to_dense();
        let coarse_inv = lu_factor(&coarse.matrix().to_dense())?.inverse();
        let n = r.transpose().matmul(&coarse_inv)?.matmul(&r)?;
        let a = matrix.to_dense();
        let i_minus_ma = m.matmul(&a)?.identity_minus()?;
        let i_minus_na = n.matmul(&a)?.identity_minus()?;
        let weight_diagonals = (0..decomposition.num_subdomains()).map(|s| decomposition.weight_diagonal(s)).collect();
        Ok(Self { a, m, n, i_minus_ma, i_minus_na, weight_diagonals })
    }

    /// Bundle from explicit dense operators (mostly for tests).
    pub fn from_parts(a: DenseMatrix, m: DenseMatrix, n: DenseMatrix, weight_diagonals: Vec<Vec<f64>>) -> Result<Self> {
        check_dense(a.nrows())?;
        let i_minus_ma = m.matmul(&a)?.identity_minus()?;
        let i_minus_na = n.matmul(&a)?.identity_minus()?;
        Ok(Self { a, m, n, i_minus_ma, i_minus_na, weight_diagonals })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Outcome of one spectral condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub rho: f64,
    pub convergent: bool,
    /// False when the power iteration hit its limit; `rho` is then the last
    /// estimate.
    pub estimate_converged: bool,
}

fn nonneg_check(b: &DenseMatrix, tol: f64) -> Result<ConditionCheck> {
    let est = spectral_radius_nonneg(b, defaults::SPECTRAL_TOL, defaults::SPECTRAL_MAX_ITER)?;
    Ok(ConditionCheck { rho: est.rho, convergent: est.rho < 1.0 - tol, estimate_converged: est.converged })
}

/// `rho(|I - MA|) < 1`: the one-level asynchronous condition.
pub fn check_one_level(bundle: &OperatorBundle, tol: f64) -> Result<ConditionCheck> {
    nonneg_check(&abs_matrix(&bundle.i_minus_ma), tol)
}

/// `rho(sum_s |(I - MA) R_s^T W_s R_s (I - NA)|) < 1`.
pub fn check_shared_condition(bundle: &OperatorBundle, tol: f64) -> Result<ConditionCheck> {
    let size = bundle.dim();
    let mut total = DenseMatrix::zeros(size, size);
    for diag in &bundle.weight_diagonals {
        // (I - MA) D_s (I - NA), skipping the zero rows of D_s
        let mut left = bundle.i_minus_ma.clone();
        for i in 0..size {
            left.row_mut(i).iter_mut().zip(diag).for_each(|(v, w)| *v *= w);
        }
        let mut scaled = DenseMatrix::zeros(size, size);
        for (k, &w) in diag.iter().enumerate() {
            if w != 0.0 {
                scaled.row_mut(k).copy_from_slice(bundle.i_minus_na.row(k));
            }
        }
        let term = left.matmul(&scaled)?;
        for i in 0..size {
            total.row_mut(i).iter_mut().zip(term.row(i)).for_each(|(t, v)| *t += v.abs());
        }
    }
    nonneg_check(&total, tol)
}

/// `rho(|I - MA| |I - NA|) < 1`.
pub fn check_lemma_condition(bundle: &OperatorBundle, tol: f64) -> Result<ConditionCheck> {
    nonneg_check(&abs_matrix(&bundle.i_minus_ma).matmul(&abs_matrix(&bundle.i_minus_na))?, tol)
}

/// `(I - MA)(I - NA)`, the synchronous two-level iteration matrix.
pub fn sync_iteration_matrix(bundle: &OperatorBundle) -> Result<DenseMatrix> {
    bundle.i_minus_ma.matmul(&bundle.i_minus_na)
}

/// One row of the damping scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingPoint {
    pub theta: f64,
    /// `rho(|I - MA| (I + theta |NA|))`.
    pub rho: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingSearch {
    /// Largest admissible grid value.
    pub theta: Option<f64>,
    pub scan: Vec<DampingPoint>,
    /// Admissible values form a lower set of the grid.
    pub downward_closed: bool,
    pub diagnostic: Option<String>,
}

/// Scans `grid` (sorted descending internally) for damping values with
/// `rho(|I - MA| (I + theta |NA|)) < 1 - tol`.
pub fn min_damping(bundle: &OperatorBundle, grid: &[f64], tol: f64) -> Result<DampingSearch> {
    let one_level = check_one_level(bundle, tol)?;
    if !one_level.convergent {
        return Ok(DampingSearch {
            theta: None,
            scan: Vec::new(),
            downward_closed: true,
            diagnostic: Some(format!("rho(|I - MA|) = {} is not below 1", one_level.rho)),
        });
    }
    let mut grid: Vec<f64> = grid.iter().copied().filter(|t| *t > 0.0 && t.is_finite()).collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let abs_ima = abs_matrix(&bundle.i_minus_ma);
    let abs_na = abs_matrix(&bundle.n.matmul(&bundle.a)?);
    let size = bundle.dim();
    let mut scan = Vec::with_capacity(grid.len());
    for &theta in &grid {
        let mut inner = abs_na.scale(theta);
        for i in 0..size {
            inner.row_mut(i)[i] += 1.0;
        }
        let check = nonneg_check(&abs_ima.matmul(&inner)?, tol)?;
        scan.push(DampingPoint { theta, rho: check.rho, admissible: check.convergent });
    }
    let theta = scan.iter().find(|p| p.admissible).map(|p| p.theta);
    let first = scan.iter().position(|p| p.admissible).unwrap_or(scan.len());
    let downward_closed = scan[first..].iter().all(|p| p.admissible);
    let diagnostic = theta.is_none().then(|| "no admissible damping on the grid".to_string());
    Ok(DampingSearch { theta, scan, downward_closed, diagnostic })
}

/// Everything the certificate reports about one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub instance: String,
    pub n: usize,
    pub subdomains: usize,
    pub m_matrix: MMatrixStatus,
    /// Smallest entries of `I - MA` and `I - NA`.
    pub min_entry_i_minus_ma: f64,
    pub min_entry_i_minus_na: f64,
    pub one_level: ConditionCheck,
    pub shared: ConditionCheck,
    pub lemma: ConditionCheck,
    /// `rho(I - MA)` and `rho((I - MA)(I - NA))` of the synchronous methods.
    pub sync_one_level_rho: f64,
    pub sync_two_level_rho: f64,
    pub damping: DampingSearch,
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Runs every check on one instance.
pub fn certify(
    instance: impl Into<String>,
    matrix: &SparseMatrix,
    decomposition: &Decomposition,
    coarse: &CoarseSpace,
) -> Result<Certificate> {
    let bundle = OperatorBundle::build(matrix, decomposition, coarse)?;
    let tol = DEFAULT_TOL;
    let sync_one = spectral_radius(&bundle.i_minus_ma, defaults::SPECTRAL_TOL, defaults::SPECTRAL_MAX_ITER)?;
    let sync_two =
        spectral_radius(&sync_iteration_matrix(&bundle)?, defaults::SPECTRAL_TOL, defaults::SPECTRAL_MAX_ITER)?;
    Ok(Certificate {
        instance: instance.into(),
        n: bundle.dim(),
        subdomains: decomposition.num_subdomains(),
        m_matrix: is_m_matrix(matrix, DENSE_LIMIT)?,
        min_entry_i_minus_ma: bundle.i_minus_ma.min_entry(),
        min_entry_i_minus_na: bundle.i_minus_na.min_entry(),
        one_level: check_one_level(&bundle, tol)?,
        shared: check_shared_condition(&bundle, tol)?,
        lemma: check_lemma_condition(&bundle, tol)?,
        sync_one_level_rho: sync_one.rho,
        sync_two_level_rho: sync_two.rho,
        damping: min_damping(&bundle, &DEFAULT_THETA_GRID, tol)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_coarse, partition_box, CoarseKind, WeightStrategy};
    use crate::problem::assemble_poisson_1d;

    fn line(n: usize, p: usize, overlap: usize, kind: CoarseKind) -> (SparseMatrix, Decomposition, CoarseSpace) {
        let (a, _) = assemble_poisson_1d(n, 1.0).unwrap();
        let d = partition_box([n, 1, 1], [p, 1, 1], overlap).unwrap();
        let c = build_coarse(&d, &a, kind).unwrap();
        (a, d, c)
    }

    #[test]
    fn exact_inverses_give_zero() {
        let (a, _) = assemble_poisson_1d(5, 1.0).unwrap();
        let dense = a.to_dense();
        let inv = lu_factor(&dense).unwrap().inverse();
        let zero = DenseMatrix::zeros(5, 5);
        let exact_m = OperatorBundle::from_parts(dense.clone(), inv.clone(), zero, vec![vec![1.0; 5]]).unwrap();
        assert!(check_one_level(&exact_m, DEFAULT_TOL).unwrap().rho < 1e-12);
        assert!(check_lemma_condition(&exact_m, DEFAULT_TOL).unwrap().rho < 1e-12);
        assert!(sync_iteration_matrix(&exact_m).unwrap().max_abs_entry() < 1e-12);
        let exact_n = OperatorBundle::from_parts(dense, DenseMatrix::zeros(5, 5), inv, vec![vec![1.0; 5]]).unwrap();
        assert!(check_lemma_condition(&exact_n, DEFAULT_TOL).unwrap().rho < 1e-12);
        assert!(sync_iteration_matrix(&exact_n).unwrap().max_abs_entry() < 1e-12);
    }

    #[test]
    fn block_jacobi_on_diagonal_matrix() {
        let a = SparseMatrix::from_triplets(4, 4, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0), (3, 3, 5.0)]).unwrap();
        let d = partition_box([4, 1, 1], [2, 1, 1], 0).unwrap();
        let c = build_coarse(&d, &a, CoarseKind::Aggregation).unwrap();
        let bundle = OperatorBundle::build(&a, &d, &c).unwrap();
        assert!(check_one_level(&bundle, DEFAULT_TOL).unwrap().rho < 1e-12);
    }

    #[test]
    fn small_line_one_level_converges() {
        let (a, d, c) = line(4, 2, 0, CoarseKind::Aggregation);
        let d = d.with_weights(WeightStrategy::Multiplicity);
        let bundle = OperatorBundle::build(&a, &d, &c).unwrap();
        let check = check_one_level(&bundle, DEFAULT_TOL).unwrap();
        assert!(check.convergent && check.estimate_converged);
    }

    #[test]
    fn shared_condition_is_majorized_by_lemma() {
        for kind in [CoarseKind::Aggregation, CoarseKind::Injection] {
            let (a, d, c) = line(8, 2, 1, kind);
            let bundle = OperatorBundle::build(&a, &d, &c).unwrap();
            let shared = check_shared_condition(&bundle, DEFAULT_TOL).unwrap();
            let lemma = check_lemma_condition(&bundle, DEFAULT_TOL).unwrap();
            assert!(shared.rho <= lemma.rho + 1e-10);
        }
    }

    #[test]
    fn zero_coarse_operator_reduces_shared_condition() {
        let (a, d, c) = line(8, 2, 1, CoarseKind::Aggregation);
        let mut bundle = OperatorBundle::build(&a, &d, &c).unwrap();
        bundle.n = DenseMatrix::zeros(8, 8);
        bundle.i_minus_na = DenseMatrix::identity(8);
        let shared = check_shared_condition(&bundle, DEFAULT_TOL).unwrap();
        let one = check_one_level(&bundle, DEFAULT_TOL).unwrap();
        assert!(shared.rho <= one.rho + 1e-10);
        let damping = min_damping(&bundle, &DEFAULT_THETA_GRID, DEFAULT_TOL).unwrap();
        assert_eq!(damping.theta, Some(1.0));
    }

    #[test]
    fn damping_scan_is_downward_closed() {
        let (a, d, c) = line(16, 4, 1, CoarseKind::Aggregation);
        let bundle = OperatorBundle::build(&a, &d, &c).unwrap();
        let search = min_damping(&bundle, &DEFAULT_THETA_GRID, DEFAULT_TOL).unwrap();
        assert!(search.theta.is_some());
        assert!(search.downward_closed);
        let rhos: Vec<f64> = search.scan.iter().map(|p| p.rho).collect();
        assert!(rhos.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn two_level_beats_one_level_synchronously() {
        let (a, d, c) = line(8, 2, 1, CoarseKind::Aggregation);
        let cert = certify("line", &a, &d, &c).unwrap();
        assert!(cert.sync_two_level_rho < cert.sync_one_level_rho);
        assert_eq!(cert.m_matrix, MMatrixStatus::Yes);
        let back: Certificate = serde_json::from_str(&cert.to_json().unwrap()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn dense_limit_is_enforced() {
        let (a, _) = assemble_poisson_1d(DENSE_LIMIT + 1, 1.0).unwrap();
        let d = partition_box([DENSE_LIMIT + 1, 1, 1], [2, 1, 1], 0).unwrap();
        let c = build_coarse(&d, &a, CoarseKind::Aggregation).unwrap();
        assert!(matches!(OperatorBundle::build(&a, &d, &c), Err(Error::TooLarge { .. })));
    }
}
