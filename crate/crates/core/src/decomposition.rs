//! Overlapping box partitions, partition-of-unity weights and the
//! one-unknown-per-subdomain coarse space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// How overlap entries are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightStrategy {
    /// Owner gets 1, every other sharer 0. Each local vector then agrees
    /// with the global iterate wherever it matters, which asynchronous
    /// iterations rely on.
    #[default]
    Restricted,
    /// Each of the `m` sharers gets `1/m`.
    Multiplicity,
}

/// Overlapping subdomains with their weights.
///
/// `subdomains[s]` is the sorted global index set of subdomain `s`,
/// `weights[s]` is aligned with it, and `owner[i]` is the subdomain that
/// holds `i` before any overlap is added.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    global_n: usize,
    subdomains: Vec<Vec<usize>>,
    owner: Vec<usize>,
    weights: Vec<Vec<f64>>,
    overlap: usize,
    strategy: WeightStrategy,
    grid: Option<[usize; 3]>,
    procs: Option<[usize; 3]>,
}

/// Balanced split of `0..n` into `parts` contiguous ranges.
fn split_range(n: usize, parts: usize, k: usize) -> (usize, usize) {
    (k * n / parts, (k + 1) * n / parts)
}

/// Splits a lexicographically ordered (x fastest) `grid` into a `procs`
/// arrangement of boxes and extends each box by `overlap` mesh steps per
/// direction, clipped at the boundary. Subdomain `s = px + PX*(py + PY*pz)`.
/// Weights default to [`WeightStrategy::Restricted`].
pub fn partition_box(grid: [usize; 3], procs: [usize; 3], overlap: usize) -> Result<Decomposition> {
    for d in 0..3 {
        if grid[d] == 0 {
            return Err(Error::InvalidDecomposition(format!("grid dimension {d} is zero")));
        }
        if procs[d] == 0 || procs[d] > grid[d] {
            return Err(Error::InvalidDecomposition(format!(
                "{} processes along dimension {d} leave an empty subdomain on {} cells",
                procs[d], grid[d]
            )));
        }
    }
    let [nx, ny, nz] = grid;
    let global_n = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or_else(|| Error::InvalidDecomposition("grid size overflows".into()))?;
    let p = procs[0] * procs[1] * procs[2];
    let mut subdomains = Vec::with_capacity(p);
    let mut owner = vec![0usize; global_n];
    for pz in 0..procs[2] {
        for py in 0..procs[1] {
            for px in 0..procs[0] {
                let s = px + procs[0] * (py + procs[1] * pz);
                let core = [
                    split_range(nx, procs[0], px),
                    split_range(ny, procs[1], py),
                    split_range(nz, procs[2], pz),
                ];
                for z in core[2].0..core[2].1 {
                    for y in core[1].0..core[1].1 {
                        for x in core[0].0..core[0].1 {
                            owner[x + nx * (y + ny * z)] = s;
                        }
                    }
                }
                let ext: Vec<(usize, usize)> = (0..3)
                    .map(|d| (core[d].0.saturating_sub(overlap), (core[d].1 + overlap).min(grid[d])))
                    .collect();
                let mut ids = Vec::with_capacity((ext[0].1 - ext[0].0) * (ext[1].1 - ext[1].0) * (ext[2].1 - ext[2].0));
                for z in ext[2].0..ext[2].1 {
                    for y in ext[1].0..ext[1].1 {
                        for x in ext[0].0..ext[0].1 {
                            ids.push(x + nx * (y + ny * z));
                        }
                    }
                }
                subdomains.push(ids);
            }
        }
    }
    let mut d = Decomposition::from_subdomains(global_n, subdomains, owner, overlap, WeightStrategy::default())?;
    d.grid = Some(grid);
    d.procs = Some(procs);
    Ok(d)
}

impl Decomposition {
    /// Builds a decomposition from explicit index sets. Each set is sorted
    /// and deduplicated; every index must be covered and each index must lie
    /// in its owner's set.
    pub fn from_subdomains(
        global_n: usize,
        mut subdomains: Vec<Vec<usize>>,
        owner: Vec<usize>,
        overlap: usize,
        strategy: WeightStrategy,
    ) -> Result<Self> {
        if subdomains.is_empty() {
            return Err(Error::InvalidDecomposition("no subdomains".into()));
        }
        if owner.len() != global_n {
            return Err(Error::DimensionMismatch { expected: global_n, found: owner.len() });
        }
        let p = subdomains.len();
        for (s, ids) in subdomains.iter_mut().enumerate() {
            ids.sort_unstable();
            ids.dedup();
            if ids.is_empty() {
                return Err(Error::InvalidDecomposition(format!("subdomain {s} is empty")));
            }
            if *ids.last().unwrap() >= global_n {
                return Err(Error::InvalidDecomposition(format!("subdomain {s} has an index out of range")));
            }
        }
        let mut covered = vec![false; global_n];
        for ids in &subdomains {
            for &i in ids {
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidDecomposition(format!("index {i} is not covered")));
        }
        let mut owned_count = vec![0usize; p];
        for (i, &s) in owner.iter().enumerate() {
            if s >= p || subdomains[s].binary_search(&i).is_err() {
                return Err(Error::InvalidDecomposition(format!("index {i} is not in its owner subdomain")));
            }
            owned_count[s] += 1;
        }
        if let Some(s) = owned_count.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDecomposition(format!("subdomain {s} owns no index")));
        }
        let mut d = Decomposition {
            global_n,
            weights: Vec::new(),
            subdomains,
            owner,
            overlap,
            strategy,
            grid: None,
            procs: None,
        };
        d.weights = d.compute_weights(strategy);
        Ok(d)
    }

    fn compute_weights(&self, strategy: WeightStrategy) -> Vec<Vec<f64>> {
        let mut multiplicity = vec![0u32; self.global_n];
        for ids in &self.subdomains {
            for &i in ids {
                multiplicity[i] += 1;
            }
        }
        self.subdomains
            .iter()
            .enumerate()
            .map(|(s, ids)| {
                ids.iter()
                    .map(|&i| match strategy {
                        WeightStrategy::Restricted => {
                            if self.owner[i] == s {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        WeightStrategy::Multiplicity => 1.0 / f64::from(multiplicity[i]),
                    })
                    .collect()
            })
            .collect()
    }

    /// Returns a copy using the given weighting.
    pub fn with_weights(&self, strategy: WeightStrategy) -> Self {
        let mut d = self.clone();
        d.weights = d.compute_weights(strategy);
        d.strategy = strategy;
        d
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn global_n(&self) -> usize {
        self.global_n
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn strategy(&self) -> WeightStrategy {
        self.strategy
    }

    pub fn grid(&self) -> Option<[usize; 3]> {
        self.grid
    }

    pub fn procs(&self) -> Option<[usize; 3]> {
        self.procs
    }

    pub fn indices(&self, s: usize) -> &[usize] {
        &self.subdomains[s]
    }

    pub fn weights(&self, s: usize) -> &[f64] {
        &self.weights[s]
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Sorted indices owned by subdomain `s`.
    pub fn owned(&self, s: usize) -> Vec<usize> {
        self.owner.iter().enumerate().filter(|(_, &o)| o == s).map(|(i, _)| i).collect()
    }

    /// `R_s x`.
    pub fn restrict(&self, s: usize, x: &[f64]) -> Vec<f64> {
        self.subdomains[s].iter().map(|&i| x[i]).collect()
    }

    /// `sum_s R_s^T W_s x_s`, accumulated in increasing `s`.
    pub fn assemble(&self, locals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.global_n];
        for (s, local) in locals.iter().enumerate() {
            for ((&i, &w), &v) in self.subdomains[s].iter().zip(&self.weights[s]).zip(local) {
                out[i] += w * v;
            }
        }
        out
    }

    /// `sum_s R_s^T W_s R_s x`; equals `x` by the partition of unity.
    pub fn apply_partition_of_unity(&self, x: &[f64]) -> Vec<f64> {
        let locals: Vec<Vec<f64>> = (0..self.num_subdomains()).map(|s| self.restrict(s, x)).collect();
        self.assemble(&locals)
    }

    /// Global diagonal of `R_s^T W_s R_s`.
    pub fn weight_diagonal(&self, s: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.global_n];
        for (&i, &w) in self.subdomains[s].iter().zip(&self.weights[s]) {
            d[i] = w;
        }
        d
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            subdomains: self.num_subdomains(),
            global_n: self.global_n,
            overlap: self.overlap,
            weight_strategy: self.strategy,
            grid: self.grid,
            procs: self.procs,
            subdomain_sizes: self.subdomains.iter().map(Vec::len).collect(),
            owned_sizes: (0..self.num_subdomains())
                .map(|s| self.owner.iter().filter(|&&o| o == s).count())
                .collect(),
        }
    }
}

/// Experiment record of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub subdomains: usize,
    pub global_n: usize,
    pub overlap: usize,
    pub weight_strategy: WeightStrategy,
    pub grid: Option<[usize; 3]>,
    pub procs: Option<[usize; 3]>,
    pub subdomain_sizes: Vec<usize>,
    pub owned_sizes: Vec<usize>,
}

/// `A_s = R_s A R_s^T`.
pub fn restrict_block(a: &SparseMatrix, d: &Decomposition, s: usize) -> Result<SparseMatrix> {
    if s >= d.num_subdomains() {
        return Err(Error::InvalidDecomposition(format!("subdomain {s} out of range")));
    }
    a.principal_submatrix(d.indices(s))
}

/// Shape of the coarse restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseKind {
    /// Row `s` has a one at every index owned by `s`.
    #[default]
    Aggregation,
    /// Row `s` is the unit row of the middle owned index of `s`.
    Injection,
}

/// Coarse restriction `R~` (one row per subdomain) and `A~ = R~ A R~^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSpace {
    kind: CoarseKind,
    restriction: SparseMatrix,
    matrix: SparseMatrix,
}

impl CoarseSpace {
    pub fn kind(&self) -> CoarseKind {
        self.kind
    }

    /// `R~`, of size `p x n`.
    pub fn restriction(&self) -> &SparseMatrix {
        &self.restriction
    }

    /// `A~`, of size `p x p`.
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.restriction.nrows()
    }
}

pub fn build_coarse(d: &Decomposition, a: &SparseMatrix, kind: CoarseKind) -> Result<CoarseSpace> {
    let n = d.global_n();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
    }
    let p = d.num_subdomains();
    // Every column of R~ holds at most one entry, so the coarse index of a
    // fine column is a plain lookup.
    let mut coarse_of: Vec<Option<usize>> = vec![None; n];
    match kind {
        CoarseKind::Aggregation => {
            for (i, &s) in d.owner().iter().enumerate() {
                coarse_of[i] = Some(s);
            }
        }
        CoarseKind::Injection => {
            for s in 0..p {
                let owned = d.owned(s);
                coarse_of[owned[owned.len() / 2]] = Some(s);
            }
        }
    }
    let restriction_triplets: Vec<(usize, usize, f64)> =
        coarse_of.iter().enumerate().filter_map(|(i, q)| q.map(|q| (q, i, 1.0))).collect();
    let restriction = SparseMatrix::from_triplets(p, n, &restriction_triplets)?;
    let mut triplets = Vec::new();
    for (i, j, v) in a.triplets() {
        if let (Some(qi), Some(qj)) = (coarse_of[i], coarse_of[j]) {
            triplets.push((qi, qj, v));
        }
    }
    let matrix = SparseMatrix::from_triplets(p, p, &triplets)?;
    Ok(CoarseSpace { kind, restriction, matrix })
}
