//! Per-subdomain data shared by the synchronous and asynchronous solvers.
//!
//! Subdomain `s` keeps its own local vector `x_s` and, for every neighbour
//! `r` it depends on, a view holding the entries of `x_r` that its residual
//! needs. The residual on `Omega_s` is evaluated from these pieces through
//! `z_j = sum_r w_r(j) x_r(j)` (increasing `r`) followed by `b_i - sum_j a_ij z_j`
//! in column order, which reproduces the global residual of the assembled
//! iterate bit for bit.

use crate::config::{SolverConfig, SolverKind};
use crate::decomposition::{build_coarse, CoarseKind, CoarseSpace, Decomposition};
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, lu_factor, BandedLu, LuFactors, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Own(usize),
    View { link: usize, pos: usize },
}

/// Values exchanged with one neighbour. On the receiving side `positions`
/// index the peer's local vector; on the sending side they index ours. Both
/// sides list the same global indices in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub peer: usize,
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone)]
enum LocalSolver {
    Banded(BandedLu),
    Cg { matrix: SparseMatrix, tol: f64 },
}

impl LocalSolver {
    fn new(block: SparseMatrix, kind: SolverKind) -> Result<Self> {
        match kind {
            SolverKind::Lu => Ok(LocalSolver::Banded(BandedLu::factor(&block)?)),
            SolverKind::Cg { tol } => Ok(LocalSolver::Cg { matrix: block, tol }),
        }
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            LocalSolver::Banded(lu) => lu.solve(rhs),
            LocalSolver::Cg { matrix, tol } => cg_checked(matrix, rhs, *tol),
        }
    }
}

fn cg_checked(matrix: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let max_iter = 10 * matrix.nrows().max(10);
    let out = cg_solve(matrix, rhs, tol, max_iter)?;
    if out.converged {
        Ok(out.x)
    } else {
        Err(Error::NotConverged { max_iter, residual: out.residual })
    }
}

/// One subdomain's residual operator, links and local solver.
#[derive(Debug, Clone)]
pub struct Subdomain {
    rank: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
    rhs: Vec<f64>,
    row_offsets: Vec<usize>,
    slot_of_entry: Vec<usize>,
    entry_values: Vec<f64>,
    slot_globals: Vec<usize>,
    slot_offsets: Vec<usize>,
    slot_sources: Vec<(Source, f64)>,
    sources: Vec<Link>,
    dests: Vec<Link>,
    link_of_peer: Vec<Option<usize>>,
    solver: LocalSolver,
}

impl Subdomain {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Neighbours whose data this subdomain reads.
    pub fn sources(&self) -> &[Link] {
        &self.sources
    }

    /// Neighbours that read this subdomain's data.
    pub fn dests(&self) -> &[Link] {
        &self.dests
    }

    /// Index into [`Self::sources`] of `peer`.
    pub fn source_link(&self, peer: usize) -> Option<usize> {
        self.link_of_peer.get(peer).copied().flatten()
    }

    /// Zero local vector and views.
    pub fn zero_state(&self) -> LocalState {
        LocalState {
            x: vec![0.0; self.indices.len()],
            views: self.sources.iter().map(|l| vec![0.0; l.positions.len()]).collect(),
        }
    }

    /// `b_s - sum_r R_s A R_r^T W_r x_r` from the local vector and views.
    pub fn residual(&self, own: &[f64], views: &[Vec<f64>]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.slot_globals.len());
        for c in 0..self.slot_globals.len() {
            let mut acc = 0.0;
            for &(src, w) in &self.slot_sources[self.slot_offsets[c]..self.slot_offsets[c + 1]] {
                let v = match src {
                    Source::Own(pos) => own[pos],
                    Source::View { link, pos } => views[link][pos],
                };
                acc += w * v;
            }
            z.push(acc);
        }
        (0..self.indices.len())
            .map(|i| {
                let mut az = 0.0;
                for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                    az += self.entry_values[k] * z[self.slot_of_entry[k]];
                }
                self.rhs[i] - az
            })
            .collect()
    }

    /// `tau^T W_s tau`.
    pub fn weighted_norm2(&self, tau: &[f64]) -> f64 {
        self.weights.iter().zip(tau).fold(0.0, |acc, (w, t)| acc + w * t * t)
    }

    /// `M_s tau`, i.e. `A_s^{-1} tau` up to the local solver accuracy.
    pub fn local_solve(&self, tau: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(tau)
    }

    /// Entries of the local vector sent over `dests()[link]`.
    pub fn outgoing(&self, link: usize, own: &[f64]) -> Vec<f64> {
        self.dests[link].positions.iter().map(|&p| own[p]).collect()
    }

    /// `R~ R_s^T W_s tau` as a dense coarse vector.
    pub fn coarse_part(&self, tau: &[f64], coarse: &CoarseOperator) -> Vec<f64> {
        let mut part = vec![0.0; coarse.dim()];
        for ((&g, &w), &t) in self.indices.iter().zip(&self.weights).zip(tau) {
            let u = w * t;
            for &(q, v) in coarse.column(g) {
                part[q] += v * u;
            }
        }
        part
    }

    /// `x_s += theta R_s R~^T y`.
    pub fn apply_correction(&self, own: &mut [f64], coarse: &CoarseOperator, y: &[f64], theta: f64) {
        for (x, &g) in own.iter_mut().zip(&self.indices) {
            *x += theta * coarse.prolongate_at(g, y);
        }
    }

    /// Same correction applied to the copy of neighbour data in `views`.
    pub fn apply_view_correction(&self, views: &mut [Vec<f64>], coarse: &CoarseOperator, y: &[f64], theta: f64, setup: &SchwarzSetup) {
        for (link, view) in self.sources.iter().zip(views.iter_mut()) {
            let peer = &setup.subdomains[link.peer];
            for (v, &pos) in view.iter_mut().zip(&link.positions) {
                *v += theta * coarse.prolongate_at(peer.indices[pos], y);
            }
        }
    }
}

/// Local vector plus neighbour views of one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub x: Vec<f64>,
    pub views: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum CoarseSolver {
    Lu(LuFactors),
    Cg { tol: f64 },
}

/// Coarse space with its factorized (or iteratively solved) matrix.
#[derive(Debug, Clone)]
pub struct CoarseOperator {
    space: CoarseSpace,
    columns: Vec<Vec<(usize, f64)>>,
    solver: CoarseSolver,
}

impl CoarseOperator {
    pub fn new(space: CoarseSpace, kind: SolverKind) -> Result<Self> {
        let n = space.restriction().ncols();
        let mut columns = vec![Vec::new(); n];
        for (q, j, v) in space.restriction().triplets() {
            columns[j].push((q, v));
        }
        let solver = match kind {
            SolverKind::Lu => CoarseSolver::Lu(lu_factor(&space.matrix().to_dense())?),
            SolverKind::Cg { tol } => CoarseSolver::Cg { tol },
        };
        Ok(Self { space, columns, solver })
    }

    pub fn space(&self) -> &CoarseSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    /// `(R~^T y)_j`.
    pub fn prolongate_at(&self, j: usize, y: &[f64]) -> f64 {
        self.columns[j].iter().fold(0.0, |acc, &(q, v)| acc + v * y[q])
    }

    /// `A~^{-1} rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            CoarseSolver::Lu(f) => f.solve(rhs),
            CoarseSolver::Cg { tol } => cg_checked(self.space.matrix(), rhs, *tol),
        }
    }

    /// Sum of per-subdomain coarse parts in increasing rank.
    pub fn sum_parts<'a>(&self, parts: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
        let mut total = vec![0.0; self.dim()];
        for part in parts {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
        total
    }
}

/// Everything a solver needs, built once and shared read-only.
#[derive(Debug, Clone)]
pub struct SchwarzSetup {
    matrix: SparseMatrix,
    rhs: Vec<f64>,
    decomposition: Decomposition,
    subdomains: Vec<Subdomain>,
    coarse: Option<CoarseOperator>,
}

impl SchwarzSetup {
    /// Builds local operators and, for two-level schemes, the coarse space of
    /// the given kind.
    pub fn new(
        matrix: SparseMatrix,
        rhs: Vec<f64>,
        decomposition: Decomposition,
        config: &SolverConfig,
        coarse_kind: CoarseKind,
    ) -> Result<Self> {
        config.validate()?;
        let coarse = if config.scheme.is_two_level() {
            let space = build_coarse(&decomposition, &matrix, coarse_kind)?;
            Some(CoarseOperator::new(space, config.coarse_solver)?)
        } else {
            None
        };
        Self::with_coarse(matrix, rhs, decomposition, config.local_solver, coarse)
    }

    pub fn with_coarse(
        matrix: SparseMatrix,
        rhs: Vec<f64>,
        decomposition: Decomposition,
        local_solver: SolverKind,
        coarse: Option<CoarseOperator>,
    ) -> Result<Self> {
        let n = decomposition.global_n();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows() });
        }
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
        }
        let p = decomposition.num_subdomains();
        // membership[j] = (subdomain, position) in increasing subdomain order
        let mut membership: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for s in 0..p {
            for (pos, &j) in decomposition.indices(s).iter().enumerate() {
                membership[j].push((s, pos));
            }
        }
        let mut subdomains = Vec::with_capacity(p);
        for s in 0..p {
            let indices = decomposition.indices(s).to_vec();
            let weights = decomposition.weights(s).to_vec();
            let mut slot_globals: Vec<usize> =
                indices.iter().flat_map(|&i| matrix.row(i).0.iter().copied()).collect();
            slot_globals.sort_unstable();
            slot_globals.dedup();

            let mut link_of_peer = vec![None; p];
            let mut sources: Vec<Link> = Vec::new();
            let mut slot_offsets = vec![0];
            let mut slot_sources = Vec::new();
            for &j in &slot_globals {
                for &(r, pos) in &membership[j] {
                    let w = decomposition.weights(r)[pos];
                    let src = if r == s {
                        Source::Own(pos)
                    } else {
                        let link = *link_of_peer[r].get_or_insert_with(|| {
                            sources.push(Link { peer: r, positions: Vec::new() });
                            sources.len() - 1
                        });
                        sources[link].positions.push(pos);
                        Source::View { link, pos: sources[link].positions.len() - 1 }
                    };
                    slot_sources.push((src, w));
                }
                slot_offsets.push(slot_sources.len());
            }

            let mut row_offsets = vec![0];
            let mut slot_of_entry = Vec::new();
            let mut entry_values = Vec::new();
            for &i in &indices {
                let (cols, vals) = matrix.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    slot_of_entry.push(slot_globals.binary_search(&j).expect("column collected above"));
                    entry_values.push(v);
                }
                row_offsets.push(slot_of_entry.len());
            }
            let block = matrix.principal_submatrix(&indices)?;
            let solver = LocalSolver::new(block, local_solver)?;
            let local_rhs = indices.iter().map(|&i| rhs[i]).collect();
            subdomains.push(Subdomain {
                rank: s,
                indices,
                weights,
                rhs: local_rhs,
                row_offsets,
                slot_of_entry,
                entry_values,
                slot_globals,
                slot_offsets,
                slot_sources,
                sources,
                dests: Vec::new(),
                link_of_peer,
                solver,
            });
        }
        for s in 0..p {
            let incoming: Vec<(usize, Vec<usize>)> =
                subdomains[s].sources.iter().map(|l| (l.peer, l.positions.clone())).collect();
            for (peer, positions) in incoming {
                subdomains[peer].dests.push(Link { peer: s, positions });
            }
        }
        Ok(Self { matrix, rhs, decomposition, subdomains, coarse })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, s: usize) -> &Subdomain {
        &self.subdomains[s]
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn coarse(&self) -> Option<&CoarseOperator> {
        self.coarse.as_ref()
    }

    /// Global vector `sum_s R_s^T W_s x_s`.
    pub fn assemble(&self, locals: &[Vec<f64>]) -> Vec<f64> {
        self.decomposition.assemble(locals)
    }

    /// `||b - A x||_2` of the assembled iterate.
    pub fn true_residual(&self, locals: &[Vec<f64>]) -> f64 {
        let x = self.assemble(locals);
        let r = self.matrix.residual(&self.rhs, &x).expect("dimensions checked at setup");
        crate::linalg::norm2(&r)
    }

    /// Local pieces `R_s x` of a global vector, with matching views.
    pub fn scatter(&self, x: &[f64]) -> Vec<LocalState> {
        let locals: Vec<Vec<f64>> = (0..self.num_subdomains()).map(|s| self.decomposition.restrict(s, x)).collect();
        self.subdomains
            .iter()
            .map(|sd| LocalState {
                x: locals[sd.rank].clone(),
                views: sd.sources.iter().map(|l| l.positions.iter().map(|&p| locals[l.peer][p]).collect()).collect(),
            })
            .collect()
    }
}
