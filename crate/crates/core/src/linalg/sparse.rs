//! Compressed sparse row storage.

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Real matrix in compressed sparse row form.
///
/// Column indices are strictly increasing within each row and explicit
/// zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[nrows] != values.len() {
            return Err(Error::InvalidStructure(
                "row_offsets[nrows], col_indices and values lengths disagree".into(),
            ));
        }
        for i in 0..nrows {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if start > end {
                return Err(Error::InvalidStructure(format!("row_offsets decreases at row {i}")));
            }
            for k in start..end {
                if col_indices[k] >= ncols {
                    return Err(Error::InvalidStructure(format!(
                        "column {} out of range in row {i}",
                        col_indices[k]
                    )));
                }
                if k > start && col_indices[k] <= col_indices[k - 1] {
                    return Err(Error::InvalidStructure(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
                if values[k] == 0.0 {
                    return Err(Error::InvalidStructure(format!("explicit zero stored in row {i}")));
                }
            }
        }
        Ok(Self { nrows, ncols, row_offsets, col_indices, values })
    }

    /// Assembles from (row, col, value) triplets. Duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidStructure(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut fill = counts.clone();
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < scratch.len() {
                let j = scratch[k].0;
                let mut sum = 0.0;
                while k < scratch.len() && scratch[k].0 == j {
                    sum += scratch[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_indices.push(j);
                    values.push(sum);
                }
            }
            row_offsets.push(values.len());
        }
        Ok(Self { nrows, ncols, row_offsets, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.nrows(), d.ncols(), &triplets).expect("dense entries are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    /// Iterates over stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`, summing each row's stored entries left to right.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch { expected: self.ncols, found: x.len() });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch { expected: self.nrows, found: y.len() });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `b - A x` with the same summation order as [`SparseMatrix::spmv`].
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.nrows {
            return Err(Error::DimensionMismatch { expected: self.nrows, found: b.len() });
        }
        let mut r = self.spmv(x)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(r)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            cols[fill[j]] = i;
            vals[fill[j]] = v;
            fill[j] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    /// True when `|a_ij - a_ji| <= tol * max(|a_ij|, |a_ji|)` for every stored entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        self.triplets().all(|(i, j, v)| {
            let w = self.get(j, i);
            (v - w).abs() <= tol * v.abs().max(w.abs())
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    /// Principal submatrix on the sorted index set `indices`.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<Self> {
        self.submatrix(indices, indices)
    }

    /// Submatrix with the given sorted row and column index sets; columns are
    /// renumbered by their position in `cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if rows.windows(2).any(|w| w[0] >= w[1]) || cols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStructure("submatrix index sets must be strictly increasing".into()));
        }
        if rows.last().is_some_and(|&r| r >= self.nrows) || cols.last().is_some_and(|&c| c >= self.ncols) {
            return Err(Error::InvalidStructure("submatrix index out of range".into()));
        }
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            local[j] = k;
        }
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &i in rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                if local[j] != usize::MAX {
                    col_indices.push(local[j]);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Ok(Self { nrows: rows.len(), ncols: cols.len(), row_offsets, col_indices, values })
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (i, j, _) in self.triplets() {
            if j < i {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        (lower, upper)
    }

    /// Returns a copy with every stored value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Entrywise map over stored values; entries mapped to zero are dropped.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (i, j, f(i, j, v))).collect();
        Self::from_triplets(self.nrows, self.ncols, &triplets).expect("structure preserved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spmv() {
        let a = SparseMatrix::identity(2);
        assert_eq!(a.spmv(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn tridiag_row_sums() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(a.spmv(&[1.0]), Err(Error::DimensionMismatch { expected: 3, found: 1 })));
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, -1.0), (1, 0, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 0), 2.5);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn from_csr_rejects_unsorted_columns() {
        let err = SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidStructure(_)));
        let err = SparseMatrix::from_csr(1, 3, vec![0, 1], vec![0], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidStructure(_)));
    }

    #[test]
    fn submatrix_and_transpose() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (2, 0, 4.0), (2, 2, 5.0)])
            .unwrap();
        let s = a.principal_submatrix(&[0, 2]).unwrap();
        assert_eq!(s.to_dense().values(), &[1.0, 2.0, 4.0, 5.0]);
        let t = a.transpose();
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(t.get(0, 2), 4.0);
        assert!(!a.is_symmetric(0.0));
        assert_eq!(a.bandwidths(), (2, 2));
    }
}
