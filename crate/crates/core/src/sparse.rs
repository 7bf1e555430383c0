//! Compressed sparse row storage and the kernels every other module uses.
//!
//! A [`SparseMatrix`] is immutable once built. Column access, which the
//! approximate-inverse construction needs, goes through a column-compressed
//! shadow that is built lazily the first time it is requested and then kept
//! alongside the row storage.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::LinearOperator;

/// Column-compressed copy of a matrix's structure and values.
#[derive(Debug, Clone)]
pub struct ColumnView {
    pub col_offsets: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ColumnView {
    /// Row indices and values stored in column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_offsets[j]..self.col_offsets[j + 1];
        (&self.row_indices[range.clone()], &self.values[range])
    }
}

/// Real sparse matrix in CSR form.
#[derive(Debug)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    columns: OnceLock<ColumnView>,
}

impl Clone for SparseMatrix {
    fn clone(&self) -> Self {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.clone(),
            columns: OnceLock::new(),
        }
    }
}

impl PartialEq for SparseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
            && self.values == other.values
    }
}

impl SparseMatrix {
    /// Build from raw CSR arrays, checking every structural invariant.
    pub fn try_new(
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
                "row_offsets[nrows], col_indices and values disagree on nnz".into(),
            ));
        }
        for i in 0..nrows {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if end < start {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let row = &col_indices[start..end];
            for (k, &c) in row.iter().enumerate() {
                if c >= ncols {
                    return Err(Error::InvalidStructure(format!(
                        "column index {c} out of range in row {i}"
                    )));
                }
                if k > 0 && row[k - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self::from_parts(nrows, ncols, row_offsets, col_indices, values))
    }

    fn from_parts(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            columns: OnceLock::new(),
        }
    }

    /// Build from coordinate triplets. Duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut trips: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &trips {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
        }
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self::from_parts(nrows, ncols, row_offsets, col_indices, values))
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_parts(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_parts(n, n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    /// Keep every entry of a dense matrix whose magnitude exceeds `drop_tol`.
    pub fn from_dense(dense: &DMatrix<f64>, drop_tol: f64) -> Self {
        let trips = (0..dense.nrows()).flat_map(|i| {
            (0..dense.ncols()).filter_map(move |j| {
                let v = dense[(i, j)];
                (v.abs() > drop_tol).then_some((i, j, v))
            })
        });
        Self::from_triplets(dense.nrows(), dense.ncols(), trips.collect::<Vec<_>>())
            .expect("dense entries are in range")
    }

    /// Single dense column as an `n x 1` sparse matrix.
    pub fn from_column(col: &[f64]) -> Self {
        let trips: Vec<_> = col
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i, 0, v))
            .collect();
        Self::from_triplets(col.len(), 1, trips).expect("in range")
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
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Iterate over stored `(row, col, value)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// The column-compressed shadow, built on first use.
    pub fn columns(&self) -> &ColumnView {
        self.columns.get_or_init(|| {
            let mut counts = vec![0usize; self.ncols + 1];
            for &j in &self.col_indices {
                counts[j + 1] += 1;
            }
            for j in 0..self.ncols {
                counts[j + 1] += counts[j];
            }
            let mut next = counts.clone();
            let mut row_indices = vec![0usize; self.nnz()];
            let mut values = vec![0.0; self.nnz()];
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    row_indices[next[j]] = i;
                    values[next[j]] = v;
                    next[j] += 1;
                }
            }
            ColumnView {
                col_offsets: counts,
                row_indices,
                values,
            }
        })
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::dim("matvec", self.ncols, x.len()));
        }
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without allocation. Lengths are the caller's responsibility.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    /// `Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::dim("matvec_transpose", self.nrows, x.len()));
        }
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let view = self.columns();
        SparseMatrix::from_parts(
            self.ncols,
            self.nrows,
            view.col_offsets.clone(),
            view.row_indices.clone(),
            view.values.clone(),
        )
    }

    /// Square root of the sum of squared stored values.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other` with merged patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows {
            return Err(Error::dim("add_scaled (rows)", self.nrows, other.nrows));
        }
        if self.ncols != other.ncols {
            return Err(Error::dim("add_scaled (cols)", self.ncols, other.ncols));
        }
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_offsets.push(0);
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q == cb.len() || (p < ca.len() && ca[p] <= cb[q]);
                let take_b = p == ca.len() || (q < cb.len() && cb[q] <= ca[p]);
                let (col, val) = match (take_a, take_b) {
                    (true, true) => {
                        let out = (ca[p], alpha * va[p] + beta * vb[q]);
                        p += 1;
                        q += 1;
                        out
                    }
                    (true, false) => {
                        let out = (ca[p], alpha * va[p]);
                        p += 1;
                        out
                    }
                    _ => {
                        let out = (cb[q], beta * vb[q]);
                        q += 1;
                        out
                    }
                };
                col_indices.push(col);
                values.push(val);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix::from_parts(
            self.nrows,
            self.ncols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Linear combination `Σ c_k A_k` over matrices of identical shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let mut acc = first.1.scale(first.0);
        for (c, m) in rest {
            acc = acc.add_scaled(1.0, m, *c)?;
        }
        Ok(acc)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::dim("matmul", self.ncols, other.nrows));
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix::from_parts(
            self.nrows,
            other.ncols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    /// Dense copy of column `j`.
    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        let (rows, vals) = self.columns().column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            out[i] = v;
        }
        out
    }

    /// Dense block `A(:, pattern)` restricted to the rows that are
    /// structurally nonzero in at least one of the chosen columns.
    ///
    /// Returns the block and the map from block row to matrix row. The row
    /// map is sorted ascending.
    pub fn extract_column_submatrix(&self, pattern: &[usize]) -> Result<(DMatrix<f64>, Vec<usize>)> {
        if pattern.is_empty() {
            return Err(Error::InvalidArgument("empty column pattern".into()));
        }
        if let Some(&bad) = pattern.iter().find(|&&j| j >= self.ncols) {
            return Err(Error::InvalidArgument(format!(
                "pattern index {bad} out of range for {} columns",
                self.ncols
            )));
        }
        let view = self.columns();
        let mut rows: Vec<usize> = pattern
            .iter()
            .flat_map(|&j| view.column(j).0.iter().copied())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let mut block = DMatrix::zeros(rows.len(), pattern.len());
        for (c, &j) in pattern.iter().enumerate() {
            let (ri, vals) = view.column(j);
            for (&i, &v) in ri.iter().zip(vals) {
                let r = rows.binary_search(&i).expect("row collected above");
                block[(r, c)] = v;
            }
        }
        Ok((block, rows))
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseMatrix {
        SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)])
            .unwrap()
    }

    #[test]
    fn identity_matvec() {
        let y = SparseMatrix::identity(3).matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_matvec() {
        let y = SparseMatrix::from_diagonal(&[2.0, 4.0]).matvec(&[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![2.0, 4.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let err = SparseMatrix::identity(3).matvec(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = SparseMatrix::identity(3).matvec_transpose(&[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn transpose_products() {
        let y = SparseMatrix::identity(3).matvec_transpose(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
        let shift = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(shift.matvec_transpose(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn frobenius_values() {
        assert!((SparseMatrix::identity(2).frobenius_norm() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(SparseMatrix::zeros(3, 3).frobenius_norm(), 0.0);
        assert!((small().frobenius_norm() - 30f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(1, 1, [(0, 0, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 5.0);
    }

    #[test]
    fn try_new_rejects_bad_structure() {
        assert!(SparseMatrix::try_new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let b = SparseMatrix::from_triplets(2, 2, [(0, 1, 2.0), (1, 1, 3.0)]).unwrap();
        let c = a.add_scaled(2.0, &b, -1.0).unwrap();
        assert_eq!(c.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, -2.0, 0.0, -1.0]));
    }

    #[test]
    fn column_submatrix_identity() {
        let (block, rows) = SparseMatrix::identity(3).extract_column_submatrix(&[1]).unwrap();
        assert_eq!(rows, vec![1]);
        assert_eq!(block, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn column_submatrix_diagonal() {
        let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let (block, rows) = a.extract_column_submatrix(&[0, 2]).unwrap();
        assert_eq!(rows, vec![0, 2]);
        assert_eq!(block, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn column_submatrix_rejects_empty() {
        assert!(SparseMatrix::identity(2).extract_column_submatrix(&[]).is_err());
        assert!(SparseMatrix::identity(2).extract_column_submatrix(&[2]).is_err());
    }

    #[test]
    fn matmul_matches_dense() {
        let a = small();
        let c = a.matmul(&a.transpose()).unwrap();
        let d = a.to_dense();
        assert_eq!(c.to_dense(), &d * d.transpose());
    }
}
