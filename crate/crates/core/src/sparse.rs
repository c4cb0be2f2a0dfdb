//! Compressed sparse row matrices and the kernels the solver needs:
//! products with vectors and matrices, and a triple product that never
//! materializes the full intermediate.
//!
//! All kernels are serial and sum in column-index order, so results are
//! bitwise reproducible.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Sparse matrix under construction, as `(row, col, value)` triplets.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Triplets {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Triplets {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Adds `value` at `(row, col)`; duplicates are summed on conversion.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.n_rows && col < self.n_cols, "triplet ({row}, {col}) out of range");
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Finalizes to compressed form: rows sorted by column, duplicates
    /// summed, exact zeros dropped.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_rows + 1];
        for &(r, _, _) in &self.entries {
            counts[r + 1] += 1;
        }
        for i in 0..self.n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        for &(r, c, v) in &self.entries {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..self.n_rows {
            let range = counts[i]..counts[i + 1];
            order.clear();
            order.extend(range.clone());
            order.sort_by_key(|&k| cols[k]);
            let mut k = 0;
            while k < order.len() {
                let c = cols[order[k]];
                let mut v = 0.0;
                while k < order.len() && cols[order[k]] == c {
                    v += vals[order[k]];
                    k += 1;
                }
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw compressed arrays, validating the invariants.
    pub fn from_raw(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return bad("row pointer array is inconsistent");
        }
        if col_idx.len() != values.len() {
            return bad("column and value arrays differ in length");
        }
        for i in 0..n_rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return bad("row pointers must be non-decreasing");
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n_cols) {
                return bad("column indices must be in range and strictly increasing");
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(columns, values)` of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Iterator over stored `(row, col, value)` entries in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                op: "spmv",
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a preallocated buffer. Panics on a size mismatch.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "spmv: x has wrong length");
        assert_eq!(y.len(), self.n_rows, "spmv: y has wrong length");
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                col_idx[next[c]] = i;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    /// Copy of rows `range` as a standalone matrix.
    pub fn row_block(&self, range: Range<usize>) -> CsrMatrix {
        let (s, e) = (self.row_ptr[range.start], self.row_ptr[range.end]);
        CsrMatrix {
            n_rows: range.len(),
            n_cols: self.n_cols,
            row_ptr: self.row_ptr[range.start..=range.end].iter().map(|p| p - s).collect(),
            col_idx: self.col_idx[s..e].to_vec(),
            values: self.values[s..e].to_vec(),
        }
    }

    /// `[A, B]` for matrices with the same number of rows.
    pub fn hstack(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::DimensionMismatch {
                op: "hstack",
                expected: self.n_rows,
                found: other.n_rows,
            });
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            let (c, v) = other.row(i);
            col_idx.extend(c.iter().map(|&j| j + self.n_cols));
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols + other.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `[A; B]` for matrices with the same number of columns.
    pub fn vstack(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                op: "vstack",
                expected: self.n_cols,
                found: other.n_cols,
            });
        }
        let base = self.nnz();
        let mut row_ptr = self.row_ptr.clone();
        row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + base));
        let mut col_idx = self.col_idx.clone();
        col_idx.extend_from_slice(&other.col_idx);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(CsrMatrix {
            n_rows: self.n_rows + other.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `diag(d) · A`.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.n_rows);
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= d[i];
            }
        }
        out
    }

    /// `A · diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.n_cols);
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&self.col_idx) {
            *v *= d[c];
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha A + beta B` on the union of both patterns.
    pub fn add(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                op: "add",
                expected: self.n_rows * self.n_cols,
                found: other.n_rows * other.n_cols,
            });
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q >= cb.len() || (p < ca.len() && ca[p] <= cb[q]);
                let take_b = p >= ca.len() || (q < cb.len() && cb[q] <= ca[p]);
                let (c, v) = match (take_a, take_b) {
                    (true, true) => {
                        let r = (ca[p], alpha * va[p] + beta * vb[q]);
                        p += 1;
                        q += 1;
                        r
                    }
                    (true, false) => {
                        let r = (ca[p], alpha * va[p]);
                        p += 1;
                        r
                    }
                    _ => {
                        let r = (cb[q], beta * vb[q]);
                        q += 1;
                        r
                    }
                };
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        match self.add(1.0, &t, -1.0) {
            Ok(d) => d.max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Symmetry to `tol` relative to the largest entry.
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        let asym = self.max_asymmetry();
        if asym <= tol * self.max_abs() {
            Ok(())
        } else {
            Err(Error::NotSymmetric { max_asymmetry: asym })
        }
    }

    /// Decouples unknown `index`: its row and column are cleared except for
    /// the diagonal, which keeps its value (or becomes 1 if it was zero).
    pub fn pin(&self, index: usize) -> CsrMatrix {
        let keep = match self.get(index, index) {
            d if d != 0.0 => d,
            _ => 1.0,
        };
        let mut t = Triplets::with_capacity(self.n_rows, self.n_cols, self.nnz());
        for (i, j, v) in self.triplets() {
            if i != index && j != index {
                t.push(i, j, v);
            }
        }
        t.push(index, index, keep);
        t.to_csr()
    }

    /// Dense row-major copy; intended for small matrices in tests and
    /// coarse-grid solves.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> CsrMatrix {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut t = Triplets::new(n_rows, n_cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.to_csr()
    }
}

/// Scratch space for row-by-row sparse products.
struct Accumulator {
    values: Vec<f64>,
    marker: Vec<usize>,
    stamp: usize,
    pattern: Vec<usize>,
}

impl Accumulator {
    fn new(n_cols: usize) -> Self {
        Accumulator {
            values: vec![0.0; n_cols],
            marker: vec![usize::MAX; n_cols],
            stamp: 0,
            pattern: Vec::new(),
        }
    }

    /// Appends row `row` of `a · b` to the output arrays.
    fn product_row(
        &mut self,
        a: &CsrMatrix,
        row: usize,
        b: &CsrMatrix,
        col_idx: &mut Vec<usize>,
        values: &mut Vec<f64>,
    ) {
        self.pattern.clear();
        self.stamp += 1;
        let stamp = self.stamp;
        let (ac, av) = a.row(row);
        for (&k, &aik) in ac.iter().zip(av) {
            let (bc, bv) = b.row(k);
            for (&j, &bkj) in bc.iter().zip(bv) {
                if self.marker[j] != stamp {
                    self.marker[j] = stamp;
                    self.values[j] = aik * bkj;
                    self.pattern.push(j);
                } else {
                    self.values[j] += aik * bkj;
                }
            }
        }
        self.pattern.sort_unstable();
        for &j in &self.pattern {
            col_idx.push(j);
            values.push(self.values[j]);
        }
    }
}

/// Sparse product `A · B`. Entries that cancel numerically stay stored.
pub fn spmm(a: &CsrMatrix, b: &CsrMatrix) -> Result<CsrMatrix> {
    if a.n_cols != b.n_rows {
        return Err(Error::DimensionMismatch {
            op: "spmm",
            expected: a.n_cols,
            found: b.n_rows,
        });
    }
    let mut acc = Accumulator::new(b.n_cols);
    let mut row_ptr = Vec::with_capacity(a.n_rows + 1);
    let mut col_idx = Vec::with_capacity(a.nnz() + b.nnz());
    let mut values = Vec::with_capacity(a.nnz() + b.nnz());
    row_ptr.push(0);
    for i in 0..a.n_rows {
        acc.product_row(a, i, b, &mut col_idx, &mut values);
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix {
        n_rows: a.n_rows,
        n_cols: b.n_cols,
        row_ptr,
        col_idx,
        values,
    })
}

/// Bookkeeping from [`sliced_triple_product`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TripleProductStats {
    pub slices: usize,
    /// Largest `nnz(A[slice, :] · B)` held at any one time.
    pub peak_intermediate_nnz: usize,
}

/// `D = A · B · C` computed over row slices of `A`: each
/// `temp = A[slice, :] · B` is multiplied by `C` and dropped before the next
/// slice, so the full `A · B` never exists.
pub fn sliced_triple_product(
    a: &CsrMatrix,
    b: &CsrMatrix,
    c: &CsrMatrix,
    max_slice_rows: usize,
) -> Result<(CsrMatrix, TripleProductStats)> {
    if a.n_cols != b.n_rows {
        return Err(Error::DimensionMismatch {
            op: "triple product (A·B)",
            expected: a.n_cols,
            found: b.n_rows,
        });
    }
    if b.n_cols != c.n_rows {
        return Err(Error::DimensionMismatch {
            op: "triple product (B·C)",
            expected: b.n_cols,
            found: c.n_rows,
        });
    }
    if max_slice_rows == 0 {
        return Err(Error::InvalidParameter("slice height must be at least 1".into()));
    }
    let mut stats = TripleProductStats::default();
    let mut acc_b = Accumulator::new(b.n_cols);
    let mut acc_c = Accumulator::new(c.n_cols);
    let mut row_ptr = Vec::with_capacity(a.n_rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut temp = CsrMatrix::zeros(0, b.n_cols);
    let mut start = 0;
    while start < a.n_rows {
        let end = (start + max_slice_rows).min(a.n_rows);
        // temp_slice = A[slice, :] · B
        temp.n_rows = end - start;
        temp.row_ptr.clear();
        temp.col_idx.clear();
        temp.values.clear();
        temp.row_ptr.push(0);
        for i in start..end {
            acc_b.product_row(a, i, b, &mut temp.col_idx, &mut temp.values);
            temp.row_ptr.push(temp.col_idx.len());
        }
        stats.peak_intermediate_nnz = stats.peak_intermediate_nnz.max(temp.nnz());
        stats.slices += 1;
        // D[slice, :] = temp_slice · C
        for r in 0..temp.n_rows {
            acc_c.product_row(&temp, r, c, &mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
        start = end;
    }
    Ok((
        CsrMatrix {
            n_rows: a.n_rows,
            n_cols: c.n_cols,
            row_ptr,
            col_idx,
            values,
        },
        stats,
    ))
}
