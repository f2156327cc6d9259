//! Coordinate and compressed-row sparse storage.
//!
//! Derivative callbacks emit [`Triplets`] (general matrices such as constraint
//! Jacobians) or [`SymTriplets`] (symmetric Hessians, one entry per
//! off-diagonal pair). Both compress into [`CsrMatrix`], which sums
//! duplicate entries.

use nalgebra::{DMatrix, DVector};

/// Unordered coordinate-format matrix. Duplicate entries are summed on
/// compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols, "entry out of bounds");
        self.entries.push((row, col, value));
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Self::new(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_entries(self.nrows, self.ncols, self.entries.iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// Symmetric matrix in coordinate format. Each off-diagonal pair is pushed
/// once, in either orientation; it is stored in the lower triangle.
#[derive(Debug, Clone, Default)]
pub struct SymTriplets {
    dim: usize,
    lower: Vec<(usize, usize, f64)>,
}

impl SymTriplets {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            lower: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim, "entry out of bounds");
        if row >= col {
            self.lower.push((row, col, value));
        } else {
            self.lower.push((col, row, value));
        }
    }

    /// Lower-triangle entries, unsorted and possibly duplicated.
    pub fn lower_entries(&self) -> &[(usize, usize, f64)] {
        &self.lower
    }

    /// Adds every entry of `other`, scaled, into `self`.
    pub fn extend_scaled(&mut self, other: &SymTriplets, scale: f64) {
        debug_assert_eq!(self.dim, other.dim);
        self.lower
            .extend(other.lower.iter().map(|&(i, j, v)| (i, j, scale * v)));
    }

    /// Takes the lower triangle of a dense symmetric matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Self::new(m.nrows());
        for j in 0..m.ncols() {
            for i in j..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t
    }

    /// Both triangles, compressed.
    pub fn to_csr(&self) -> CsrMatrix {
        let mirrored = self.lower.iter().flat_map(|&(i, j, v)| {
            let second = if i != j { Some((j, i, v)) } else { None };
            std::iter::once((i, j, v)).chain(second)
        });
        CsrMatrix::from_entries(self.dim, self.dim, mirrored)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.lower {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_entries(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    pub fn from_entries<I>(nrows: usize, ncols: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut sorted: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(i < nrows && j < ncols, "entry ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[i + 1] += 1;
                indices.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        Triplets::from_dense(m).to_csr()
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

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum::<f64>()),
        )
    }

    /// `selfᵀ x`
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for (i, j, v) in self.iter() {
            out[j] += v * x[i];
        }
        out
    }

    /// Dense product `self · B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for (i, j, v) in self.iter() {
            for c in 0..b.ncols() {
                out[(i, c)] += v * b[(j, c)];
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_entries(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Sub-matrix made of the given column range, re-indexed from zero.
    pub fn column_slice(&self, cols: std::ops::Range<usize>) -> CsrMatrix {
        let start = cols.start;
        CsrMatrix::from_entries(
            self.nrows,
            cols.len(),
            self.iter()
                .filter(|&(_, j, _)| cols.contains(&j))
                .map(|(i, j, v)| (i, j - start, v)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (_, j, v) in self.iter() {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_entries(2, 2, vec![(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn symmetric_triplets_mirror() {
        let mut s = SymTriplets::new(3);
        s.push(0, 2, 4.0);
        s.push(1, 1, -2.0);
        let d = s.to_dense();
        assert_eq!(d[(0, 2)], 4.0);
        assert_eq!(d[(2, 0)], 4.0);
        assert_eq!(s.to_csr().to_dense(), d);
        assert_eq!(s.to_csr().asymmetry(), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -3.0, 1.0]);
        let m = CsrMatrix::from_dense(&d);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.mul_vec(&x), &d * &x);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(m.tr_mul_vec(&y), d.transpose() * &y);
        assert_eq!(m.transpose().to_dense(), d.transpose());
        assert_eq!(m.column_slice(1..3).to_dense(), d.columns(1, 2).into_owned());
    }
}
