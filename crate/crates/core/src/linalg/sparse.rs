use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;

/// Compressed-row sparsity pattern of a square matrix, columns sorted per row.
///
/// Symmetric matrices store both triangles so products and row access need
/// no special casing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from (row, col) pairs; duplicates are merged and the
    /// diagonal is always present.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in entries {
            assert!(i < n && j < n, "pattern entry out of range");
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> core::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage position of `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row_cols(i).binary_search(&j).ok().map(|p| start + p)
    }
}

/// Square sparse matrix over a shared [`SparsityPattern`].
///
/// All stiffness matrices of one stochastic problem share the same `Arc`'d
/// pattern, so linear combinations are plain sums over value arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::ShapeMismatch {
                what: "sparse values",
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    /// Builds a matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let pattern = Arc::new(SparsityPattern::from_entries(
            n,
            triplets.iter().map(|&(i, j, _)| (i, j)),
        ));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            let p = m.pattern.position(i, j).expect("entry in pattern");
            m.values[p] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    /// True when both matrices reference structurally identical patterns.
    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n());
        assert_eq!(y.len(), self.n());
        let p = &*self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_range(i) {
                s += self.values[k] * x[p.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `Σ coeffs[i] · mats[i]`; every matrix must share one pattern.
    pub fn linear_combination(coeffs: &[f64], mats: &[SparseMatrix]) -> Result<SparseMatrix> {
        if coeffs.len() != mats.len() || mats.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "linear combination terms",
                expected: mats.len(),
                got: coeffs.len(),
            });
        }
        let mut out = SparseMatrix::zeros(mats[0].pattern.clone());
        for (c, m) in coeffs.iter().zip(mats) {
            if !m.same_pattern(&out) {
                return Err(Error::InvalidInput("matrices do not share a pattern".into()));
            }
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Largest `|a_ij − a_ji|` relative to the largest entry magnitude.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(abs(*v)));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            for k in self.pattern.row_range(i) {
                let j = self.pattern.col_idx[k];
                worst = worst.max(abs(self.values[k] - self.get(j, i)));
            }
        }
        worst / scale
    }

    /// Dense copy, mostly for tests.
    pub fn to_dense(&self) -> super::DenseMatrix {
        let mut d = super::DenseMatrix::zeros(self.n(), self.n());
        for i in 0..self.n() {
            for k in self.pattern.row_range(i) {
                d[(i, self.pattern.col_idx[k])] = self.values[k];
            }
        }
        d
    }

    /// Nonzero values keyed by (row, col); handy for comparisons in tests.
    pub fn to_map(&self) -> BTreeMap<(usize, usize), f64> {
        let mut m = BTreeMap::new();
        for i in 0..self.n() {
            for k in self.pattern.row_range(i) {
                m.insert((i, self.pattern.col_idx[k]), self.values[k]);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates_and_keep_diagonal() {
        let m = SparseMatrix::from_triplets(3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(2, 2), 0.0);
        assert!(m.pattern().position(2, 2).is_some());
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 0.0]);
    }

    #[test]
    fn linear_combination_requires_shared_pattern() {
        let a = SparseMatrix::identity(2);
        let b = SparseMatrix::from_triplets(2, &[(0, 1, 1.0)]);
        assert!(SparseMatrix::linear_combination(&[1.0, 1.0], &[a.clone(), b]).is_err());
        let c = SparseMatrix::linear_combination(&[2.0, 3.0], &[a.clone(), a]).unwrap();
        assert_eq!(c.diagonal(), vec![5.0, 5.0]);
    }
}
