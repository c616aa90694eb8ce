//! Envelope (profile) `L D Lᵀ` factorization with reverse Cuthill-McKee
//! ordering.
//!
//! The symbolic part (ordering, envelope layout, scatter map) depends only
//! on the sparsity pattern and is shared by every matrix of a problem; the
//! numeric factorization is redone per matrix.

use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::sparse::{SparseMatrix, SparsityPattern};
use crate::error::{Error, Result};
use crate::math::{abs, dot, norm2};

/// Relative residual every accepted solve must reach.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// A pivot smaller than this fraction of its original diagonal is treated as
/// loss of positive definiteness.
const PIVOT_RATIO_MIN: f64 = 1e-14;

const MAX_REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct CholeskySymbolic {
    pattern: Arc<SparsityPattern>,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// First column of each (permuted) row's envelope.
    first: Vec<usize>,
    /// Storage offset of each row; row `i` spans `first[i]..=i`.
    offsets: Vec<usize>,
    /// (pattern position, envelope position) for entries on or below the
    /// permuted diagonal.
    scatter: Vec<(usize, usize)>,
}

impl CholeskySymbolic {
    pub fn analyze(pattern: Arc<SparsityPattern>) -> Self {
        let n = pattern.n();
        let perm = reverse_cuthill_mckee(&pattern);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in pattern.row_cols(old) {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            let last = offsets[i];
            offsets.push(last + (i - first[i] + 1));
        }
        let mut scatter = Vec::new();
        for old in 0..n {
            let i = inv[old];
            for (k, &c) in pattern.row_range(old).zip(pattern.row_cols(old)) {
                let j = inv[c];
                if j <= i {
                    scatter.push((k, offsets[i] + (j - first[i])));
                }
            }
        }
        Self {
            pattern,
            perm,
            first,
            offsets,
            scatter,
        }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored lower-envelope entries.
    pub fn envelope_size(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn factorize(self: &Arc<Self>, a: &SparseMatrix) -> Result<CholeskyFactor> {
        if !a.same_pattern_as(&self.pattern) {
            return Err(Error::InvalidInput(
                "matrix pattern differs from the analyzed pattern".into(),
            ));
        }
        let n = self.n();
        let mut l = vec![0.0; self.envelope_size()];
        let values = a.values();
        for &(src, dst) in &self.scatter {
            l[dst] = values[src];
        }
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            let diag_orig = l[oi + (i - fi)];
            // First pass leaves u_ij = L_ij D_j in row i.
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let start = fi.max(fj);
                l[oi + (j - fi)] -= dot(
                    &l[oi + (start - fi)..oi + (j - fi)],
                    &l[oj + (start - fj)..oj + (j - fj)],
                );
            }
            let mut s = diag_orig;
            for j in fi..i {
                let dj = l[self.offsets[j] + (j - self.first[j])];
                let u = l[oi + (j - fi)];
                let lij = u / dj;
                s -= u * lij;
                l[oi + (j - fi)] = lij;
            }
            if !(s.is_finite() && diag_orig > 0.0 && s > PIVOT_RATIO_MIN * abs(diag_orig)) {
                return Err(Error::NotPositiveDefinite {
                    row: self.perm[i],
                    pivot: s,
                });
            }
            l[oi + (i - fi)] = s;
        }
        Ok(CholeskyFactor {
            symbolic: self.clone(),
            l,
        })
    }
}

impl SparseMatrix {
    fn same_pattern_as(&self, p: &Arc<SparsityPattern>) -> bool {
        Arc::ptr_eq(self.pattern(), p) || **self.pattern() == **p
    }
}

/// Numeric envelope factor `P A Pᵀ = L D Lᵀ` (unit `L`, `D` on the
/// stored diagonal).
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<CholeskySymbolic>,
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factorizes `a` with a fresh symbolic analysis.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Arc::new(CholeskySymbolic::analyze(a.pattern().clone())).factorize(a)
    }

    pub fn n(&self) -> usize {
        self.symbolic.n()
    }

    /// Solves `A x = b` with the stored factor (no refinement).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &*self.symbolic;
        let n = s.n();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = s.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = s.first[i];
            let oi = s.offsets[i];
            y[i] -= dot(&self.l[oi..oi + (i - fi)], &y[fi..i]);
        }
        for i in 0..n {
            y[i] /= self.l[s.offsets[i] + (i - s.first[i])];
        }
        for i in (0..n).rev() {
            let fi = s.first[i];
            let oi = s.offsets[i];
            let xi = y[i];
            for (yc, lc) in y[fi..i].iter_mut().zip(&self.l[oi..oi + (i - fi)]) {
                *yc -= lc * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solves `a x = b` and refines until the relative residual reaches
    /// [`SOLVE_RESIDUAL_TOL`]; `a` must be the factorized matrix.
    pub fn solve_refined(&self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let bnorm = norm2(b);
        let mut x = self.solve(b);
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut steps = 0;
        loop {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rel = norm2(&r) / bnorm;
            if rel <= SOLVE_RESIDUAL_TOL {
                return Ok(x);
            }
            if steps == MAX_REFINEMENT_STEPS || !rel.is_finite() {
                return Err(Error::ResidualTooLarge(rel));
            }
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            steps += 1;
        }
    }
}

/// Solves the symmetric positive definite system `k u = f`.
pub fn solve_spd(k: &SparseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != k.n() {
        return Err(Error::ShapeMismatch {
            what: "right-hand side",
            expected: k.n(),
            got: f.len(),
        });
    }
    CholeskyFactor::new(k)?.solve_refined(k, f)
}

fn reverse_cuthill_mckee(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.n();
    let degree: Vec<usize> = (0..n)
        .map(|i| pattern.row_cols(i).iter().filter(|&&j| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node");
        let root = pseudo_peripheral(pattern, &degree, seed);
        let mut queue = VecDeque::new();
        queue.push_back(root);
        visited[root] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(
                pattern
                    .row_cols(v)
                    .iter()
                    .copied()
                    .filter(|&w| !visited[w]),
            );
            nbrs.sort_unstable_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// George-Liu search for a node of (near) maximal eccentricity.
fn pseudo_peripheral(pattern: &SparsityPattern, degree: &[usize], start: usize) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let (levels, last_level) = bfs_levels(pattern, root);
        if levels <= ecc {
            break;
        }
        ecc = levels;
        root = last_level
            .into_iter()
            .min_by_key(|&w| (degree[w], w))
            .unwrap_or(root);
    }
    root
}

fn bfs_levels(pattern: &SparsityPattern, root: usize) -> (usize, Vec<usize>) {
    let n = pattern.n();
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    let mut frontier = vec![root];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in pattern.row_cols(v) {
                if level[w] == usize::MAX {
                    level[w] = depth + 1;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return (depth, frontier);
        }
        depth += 1;
        frontier = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let k = SparseMatrix::identity(4);
        let f = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(solve_spd(&k, &f).unwrap(), f.to_vec());
    }

    #[test]
    fn one_dof_spring() {
        let k = SparseMatrix::from_triplets(1, &[(0, 0, 2.0)]);
        assert_eq!(solve_spd(&k, &[6.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn laplacian_residual_is_tiny() {
        let k = laplacian_1d(50);
        let f: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let u = solve_spd(&k, &f).unwrap();
        let r: Vec<f64> = k.matvec(&u).iter().zip(&f).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) / norm2(&f) <= SOLVE_RESIDUAL_TOL);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let k = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            solve_spd(&k, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation_and_keeps_band_small() {
        // Scrambled path graph: RCM should recover bandwidth 1.
        let n = 30;
        let map = |i: usize| (i * 7) % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((map(i), map(i), 2.0));
            if i + 1 < n {
                t.push((map(i), map(i + 1), -1.0));
                t.push((map(i + 1), map(i), -1.0));
            }
        }
        let k = SparseMatrix::from_triplets(n, &t);
        let sym = CholeskySymbolic::analyze(k.pattern().clone());
        let mut p = sym.perm.clone();
        p.sort_unstable();
        assert_eq!(p, (0..n).collect::<Vec<_>>());
        assert_eq!(sym.envelope_size(), 2 * n - 1);
    }
}
