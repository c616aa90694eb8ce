//! Karhunen-Loève discretization of random fields and sampling of the
//! input random variables.
//!
//! The covariance eigenproblem is collocated at mesh nodes with lumped
//! integration weights `W`, then symmetrized as `√W C √W y = λ y` with
//! `ω = y / √W`, so that `ωᵢᵀ diag(W) ωⱼ = δᵢⱼ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::linalg::{subspace_largest, symmetric_eigen, DenseMatrix, EigenPairs};
use crate::math::{abs, exp, sqrt};

/// Above this many nodes the KL eigenproblem switches from the dense
/// solver to subspace iteration.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

const CLAMP_RATIO: f64 = 1e-12;
const SUBSPACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelKind {
    /// `σ² exp(−Σ_d |Δx_d| / l_d)`.
    SeparableExponential,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceKernel {
    pub kind: KernelKind,
    pub sigma2: f64,
    /// One correlation length per spatial axis.
    pub corr_len: Vec<f64>,
}

impl CovarianceKernel {
    pub fn separable_exponential(sigma2: f64, corr_len: Vec<f64>) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!("kernel variance {sigma2} must be positive")));
        }
        if corr_len.is_empty() || corr_len.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput(
                "correlation lengths must be positive".into(),
            ));
        }
        Ok(Self {
            kind: KernelKind::SeparableExponential,
            sigma2,
            corr_len,
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::SeparableExponential => {
                let s: f64 = a
                    .iter()
                    .zip(b)
                    .zip(&self.corr_len)
                    .map(|((x, y), l)| abs(x - y) / l)
                    .sum();
                self.sigma2 * exp(-s)
            }
        }
    }
}

/// Nodal covariance matrix and lumped nodal weights of `mesh`.
pub fn assemble_covariance_problem(
    mesh: &Mesh,
    kernel: &CovarianceKernel,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = mesh.nodes().len();
    if n < 2 {
        return Err(Error::InvalidInput("random field mesh needs at least 2 nodes".into()));
    }
    if kernel.corr_len.len() != mesh.dim() {
        return Err(Error::ShapeMismatch {
            what: "correlation lengths",
            expected: mesh.dim(),
            got: kernel.corr_len.len(),
        });
    }
    for e in mesh.elements() {
        if !(mesh.measure(e) > 0.0) {
            return Err(Error::DegenerateElement(e.id));
        }
    }
    let dim = mesh.dim();
    let nodes = mesh.nodes();
    let mut c = DenseMatrix::zeros(n, n);
    for a in 0..n {
        let row = c.row_mut(a);
        for (b, v) in row.iter_mut().enumerate() {
            *v = kernel.eval(&nodes[a].coords[..dim], &nodes[b].coords[..dim]);
        }
    }
    Ok((c, mesh.lumped_weights()))
}

/// Truncated KL representation `ω₀ + Σᵢ ξᵢ √λᵢ ωᵢ` at mesh nodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KLExpansion {
    pub mean_values: Vec<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` holds ωᵢ at every node.
    pub eigenvectors: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `Σ_a W[a] C[a][a]`, the trace of the weighted operator.
    pub total_variance: f64,
}

impl KLExpansion {
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.n_nodes() {
            return Err(Error::ShapeMismatch {
                what: "field mean",
                expected: self.n_nodes(),
                got: mean.len(),
            });
        }
        self.mean_values = mean;
        Ok(self)
    }

    pub fn with_constant_mean(mut self, mean: f64) -> Self {
        self.mean_values = vec![mean; self.n_nodes()];
        self
    }

    /// Keeps only the leading `m` terms.
    pub fn truncated(mut self, m: usize) -> Self {
        self.eigenvalues.truncate(m);
        self.eigenvectors.truncate(m);
        self
    }

    /// Nodal values of `√λᵢ ωᵢ`.
    pub fn scaled_mode(&self, i: usize) -> Vec<f64> {
        let s = sqrt(self.eigenvalues[i]);
        self.eigenvectors[i].iter().map(|w| s * w).collect()
    }
}

/// Which eigen-solver to use for the KL problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense up to [`DENSE_EIGEN_LIMIT`] nodes, subspace iteration above.
    Auto,
    Dense,
    Subspace,
}

/// Leading `m` KL eigenpairs of the weighted covariance operator (zero mean).
pub fn solve_kl_eigenproblem(c: &DenseMatrix, w: &[f64], m: usize) -> Result<KLExpansion> {
    solve_kl_eigenproblem_with(c, w, m, EigenMethod::Auto)
}

pub fn solve_kl_eigenproblem_with(
    c: &DenseMatrix,
    w: &[f64],
    m: usize,
    method: EigenMethod,
) -> Result<KLExpansion> {
    let n = w.len();
    if c.rows() != n || c.cols() != n {
        return Err(Error::ShapeMismatch {
            what: "covariance matrix",
            expected: n,
            got: c.rows(),
        });
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "{m} KL terms requested on {n} nodes"
        )));
    }
    if let Some(a) = w.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "node {a} has no integration weight (not attached to any element)"
        )));
    }
    let sw: Vec<f64> = w.iter().map(|v| sqrt(*v)).collect();
    let total_variance = (0..n).map(|a| w[a] * c[(a, a)]).sum();
    let a = DenseMatrix::from_fn(n, n, |i, j| sw[i] * c[(i, j)] * sw[j]);
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_EIGEN_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Subspace => false,
    };
    let EigenPairs { values, vectors } = if m == 0 {
        EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        }
    } else if dense {
        let mut ep = symmetric_eigen(&a)?;
        ep.values.truncate(m);
        ep.vectors.truncate(m);
        ep
    } else {
        subspace_largest(n, m, SUBSPACE_TOL, |x| a.matmul(x))?
    };
    let lead = values.first().copied().unwrap_or(0.0).max(0.0);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Vec::with_capacity(m);
    for (lam, y) in values.into_iter().zip(vectors) {
        let lam = if lam < 0.0 {
            if lam < -CLAMP_RATIO * lead {
                return Err(Error::NegativeEigenvalue(lam));
            }
            0.0
        } else {
            lam
        };
        let mut omega: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v / s).collect();
        if let Some(first) = omega.iter().find(|v| abs(**v) > 1e-10) {
            if *first < 0.0 {
                omega.iter_mut().for_each(|v| *v = -*v);
            }
        }
        eigenvalues.push(lam);
        eigenvectors.push(omega);
    }
    Ok(KLExpansion {
        mean_values: vec![0.0; n],
        eigenvalues,
        eigenvectors,
        weights: w.to_vec(),
        total_variance,
    })
}

/// Field realization `ω₀ + Σᵢ ξᵢ √λᵢ ωᵢ` at every node.
pub fn evaluate_field(kl: &KLExpansion, xi_row: &[f64]) -> Result<Vec<f64>> {
    if xi_row.len() != kl.m() {
        return Err(Error::ShapeMismatch {
            what: "KL coefficients",
            expected: kl.m(),
            got: xi_row.len(),
        });
    }
    let mut out = kl.mean_values.clone();
    for ((xi, lam), omega) in xi_row.iter().zip(&kl.eigenvalues).zip(&kl.eigenvectors) {
        let s = xi * sqrt(*lam);
        for (o, w) in out.iter_mut().zip(omega) {
            *o += s * w;
        }
    }
    Ok(out)
}

/// Fraction of the total field variance captured by the first `m` terms
/// (saturates at the number of stored terms).
pub fn truncation_energy(kl: &KLExpansion, m: usize) -> f64 {
    if kl.total_variance <= 0.0 {
        return 0.0;
    }
    let kept: f64 = kl.eigenvalues.iter().take(m).sum();
    (kept / kl.total_variance).clamp(0.0, 1.0)
}

/// Distribution of one input random variable, realized as a transform of a
/// single standard-normal draw.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Marginal {
    StandardNormal,
    Normal { mean: f64, std: f64 },
    /// `log X ~ N(mu, sigma²)`; `sigma` is the log-standard-deviation.
    LogNormal { mu: f64, sigma: f64 },
}

impl Marginal {
    /// Builds a marginal from its name and parameters:
    /// `standard-normal`, `normal(mean, std)`, `lognormal(mu, sigma)`.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let want = |k: usize| {
            if params.len() == k && params.iter().all(|p| p.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "marginal {name} takes {k} finite parameters, got {}",
                    params.len()
                )))
            }
        };
        let m = match name {
            "standard-normal" => {
                want(0)?;
                Marginal::StandardNormal
            }
            "normal" => {
                want(2)?;
                Marginal::Normal {
                    mean: params[0],
                    std: params[1],
                }
            }
            "lognormal" => {
                want(2)?;
                Marginal::LogNormal {
                    mu: params[0],
                    sigma: params[1],
                }
            }
            other => return Err(Error::UnknownMarginal(String::from(other))),
        };
        match m {
            Marginal::Normal { std: s, .. } | Marginal::LogNormal { sigma: s, .. } if s < 0.0 => Err(
                Error::InvalidInput(format!("marginal {name}: negative spread {s}")),
            ),
            _ => Ok(m),
        }
    }

    pub fn transform(&self, z: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => z,
            Marginal::Normal { mean, std } => mean + std * z,
            Marginal::LogNormal { mu, sigma } => exp(mu + sigma * z),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::StandardNormal => 0.0,
            Marginal::Normal { mean, .. } => mean,
            Marginal::LogNormal { mu, sigma } => exp(mu + 0.5 * sigma * sigma),
        }
    }
}

/// Column-major `rows × cols` sample matrix; row `r` is one realization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from realization rows.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "sample row",
                    expected: cols,
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                m.data[j * m.rows + r] = *v;
            }
        }
        Ok(m)
    }

    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::ShapeMismatch {
                    what: "sample column",
                    expected: rows,
                    got: c.len(),
                });
            }
            data.extend(c);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, r: usize, j: usize) -> f64 {
        self.data[j * self.rows + r]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(r, j)).collect()
    }

    /// Copy with a leading all-ones column.
    pub fn with_ones_column(&self) -> Self {
        let mut data = vec![1.0; self.rows];
        data.extend_from_slice(&self.data);
        Self {
            rows: self.rows,
            cols: self.cols + 1,
            data,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }
}

/// `R` realizations of the stiffness variables (`xi`) and load variables
/// (`eta`), reproducible from `seed`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleSet {
    pub xi: SampleMatrix,
    pub eta: Option<SampleMatrix>,
    pub seed: u64,
    /// Rows rejected by the admissibility screen and redrawn.
    pub rejected: usize,
}

impl SampleSet {
    pub fn r(&self) -> usize {
        self.xi.rows()
    }
}

/// Draws `r` rows of `m + q` variables: the first `m` go to `xi`, the
/// remaining `q` to `eta`. Row-major from a ChaCha8 stream seeded by `seed`.
pub fn draw_samples(m: usize, q: usize, r: usize, seed: u64, marginals: &[Marginal]) -> Result<SampleSet> {
    draw_samples_screened(m, q, r, seed, marginals, |_| true)
}

/// Like [`draw_samples`], but a row failing `admissible` is discarded and
/// redrawn from the same stream. More than 1% rejections is an error.
pub fn draw_samples_screened<F>(
    m: usize,
    q: usize,
    r: usize,
    seed: u64,
    marginals: &[Marginal],
    mut admissible: F,
) -> Result<SampleSet>
where
    F: FnMut(&[f64]) -> bool,
{
    if r == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if marginals.len() != m + q {
        return Err(Error::ShapeMismatch {
            what: "marginals",
            expected: m + q,
            got: marginals.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = SampleMatrix::zeros(r, m);
    let mut eta = SampleMatrix::zeros(r, q);
    let mut row = vec![0.0; m + q];
    let max_rejected = r / 100;
    let mut rejected = 0;
    let mut filled = 0;
    while filled < r {
        for (v, marg) in row.iter_mut().zip(marginals) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = marg.transform(z);
        }
        if !admissible(&row) {
            rejected += 1;
            if rejected > max_rejected {
                return Err(Error::TooManyRedraws {
                    rejected,
                    samples: r,
                });
            }
            continue;
        }
        for j in 0..m {
            xi.column_mut(j)[filled] = row[j];
        }
        for j in 0..q {
            eta.column_mut(j)[filled] = row[m + j];
        }
        filled += 1;
    }
    Ok(SampleSet {
        xi,
        eta: (q > 0).then_some(eta),
        seed,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{ElementKind, PropertyGroup};
    use crate::math::dot;

    pub(crate) fn line_mesh(n: usize, length: f64) -> Mesh {
        let mut m = Mesh::new(1).unwrap();
        m.add_group(PropertyGroup {
            a: 1.0,
            ..PropertyGroup::new(1, 1.0)
        })
        .unwrap();
        for i in 0..n {
            m.add_node(i + 1, &[length * i as f64 / (n - 1) as f64]).unwrap();
        }
        for i in 1..n {
            m.add_element(i, ElementKind::Bar, &[i, i + 1], 1).unwrap();
        }
        m
    }

    fn kernel(s2: f64, l: f64) -> CovarianceKernel {
        CovarianceKernel::separable_exponential(s2, vec![l]).unwrap()
    }

    #[test]
    fn covariance_entries() {
        let (c, w) = assemble_covariance_problem(&line_mesh(3, 2.0), &kernel(1.0, 1.0)).unwrap();
        assert_eq!(c[(0, 2)], libm::exp(-2.0));
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(w, vec![0.5, 1.0, 0.5]);

        let mut m = Mesh::new(2).unwrap();
        m.add_node(1, &[0.0, 0.0]).unwrap();
        m.add_node(2, &[0.0, 0.0]).unwrap();
        let k = CovarianceKernel::separable_exponential(0.15, vec![24.0, 24.0]).unwrap();
        let (c, _) = assemble_covariance_problem(&m, &k).unwrap();
        assert!(c.as_slice().iter().all(|v| *v == 0.15));
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(CovarianceKernel::separable_exponential(0.0, vec![1.0]).is_err());
        assert!(CovarianceKernel::separable_exponential(1.0, vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn trace_identity_and_orthonormality() {
        let mesh = line_mesh(40, 1.0);
        let (c, w) = assemble_covariance_problem(&mesh, &kernel(2.0, 0.3)).unwrap();
        let kl = solve_kl_eigenproblem(&c, &w, 40).unwrap();
        let trace: f64 = w.iter().map(|v| v * 2.0).sum();
        let sum: f64 = kl.eigenvalues.iter().sum();
        assert!((sum - trace).abs() < 1e-8);
        assert!((truncation_energy(&kl, 40) - 1.0).abs() < 1e-8);
        assert_eq!(truncation_energy(&kl, 0), 0.0);
        for i in 0..40 {
            for j in 0..40 {
                let wij: f64 = (0..40).map(|a| kl.eigenvectors[i][a] * w[a] * kl.eigenvectors[j][a]).sum();
                let delta = if i == j { 1.0 } else { 0.0 };
                assert!((wij - delta).abs() < 1e-8, "{i} {j} {wij}");
            }
        }
        for v in kl.eigenvalues.windows(2) {
            assert!(v[0] >= v[1] && v[1] >= 0.0);
        }
        for omega in &kl.eigenvectors {
            assert!(*omega.iter().find(|v| v.abs() > 1e-10).unwrap() > 0.0);
        }
    }

    #[test]
    fn subspace_path_agrees_with_dense() {
        let mesh = line_mesh(300, 1.0);
        let (c, w) = assemble_covariance_problem(&mesh, &kernel(1.0, 0.5)).unwrap();
        let d = solve_kl_eigenproblem_with(&c, &w, 6, EigenMethod::Dense).unwrap();
        let s = solve_kl_eigenproblem_with(&c, &w, 6, EigenMethod::Subspace).unwrap();
        for i in 0..6 {
            assert!((d.eigenvalues[i] - s.eigenvalues[i]).abs() < 1e-8 * d.eigenvalues[0]);
            let cos = dot(&d.eigenvectors[i], &s.eigenvectors[i]) / dot(&d.eigenvectors[i], &d.eigenvectors[i]);
            assert!((cos - 1.0).abs() < 1e-6, "mode {i}: {cos}");
        }
    }

    #[test]
    fn field_evaluation() {
        let mesh = line_mesh(10, 1.0);
        let (c, w) = assemble_covariance_problem(&mesh, &kernel(1.0, 1.0)).unwrap();
        let kl = solve_kl_eigenproblem(&c, &w, 3).unwrap().with_constant_mean(5.0);
        assert_eq!(evaluate_field(&kl, &[0.0; 3]).unwrap(), vec![5.0; 10]);
        let one = evaluate_field(&kl, &[1.0, 0.0, 0.0]).unwrap();
        for a in 0..10 {
            let want = 5.0 + kl.eigenvalues[0].sqrt() * kl.eigenvectors[0][a];
            assert_eq!(one[a], want);
        }
        assert!(evaluate_field(&kl, &[1.0]).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_standardized() {
        let marg = [Marginal::StandardNormal; 3];
        let a = draw_samples(2, 1, 10_000, 7, &marg).unwrap();
        let b = draw_samples(2, 1, 10_000, 7, &marg).unwrap();
        assert_eq!(a, b);
        for j in 0..2 {
            let mean: f64 = a.xi.column(j).iter().sum::<f64>() / 1e4;
            assert!(mean.abs() < 4.0 / 100.0);
        }
        assert_eq!(a.eta.as_ref().unwrap().cols(), 1);
        let ln = Marginal::from_name("lognormal", &[0.0, 0.3]).unwrap();
        let s = draw_samples(1, 0, 5000, 1, &[ln]).unwrap();
        assert!(s.xi.column(0).iter().all(|v| *v > 0.0));
        assert!(s.eta.is_none());
        assert_eq!(
            Marginal::from_name("weibull", &[]),
            Err(Error::UnknownMarginal("weibull".into()))
        );
    }

    #[test]
    fn screening_redraws_from_the_stream() {
        let marg = [Marginal::StandardNormal];
        let s = draw_samples_screened(1, 0, 10_000, 3, &marg, |row| row[0] < 2.8).unwrap();
        assert!(s.rejected > 0);
        assert!(s.xi.column(0).iter().all(|v| *v < 2.8));
        assert!(matches!(
            draw_samples_screened(1, 0, 1000, 3, &marg, |row| row[0] < 0.0),
            Err(Error::TooManyRedraws { .. })
        ));
    }
}
