//! Couple-by-couple solution of the affine stochastic system.
//!
//! The response is built as `u(θ) ≈ Σₖ λₖ(θ) dₖ` with unit, mutually
//! orthogonal `dₖ` and sample-mean-orthogonal `λₖ`. Each new couple is
//! found by alternating
//!
//! 1. a deterministic Galerkin solve for `dₖ` given the samples of `λₖ`,
//! 2. an independent scalar equation for `λₖ` at every sample given `dₖ`,
//!
//! with Gram-Schmidt against the accepted couples after each half step.
//! Expectations are sample means over the same realizations.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, CholeskyFactor, DenseMatrix, SparseMatrix};
use crate::math::{abs, dot, norm2, sqrt};
use crate::reduce::{chunked_sums, map_indexed, mean_of};
use crate::system::StochasticSystem;

/// A Galerkin right-hand side below this fraction of the magnitude of its
/// terms means the accepted couples already solve the system.
pub const NULL_RHS_RATIO: f64 = 1e-10;

/// Relative size of a λ-equation denominator below which the sample is
/// flagged.
pub const DENOMINATOR_RATIO: f64 = 1e-12;

/// Largest admissible fraction of flagged samples in one λ update.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

const SIGN_THRESHOLD: f64 = 1e-10;
const EXHAUSTED_RATIO: f64 = 1e-12;
const KAPPA_FLOOR: f64 = 1e-300;
const PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    /// Outer tolerance on the newest couple's energy fraction.
    pub eps_global: f64,
    /// Inner tolerance on `‖dₖ⁽ʲ⁾ − dₖ⁽ʲ⁻¹⁾‖`.
    pub eps_local: f64,
    pub k_max: usize,
    pub j_max: usize,
    /// Seed of the λ initialization stream.
    pub seed: u64,
    pub update: CoupleUpdate,
}

/// What happens to the accepted couples when a new one is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CoupleUpdate {
    /// Earlier couples stay frozen; the global error is `κₖ / Σᵢ κᵢ`.
    Sequential,
    /// Every sample's coefficients are re-solved jointly in the span of all
    /// accepted `dⱼ`, then rotated back to a bi-orthogonal set ordered by
    /// energy. The global error is the weakest couple's energy fraction.
    #[default]
    Joint,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_global: 1e-6,
            eps_local: 1e-6,
            k_max: 20,
            j_max: 50,
            seed: 0,
            update: CoupleUpdate::Joint,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_local > 0.0
            && self.eps_global > 0.0
            && self.eps_global < 1.0
            && self.k_max >= 1
            && self.j_max >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(alloc::format!(
                "invalid solver settings: need 0 < eps_local, 0 < eps_global < 1, k_max >= 1, j_max >= 2 (got {self:?})"
            )))
        }
    }
}

/// One term `λₖ(θ) dₖ` of the expansion.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Couple {
    /// Unit deterministic vector.
    pub d: Vec<f64>,
    /// One value per sample.
    pub lambda: Vec<f64>,
    /// Sample mean of `λ²`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoupleHistory {
    pub iterations: usize,
    /// `‖dₖ⁽ʲ⁾ − dₖ⁽ʲ⁻¹⁾‖` for j ≥ 2.
    pub local_errors: Vec<f64>,
    pub global_error: f64,
    /// False when the inner loop stopped at `j_max`.
    pub inner_converged: bool,
    /// Samples flagged in the final λ update.
    pub flagged_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Termination {
    /// The newest couple's energy fraction fell to `eps_global`.
    Converged,
    /// The accepted couples solve the sampled system: no further direction.
    NullResidual,
    /// `k_max` couples without reaching `eps_global`.
    MaxCouples,
    /// A new direction was linearly dependent on the accepted ones.
    BasisExhausted,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::Converged | Termination::NullResidual)
    }

    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::NullResidual => "null-residual",
            Termination::MaxCouples => "max-couples",
            Termination::BasisExhausted => "basis-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolutionExpansion {
    pub couples: Vec<Couple>,
    pub history: Vec<CoupleHistory>,
    pub converged: bool,
    pub termination: Termination,
}

impl SolutionExpansion {
    pub fn k(&self) -> usize {
        self.couples.len()
    }

    pub fn n(&self) -> usize {
        self.couples.first().map_or(0, |c| c.d.len())
    }

    pub fn r(&self) -> usize {
        self.couples.first().map_or(0, |c| c.lambda.len())
    }

    /// Full response vector at sample `r` from the first `k` couples.
    pub fn response(&self, r: usize, k: usize) -> Vec<f64> {
        let mut u = vec![0.0; self.n()];
        for c in &self.couples[..k.min(self.k())] {
            let l = c.lambda[r];
            for (ui, di) in u.iter_mut().zip(&c.d) {
                *ui += l * di;
            }
        }
        u
    }

    /// Per-DOF sample mean and unbiased sample variance of the response,
    /// from the couples' sample means and covariances.
    pub fn moment_fields(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, k, r) = (self.n(), self.k(), self.r());
        if k == 0 {
            return (Vec::new(), Vec::new());
        }
        let means: Vec<f64> = self
            .couples
            .iter()
            .map(|c| mean_of(r, |s| c.lambda[s]))
            .collect();
        let cross = chunked_sums(r, k * k, |s, acc| {
            for a in 0..k {
                let la = self.couples[a].lambda[s] - means[a];
                for b in 0..k {
                    acc[a * k + b] += la * (self.couples[b].lambda[s] - means[b]);
                }
            }
        });
        let denom = if r > 1 { (r - 1) as f64 } else { 1.0 };
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for i in 0..n {
            for a in 0..k {
                let da = self.couples[a].d[i];
                mean[i] += means[a] * da;
                for b in 0..k {
                    var[i] += cross[a * k + b] / denom * da * self.couples[b].d[i];
                }
            }
            var[i] = var[i].max(0.0);
        }
        (mean, var)
    }
}

/// Sample mean of `ξᵢ λⱼ λₖ`.
pub fn estimate_cijk(xi_i: &[f64], lambda_j: &[f64], lambda_k: &[f64]) -> f64 {
    mean_of(xi_i.len(), |r| xi_i[r] * lambda_j[r] * lambda_k[r])
}

/// Sample mean of `ηₗ λₖ`.
pub fn estimate_bkl(eta_l: &[f64], lambda_k: &[f64]) -> f64 {
    mean_of(eta_l.len(), |r| eta_l[r] * lambda_k[r])
}

/// Removes the components along the orthonormal `prior` vectors and
/// normalizes.
pub fn gram_schmidt_d(d_raw: &[f64], prior: &[&[f64]]) -> Result<Vec<f64>> {
    let before = norm2(d_raw);
    if before == 0.0 || !before.is_finite() {
        return Err(Error::BasisExhausted);
    }
    let mut d = d_raw.to_vec();
    for pass in 0..2 {
        for p in prior {
            let c = dot(&d, p);
            for (x, y) in d.iter_mut().zip(*p) {
                *x -= c * y;
            }
        }
        if pass == 0 && norm2(&d) < EXHAUSTED_RATIO * before {
            return Err(Error::BasisExhausted);
        }
    }
    let nrm = norm2(&d);
    d.iter_mut().for_each(|x| *x /= nrm);
    Ok(d)
}

/// Removes from `lambda` its sample-mean projections on the prior
/// (pairwise orthogonal) `lambda`s with energies `kappas`.
pub fn gram_schmidt_lambda(lambda: &[f64], prior: &[&[f64]], kappas: &[f64]) -> Result<Vec<f64>> {
    let r = lambda.len();
    if let Some(i) = kappas.iter().position(|k| !(*k >= KAPPA_FLOOR)) {
        return Err(Error::DegenerateCouple(i + 1));
    }
    let mut out = lambda.to_vec();
    for _ in 0..2 {
        for (p, kappa) in prior.iter().zip(kappas) {
            let c = mean_of(r, |s| out[s] * p[s]) / kappa;
            for (x, y) in out.iter_mut().zip(*p) {
                *x -= c * y;
            }
        }
    }
    Ok(out)
}

/// `‖d_new − d_old‖₂`.
pub fn local_error(d_new: &[f64], d_old: &[f64]) -> f64 {
    sqrt(d_new.iter().zip(d_old).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Energy fraction `κₖ / Σᵢ κᵢ` of the last couple.
pub fn global_error(couples: &[Couple]) -> f64 {
    let total: f64 = couples.iter().map(|c| c.kappa).sum();
    match couples.last() {
        Some(c) if total > 0.0 => c.kappa / total,
        _ => 0.0,
    }
}

/// `E‖λₖ dₖ‖² / E‖uₖ‖²` without assuming bi-orthogonality; agrees with
/// [`global_error`] when the couples are bi-orthogonal.
pub fn global_error_unsimplified(couples: &[Couple]) -> f64 {
    let k = couples.len();
    let Some(last) = couples.last() else {
        return 0.0;
    };
    let r = last.lambda.len();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            let m = mean_of(r, |s| couples[a].lambda[s] * couples[b].lambda[s]);
            total += m * dot(&couples[a].d, &couples[b].d);
        }
    }
    let own = mean_of(r, |s| last.lambda[s] * last.lambda[s]) * dot(&last.d, &last.d);
    if total > 0.0 {
        own / total
    } else {
        0.0
    }
}

/// Result of one λ update.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaStep {
    pub lambda: Vec<f64>,
    /// Samples whose denominator was numerically zero; their λ is set to 0.
    pub flagged: usize,
}

/// Accepted couples with the cached products `Kᵢ dⱼ`.
struct Basis<'a> {
    sys: &'a StochasticSystem,
    couples: Vec<Couple>,
    /// `kd[j][i] = Kᵢ dⱼ`
    kd: Vec<Vec<Vec<f64>>>,
    /// Factor of `K₀` when it is the only stiffness term.
    fixed: Option<CholeskyFactor>,
}

struct Galerkin {
    coefficients: Vec<f64>,
    rhs: Vec<f64>,
    rhs_scale: f64,
}

impl<'a> Basis<'a> {
    fn new(sys: &'a StochasticSystem) -> Result<Self> {
        let fixed = if sys.k_list().len() == 1 {
            Some(sys.symbolic().factorize(&sys.k_list()[0])?)
        } else {
            None
        };
        Ok(Self {
            sys,
            couples: Vec::new(),
            kd: Vec::new(),
            fixed,
        })
    }

    fn with_couples(sys: &'a StochasticSystem, prior: &[Couple]) -> Result<Self> {
        let mut b = Self::new(sys)?;
        for c in prior {
            b.accept(c.clone());
        }
        Ok(b)
    }

    fn accept(&mut self, c: Couple) {
        self.kd
            .push(self.sys.k_list().iter().map(|k| k.matvec(&c.d)).collect());
        self.couples.push(c);
    }

    fn prior_d(&self) -> Vec<&[f64]> {
        self.couples.iter().map(|c| c.d.as_slice()).collect()
    }

    fn prior_lambda(&self) -> Vec<&[f64]> {
        self.couples.iter().map(|c| c.lambda.as_slice()).collect()
    }

    fn kappas(&self) -> Vec<f64> {
        self.couples.iter().map(|c| c.kappa).collect()
    }

    /// Coefficients and right-hand side of the Galerkin equation for `dₖ`.
    fn galerkin(&self, lambda: &[f64]) -> Galerkin {
        let sys = self.sys;
        let (xi, eta) = (sys.xi(), sys.eta());
        let (nk, nf, kp) = (xi.cols(), eta.cols(), self.couples.len());
        let r = lambda.len();
        // Layout: c_ikk (nk), c_ijk (nk * kp, j-major), b_l (nf), then the
        // second moments bounding each coefficient: λ², ξᵢ²λⱼ², ηₗ².
        let base = nk + nk * kp + nf;
        let sums = chunked_sums(r, 2 * base - nk + 1, |s, acc| {
            let l = lambda[s];
            acc[base] += l * l;
            for i in 0..nk {
                let x = xi.get(s, i);
                let xl = x * l;
                acc[i] += xl * l;
                for (j, c) in self.couples.iter().enumerate() {
                    let lj = c.lambda[s];
                    acc[nk + j * nk + i] += xl * lj;
                    acc[base + 1 + j * nk + i] += x * x * lj * lj;
                }
            }
            for q in 0..nf {
                let e = eta.get(s, q);
                acc[nk + nk * kp + q] += e * l;
                acc[base + 1 + nk * kp + q] += e * e;
            }
        });
        let mean: Vec<f64> = sums.iter().map(|v| v / r as f64).collect();
        let rms = |idx: usize| sqrt(mean[idx]);
        let rms_lambda = rms(base);
        let n = sys.n();
        let mut rhs = vec![0.0; n];
        // Cauchy-Schwarz bound on the size of each term of the right-hand side.
        let mut scale = 0.0;
        for (q, f) in sys.f_list().iter().enumerate() {
            let b = mean[nk + nk * kp + q];
            scale += rms_lambda * rms(base + 1 + nk * kp + q) * norm2(f);
            for (x, v) in rhs.iter_mut().zip(f) {
                *x += b * v;
            }
        }
        for j in 0..kp {
            for i in 0..nk {
                let c = mean[nk + j * nk + i];
                let kd = &self.kd[j][i];
                scale += rms_lambda * rms(base + 1 + j * nk + i) * norm2(kd);
                for (x, v) in rhs.iter_mut().zip(kd) {
                    *x -= c * v;
                }
            }
        }
        Galerkin {
            coefficients: mean[..nk].to_vec(),
            rhs,
            rhs_scale: scale,
        }
    }

    fn solve_galerkin(&self, g: &Galerkin) -> Result<Vec<f64>> {
        let couple = self.couples.len() + 1;
        let not_spd = |e: Error| match e {
            Error::NotPositiveDefinite { .. } => Error::GalerkinNotSpd {
                couple,
                coefficients: g.coefficients.clone(),
            },
            other => other,
        };
        if let Some(f) = &self.fixed {
            let c = g.coefficients[0];
            if !(c > 0.0) {
                return Err(Error::GalerkinNotSpd {
                    couple,
                    coefficients: g.coefficients.clone(),
                });
            }
            let mut d = f.solve_refined(&self.sys.k_list()[0], &g.rhs)?;
            d.iter_mut().for_each(|v| *v /= c);
            return Ok(d);
        }
        let a = SparseMatrix::linear_combination(&g.coefficients, self.sys.k_list())?;
        let factor = self.sys.symbolic().factorize(&a).map_err(not_spd)?;
        factor.solve_refined(&a, &g.rhs)
    }

    fn lambda_step(&self, d: &[f64]) -> Result<LambdaStep> {
        let sys = self.sys;
        let (xi, eta) = (sys.xi(), sys.eta());
        let (nk, nf) = (xi.cols(), eta.cols());
        let kd_own: Vec<Vec<f64>> = sys.k_list().iter().map(|k| k.matvec(d)).collect();
        let g_own: Vec<f64> = kd_own.iter().map(|v| dot(d, v)).collect();
        let g_prior: Vec<Vec<f64>> = self
            .kd
            .iter()
            .map(|per_i| per_i.iter().map(|v| dot(d, v)).collect())
            .collect();
        let h: Vec<f64> = sys.f_list().iter().map(|f| dot(d, f)).collect();
        let mean_energy: f64 = sys.xi_means().iter().zip(&g_own).map(|(m, g)| m * g).sum();
        let delta = DENOMINATOR_RATIO * abs(mean_energy);
        let r = sys.r();
        let values: Vec<Option<f64>> = map_indexed(r, |s| {
            let mut num = 0.0;
            for q in 0..nf {
                num += h[q] * eta.get(s, q);
            }
            let mut den = 0.0;
            for i in 0..nk {
                let x = xi.get(s, i);
                den += g_own[i] * x;
                for (j, c) in self.couples.iter().enumerate() {
                    num -= g_prior[j][i] * x * c.lambda[s];
                }
            }
            (abs(den) >= delta && den != 0.0).then(|| num / den)
        });
        let flagged = values.iter().filter(|v| v.is_none()).count();
        if flagged as f64 > MAX_FLAGGED_FRACTION * r as f64 {
            return Err(Error::TooManyFlaggedSamples { flagged, total: r });
        }
        Ok(LambdaStep {
            lambda: values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
            flagged,
        })
    }

    /// Re-solves all coefficients per sample in `span(d₁..dₖ)` and rotates
    /// the couples to be bi-orthogonal again, strongest first. Returns the
    /// energy fraction of the weakest couple and the number of samples whose
    /// reduced operator was not positive definite (those keep their previous
    /// coefficients).
    fn joint_update(&mut self) -> Result<(f64, usize)> {
        let sys = self.sys;
        let (xi, eta) = (sys.xi(), sys.eta());
        let (nk, k, r) = (xi.cols(), self.couples.len(), sys.r());
        let mut g = vec![vec![0.0; k * k]; nk];
        for (i, gi) in g.iter_mut().enumerate() {
            for a in 0..k {
                for b in a..k {
                    let v = dot(&self.couples[a].d, &self.kd[b][i]);
                    gi[a * k + b] = v;
                    gi[b * k + a] = v;
                }
            }
        }
        let h: Vec<Vec<f64>> = sys
            .f_list()
            .iter()
            .map(|f| self.couples.iter().map(|c| dot(&c.d, f)).collect())
            .collect();
        let couples = &self.couples;
        let previous = |s: usize, a: usize| if a + 1 < k { couples[a].lambda[s] } else { 0.0 };
        let solved: Vec<Option<Vec<f64>>> = map_indexed(r, |s| {
            let mut m = vec![0.0; k * k];
            for (i, gi) in g.iter().enumerate() {
                let x = xi.get(s, i);
                if x != 0.0 {
                    m.iter_mut().zip(gi).for_each(|(y, v)| *y += x * v);
                }
            }
            let mut rhs = vec![0.0; k];
            for (l, hl) in h.iter().enumerate() {
                let e = eta.get(s, l);
                rhs.iter_mut().zip(hl).for_each(|(y, v)| *y += e * v);
            }
            small_spd_solve(&mut m, k, &mut rhs).then_some(rhs)
        });
        let flagged = solved.iter().filter(|v| v.is_none()).count();
        if flagged as f64 > MAX_FLAGGED_FRACTION * r as f64 {
            return Err(Error::TooManyFlaggedSamples { flagged, total: r });
        }
        let alpha: Vec<Vec<f64>> = solved
            .into_iter()
            .enumerate()
            .map(|(s, v)| v.unwrap_or_else(|| (0..k).map(|a| previous(s, a)).collect()))
            .collect();
        let sums = chunked_sums(r, k * k, |s, acc| {
            let al = &alpha[s];
            for a in 0..k {
                for b in 0..k {
                    acc[a * k + b] += al[a] * al[b];
                }
            }
        });
        let moments = DenseMatrix::from_fn(k, k, |a, b| sums[a * k + b] / r as f64);
        let q = symmetric_eigen(&moments)?.vectors;
        let mut couples = Vec::with_capacity(k);
        let mut kd = Vec::with_capacity(k);
        for w in &q {
            let mut d = combine(|b| self.couples[b].d.as_slice(), w);
            let mut lambda: Vec<f64> = alpha.iter().map(|al| dot(al, w)).collect();
            let mut kdi: Vec<Vec<f64>> = (0..nk)
                .map(|i| combine(|b| self.kd[b][i].as_slice(), w))
                .collect();
            if orient(&mut d) {
                lambda.iter_mut().for_each(|v| *v = -*v);
                kdi.iter_mut().flatten().for_each(|v| *v = -*v);
            }
            let kappa = mean_of(r, |s| lambda[s] * lambda[s]);
            couples.push(Couple { d, lambda, kappa });
            kd.push(kdi);
        }
        self.couples = couples;
        self.kd = kd;
        Ok((global_error_rotated(&self.couples), flagged))
    }
}

/// Energy fraction of the weakest couple of a rotated set.
fn global_error_rotated(couples: &[Couple]) -> f64 {
    let total: f64 = couples.iter().map(|c| c.kappa).sum();
    let least = couples.iter().map(|c| c.kappa).fold(f64::INFINITY, f64::min);
    if total > 0.0 {
        least / total
    } else {
        0.0
    }
}

/// `Σ_b w_b rows(b)`.
fn combine<'a>(rows: impl Fn(usize) -> &'a [f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows(0).len()];
    for (b, wb) in w.iter().enumerate() {
        out.iter_mut().zip(rows(b)).for_each(|(y, v)| *y += wb * v);
    }
    out
}

/// Flips `d` so its first significant entry is positive; true if flipped.
fn orient(d: &mut [f64]) -> bool {
    match d.iter().find(|v| abs(**v) > SIGN_THRESHOLD) {
        Some(first) if *first < 0.0 => {
            d.iter_mut().for_each(|v| *v = -*v);
            true
        }
        _ => false,
    }
}

/// In-place dense `LDLᵀ` solve of the `k × k` row-major system; false when a
/// pivot is not clearly positive.
fn small_spd_solve(a: &mut [f64], k: usize, b: &mut [f64]) -> bool {
    for j in 0..k {
        let mut s = a[j * k + j];
        for p in 0..j {
            s -= a[j * k + p] * a[j * k + p] * a[p * k + p];
        }
        if !(s > PIVOT_RATIO * abs(a[j * k + j])) {
            return false;
        }
        a[j * k + j] = s;
        for i in j + 1..k {
            let mut t = a[i * k + j];
            for p in 0..j {
                t -= a[i * k + p] * a[j * k + p] * a[p * k + p];
            }
            a[i * k + j] = t / s;
        }
    }
    for i in 0..k {
        for p in 0..i {
            b[i] -= a[i * k + p] * b[p];
        }
    }
    for i in 0..k {
        b[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            b[i] -= a[p * k + i] * b[p];
        }
    }
    true
}

/// Raw (unnormalized) `dₖ` from the Galerkin equation
/// `(Σᵢ cᵢₖₖ Kᵢ) dₖ = Σₗ bₖₗ Fₗ − Σᵢ Σⱼ<ₖ cᵢⱼₖ Kᵢ dⱼ`.
pub fn deterministic_step(sys: &StochasticSystem, prior: &[Couple], lambda_k: &[f64]) -> Result<Vec<f64>> {
    check_samples(sys, lambda_k)?;
    let basis = Basis::with_couples(sys, prior)?;
    basis.solve_galerkin(&basis.galerkin(lambda_k))
}

/// Per-sample `λₖ = [Σₗ hₖₗ ηₗ − Σᵢ Σⱼ<ₖ gᵢⱼₖ ξᵢ λⱼ] / Σᵢ gᵢₖₖ ξᵢ`.
pub fn lambda_step(sys: &StochasticSystem, prior: &[Couple], d_k: &[f64]) -> Result<LambdaStep> {
    if d_k.len() != sys.n() {
        return Err(Error::ShapeMismatch {
            what: "basis vector",
            expected: sys.n(),
            got: d_k.len(),
        });
    }
    Basis::with_couples(sys, prior)?.lambda_step(d_k)
}

fn check_samples(sys: &StochasticSystem, lambda: &[f64]) -> Result<()> {
    if lambda.len() != sys.r() {
        return Err(Error::ShapeMismatch {
            what: "lambda samples",
            expected: sys.r(),
            got: lambda.len(),
        });
    }
    Ok(())
}

/// Builds the expansion couple by couple until the newest couple's energy
/// fraction reaches `eps_global`, the residual vanishes, or `k_max` couples
/// have been added.
pub fn solve(sys: &StochasticSystem, config: &SolverConfig) -> Result<SolutionExpansion> {
    config.validate()?;
    let r = sys.r();
    let mut basis = Basis::new(sys)?;
    let mut history = Vec::new();
    let mut termination = Termination::MaxCouples;

    'outer: for k in 0..config.k_max {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64 + 1);
        let init: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut lambda = gram_schmidt_lambda(&init, &basis.prior_lambda(), &basis.kappas())?;
        let mut d_old: Option<Vec<f64>> = None;
        let mut local_errors = Vec::new();
        let mut inner_converged = false;
        let mut flagged = 0;
        let mut d = Vec::new();
        let mut iterations = 0;
        for _ in 0..config.j_max {
            iterations += 1;
            let g = basis.galerkin(&lambda);
            if k > 0 && norm2(&g.rhs) <= NULL_RHS_RATIO * g.rhs_scale {
                termination = Termination::NullResidual;
                break 'outer;
            }
            let d_raw = basis.solve_galerkin(&g)?;
            d = match gram_schmidt_d(&d_raw, &basis.prior_d()) {
                Ok(d) => d,
                Err(Error::BasisExhausted) => {
                    termination = Termination::BasisExhausted;
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            let step = basis.lambda_step(&d)?;
            flagged = step.flagged;
            lambda = gram_schmidt_lambda(&step.lambda, &basis.prior_lambda(), &basis.kappas())?;
            if let Some(old) = &d_old {
                let e = local_error(&d, old);
                local_errors.push(e);
                if e <= config.eps_local {
                    inner_converged = true;
                    break;
                }
            }
            d_old = Some(d.clone());
        }
        if orient(&mut d) {
            lambda.iter_mut().for_each(|v| *v = -*v);
        }
        let kappa = mean_of(r, |s| lambda[s] * lambda[s]);
        if !(kappa >= KAPPA_FLOOR) {
            termination = Termination::NullResidual;
            break;
        }
        basis.accept(Couple { d, lambda, kappa });
        let global = match config.update {
            CoupleUpdate::Sequential => global_error(&basis.couples),
            CoupleUpdate::Joint => {
                let (increment, joint_flagged) = basis.joint_update()?;
                flagged = flagged.max(joint_flagged);
                increment
            }
        };
        history.push(CoupleHistory {
            iterations,
            local_errors,
            global_error: global,
            inner_converged,
            flagged_samples: flagged,
        });
        if global <= config.eps_global {
            termination = Termination::Converged;
            break;
        }
    }
    if basis.couples.is_empty() {
        return Err(Error::InvalidInput("solver produced no couple".into()));
    }
    Ok(SolutionExpansion {
        couples: basis.couples,
        history,
        converged: termination.is_converged(),
        termination,
    })
}

/// Responses `Σⱼ λⱼ⁽ʳ⁾ dⱼ` at the requested samples (rows) and DOFs (columns).
pub fn evaluate_solution(expansion: &SolutionExpansion, samples: &[usize], dofs: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(samples.len(), dofs.len(), |a, b| {
        let (r, i) = (samples[a], dofs[b]);
        expansion.couples.iter().map(|c| c.lambda[r] * c.d[i]).sum()
    })
}

/// Per-sample relative residuals `‖K(θ)uₖ(θ) − F(θ)‖ / ‖F(θ)‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualAudit {
    /// `per_couple[k - 1][r]`: residual of sample `r` using the first `k` couples.
    pub per_couple: Vec<Vec<f64>>,
}

impl ResidualAudit {
    /// Residuals with every couple.
    pub fn final_residuals(&self) -> &[f64] {
        self.per_couple.last().map_or(&[], |v| v.as_slice())
    }

    /// Sample median for each truncation `k = 1..`.
    pub fn medians(&self) -> Vec<f64> {
        self.per_couple.iter().map(|v| median(v)).collect()
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn residual_audit(sys: &StochasticSystem, expansion: &SolutionExpansion) -> Result<ResidualAudit> {
    if expansion.n() != sys.n() || expansion.r() != sys.r() {
        return Err(Error::InvalidInput("expansion does not match the system".into()));
    }
    let kd: Vec<Vec<Vec<f64>>> = expansion
        .couples
        .iter()
        .map(|c| sys.k_list().iter().map(|k| k.matvec(&c.d)).collect())
        .collect();
    let (xi, n, k) = (sys.xi(), sys.n(), expansion.k());
    let rows: Vec<Vec<f64>> = map_indexed(sys.r(), |s| {
        let f = sys.f_at(s);
        let fnorm = norm2(&f);
        let mut res: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut out = Vec::with_capacity(k);
        for (j, c) in expansion.couples.iter().enumerate() {
            let l = c.lambda[s];
            for (i, v) in kd[j].iter().enumerate() {
                let w = xi.get(s, i) * l;
                if w != 0.0 {
                    for (x, y) in res.iter_mut().zip(v) {
                        *x += w * y;
                    }
                }
            }
            let rn = norm2(&res[..n]);
            out.push(if fnorm > 0.0 { rn / fnorm } else { rn });
        }
        out
    });
    let per_couple = (0..k).map(|j| rows.iter().map(|row| row[j]).collect()).collect();
    Ok(ResidualAudit { per_couple })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use crate::random_field::{draw_samples, Marginal, SampleMatrix};

    /// Tridiagonal SPD test matrix.
    pub(crate) fn laplacian(n: usize, diag: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }

    fn load(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect()
    }

    fn two_variable_system(r: usize) -> StochasticSystem {
        let n = 12;
        let k0 = laplacian(n, 4.0);
        let pat = k0.pattern().clone();
        let k1 = SparseMatrix::from_values(
            pat.clone(),
            k0.values().iter().map(|v| 0.2 * v).collect(),
        )
        .unwrap();
        let mut k2 = SparseMatrix::zeros(pat);
        for i in 0..n / 2 {
            let p = k2.pattern().position(i, i).unwrap();
            k2.values_mut()[p] = 0.3;
        }
        let f0 = load(n);
        let f1: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.5 } else { 0.0 }).collect();
        let s = draw_samples(2, 1, r, 11, &[Marginal::StandardNormal; 3]).unwrap();
        StochasticSystem::new(vec![k0, k1, k2], vec![f0, f1], &s).unwrap()
    }

    #[test]
    fn moment_estimators() {
        let ones = vec![1.0; 8];
        assert_eq!(estimate_cijk(&ones, &ones, &ones), 1.0);
        let lam: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(estimate_bkl(&ones, &lam), 3.5);
    }

    #[test]
    fn gram_schmidt_properties() {
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(gram_schmidt_d(&[0.0, 3.0, 4.0], &[]).unwrap(), vec![0.0, 0.6, 0.8]);
        assert_eq!(gram_schmidt_d(&e1, &[&e1]), Err(Error::BasisExhausted));
        let p1 = gram_schmidt_d(&[1.0, 2.0, 0.5, -1.0], &[]).unwrap();
        let p2 = gram_schmidt_d(&[0.3, -1.0, 2.0, 0.1], &[&p1]).unwrap();
        let p3 = gram_schmidt_d(&[1.0, 1.0, 1.0, 1.0], &[&p1, &p2]).unwrap();
        let d = gram_schmidt_d(&[-0.4, 0.9, 0.2, 3.0], &[&p1, &p2, &p3]).unwrap();
        for p in [&p1, &p2, &p3] {
            assert!(dot(&d, p).abs() < 1e-12);
        }

        let l1: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        let k1 = mean_of(100, |s| l1[s] * l1[s]);
        let same = gram_schmidt_lambda(&l1, &[&l1], &[k1]).unwrap();
        assert!(same.iter().all(|v| *v == 0.0));
        let l2: Vec<f64> = (0..100).map(|i| (i as f64 * 1.3).cos() + 0.2).collect();
        let l2 = gram_schmidt_lambda(&l2, &[&l1], &[k1]).unwrap();
        let k2 = mean_of(100, |s| l2[s] * l2[s]);
        let l3: Vec<f64> = (0..100).map(|i| ((i * i) % 17) as f64).collect();
        let l3 = gram_schmidt_lambda(&l3, &[&l1, &l2], &[k1, k2]).unwrap();
        let k3 = mean_of(100, |s| l3[s] * l3[s]);
        for (p, kp) in [(&l1, k1), (&l2, k2)] {
            assert!(mean_of(100, |s| l3[s] * p[s]).abs() < 1e-12 * (k3 * kp).sqrt());
        }
        assert_eq!(gram_schmidt_lambda(&l1, &[&l1], &[0.0]), Err(Error::DegenerateCouple(1)));
    }

    #[test]
    fn error_measures() {
        assert_eq!(local_error(&[0.6, 0.8], &[0.6, 0.8]), 0.0);
        let c = Couple {
            d: vec![1.0],
            lambda: vec![2.0],
            kappa: 4.0,
        };
        assert_eq!(global_error(core::slice::from_ref(&c)), 1.0);
        assert_eq!(global_error_unsimplified(&[c]), 1.0);
    }

    #[test]
    fn deterministic_system_is_one_couple() {
        let k0 = laplacian(10, 3.0);
        let f = load(10);
        let s = draw_samples(0, 0, 50, 1, &[]).unwrap();
        let sys = StochasticSystem::new(vec![k0.clone()], vec![f.clone()], &s).unwrap();
        let exp = solve(&sys, &SolverConfig::default()).unwrap();
        assert_eq!(exp.k(), 1);
        assert!(exp.converged);
        let u = solve_spd(&k0, &f).unwrap();
        for r in [0, 17, 49] {
            let ur = exp.response(r, 1);
            let err: f64 = ur.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * norm2(&u));
        }
        // One constant λ for a deterministic system.
        let l = &exp.couples[0].lambda;
        assert!(l.iter().all(|v| (v - l[0]).abs() <= 1e-12 * l[0].abs()));
    }

    #[test]
    fn deterministic_step_without_randomness_is_plain_fem() {
        let k0 = laplacian(6, 3.0);
        let f = load(6);
        let s = draw_samples(0, 0, 10, 1, &[]).unwrap();
        let sys = StochasticSystem::new(vec![k0.clone()], vec![f.clone()], &s).unwrap();
        let d = deterministic_step(&sys, &[], &[1.0; 10]).unwrap();
        let u = solve_spd(&k0, &f).unwrap();
        for (a, b) in d.iter().zip(&u) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        let step = lambda_step(&sys, &[], &d).unwrap();
        assert_eq!(step.flagged, 0);
        assert!(step.lambda.iter().all(|v| *v == step.lambda[0]));
    }

    #[test]
    fn single_variable_matches_closed_form() {
        let n = 8;
        let k0 = laplacian(n, 2.5);
        let zero = SparseMatrix::zeros(k0.pattern().clone());
        let f = load(n);
        let s = draw_samples(1, 0, 2000, 5, &[Marginal::LogNormal { mu: 0.0, sigma: 0.3 }]).unwrap();
        let sys = StochasticSystem::new(vec![zero, k0.clone()], vec![f.clone()], &s).unwrap();
        let exp = solve(&sys, &SolverConfig::default()).unwrap();
        assert_eq!(exp.k(), 1);
        assert_eq!(exp.termination, Termination::NullResidual);
        let u0 = solve_spd(&k0, &f).unwrap();
        for r in (0..2000).step_by(97) {
            let xi = s.xi.get(r, 0);
            let u = exp.response(r, 1);
            for (a, b) in u.iter().zip(&u0) {
                assert!((a - b / xi).abs() <= 1e-9 * (b / xi).abs());
            }
        }
    }

    #[test]
    fn bi_orthogonality_and_residual_decrease() {
        let sys = two_variable_system(3000);
        let cfg = SolverConfig {
            eps_global: 1e-10,
            eps_local: 1e-8,
            k_max: 6,
            ..SolverConfig::default()
        };
        let exp = solve(&sys, &cfg).unwrap();
        assert!(exp.k() >= 2);
        for a in 0..exp.k() {
            for b in 0..exp.k() {
                let ca = &exp.couples[a];
                let cb = &exp.couples[b];
                let delta = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&ca.d, &cb.d) - delta).abs() <= 1e-10);
                if a != b {
                    let m = mean_of(3000, |s| ca.lambda[s] * cb.lambda[s]);
                    assert!(m.abs() <= 1e-8 * (ca.kappa * cb.kappa).sqrt());
                }
            }
        }
        let g = global_error(&exp.couples);
        assert!((global_error_unsimplified(&exp.couples) - g).abs() <= 1e-8);
        let med = residual_audit(&sys, &exp).unwrap().medians();
        assert!(med[med.len() - 1] < med[0], "{med:?}");
    }

    #[test]
    fn load_scaling_is_exact() {
        let sys = two_variable_system(500);
        let scaled = StochasticSystem::from_parts(
            sys.k_list().to_vec(),
            sys.f_list().iter().map(|f| f.iter().map(|v| 4.0 * v).collect()).collect(),
            &SampleMatrix::from_columns(500, (1..3).map(|i| sys.xi().column(i).to_vec()).collect()).unwrap(),
            &SampleMatrix::from_columns(500, vec![sys.eta().column(1).to_vec()]).unwrap(),
            0,
            0,
        )
        .unwrap();
        let cfg = SolverConfig {
            k_max: 4,
            ..SolverConfig::default()
        };
        let a = solve(&sys, &cfg).unwrap();
        let b = solve(&scaled, &cfg).unwrap();
        assert_eq!(a.k(), b.k());
        for (ca, cb) in a.couples.iter().zip(&b.couples) {
            assert_eq!(ca.d, cb.d);
            let l4: Vec<f64> = ca.lambda.iter().map(|v| 4.0 * v).collect();
            assert_eq!(l4, cb.lambda);
        }
    }

    #[test]
    fn evaluation_and_moments() {
        let exp = SolutionExpansion {
            couples: vec![Couple {
                d: vec![1.0, 0.0],
                lambda: vec![2.0; 4],
                kappa: 4.0,
            }],
            history: Vec::new(),
            converged: true,
            termination: Termination::Converged,
        };
        let u = evaluate_solution(&exp, &[0, 3], &[0, 1]);
        assert_eq!(u.as_slice(), &[2.0, 0.0, 2.0, 0.0]);
        let (m, v) = exp.moment_fields();
        assert_eq!(m, vec![2.0, 0.0]);
        assert_eq!(v, vec![0.0, 0.0]);
        let mut zeroed = exp.clone();
        zeroed.couples[0].lambda = vec![0.0; 4];
        assert!(evaluate_solution(&zeroed, &[1], &[0, 1]).as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn impossible_tolerance_reports_unconverged() {
        let sys = two_variable_system(400);
        let cfg = SolverConfig {
            eps_global: 1e-30,
            k_max: 2,
            ..SolverConfig::default()
        };
        let exp = solve(&sys, &cfg).unwrap();
        assert!(!exp.converged);
        assert_eq!(exp.termination, Termination::MaxCouples);
        assert_eq!(exp.history.len(), 2);
    }
}
