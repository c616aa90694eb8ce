//! The affine stochastic system `(Σᵢ ξᵢ Kᵢ) u = Σₗ ηₗ Fₗ`.
//!
//! Index 0 of both families is the deterministic term: `ξ₀ ≡ 1` and
//! `η₀ ≡ 1` are stored as literal all-ones sample columns.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::{unit_element_matrices, AssemblyPlan, DofKind, DofMap, Mesh, StiffnessPart};
use crate::linalg::{CholeskyFactor, CholeskySymbolic, SparseMatrix};
use crate::random_field::{KLExpansion, SampleMatrix, SampleSet};
use crate::reduce::mean_of;

#[derive(Debug, Clone)]
pub struct StochasticSystem {
    k_list: Vec<SparseMatrix>,
    f_list: Vec<Vec<f64>>,
    xi: SampleMatrix,
    eta: SampleMatrix,
    seed: u64,
    rejected: usize,
    symbolic: Arc<CholeskySymbolic>,
}

/// `K(θ⁽ʳ⁾)` and `F(θ⁽ʳ⁾)` for one sample.
#[derive(Debug, Clone)]
pub struct EvaluatedSample {
    pub k: SparseMatrix,
    pub f: Vec<f64>,
    /// Some diagonal entry of `k` is not positive: the sample cannot be SPD.
    pub suspect: bool,
}

impl StochasticSystem {
    /// `samples.xi` must have one column per `Kᵢ`, i ≥ 1, and `samples.eta`
    /// one per `Fₗ`, l ≥ 1. The sample-mean operator `Σᵢ E{ξᵢ} Kᵢ` must be
    /// positive definite.
    pub fn new(k_list: Vec<SparseMatrix>, f_list: Vec<Vec<f64>>, samples: &SampleSet) -> Result<Self> {
        let eta = samples
            .eta
            .clone()
            .unwrap_or_else(|| SampleMatrix::zeros(samples.r(), 0));
        Self::from_parts(k_list, f_list, &samples.xi, &eta, samples.seed, samples.rejected)
    }

    pub fn from_parts(
        k_list: Vec<SparseMatrix>,
        f_list: Vec<Vec<f64>>,
        xi: &SampleMatrix,
        eta: &SampleMatrix,
        seed: u64,
        rejected: usize,
    ) -> Result<Self> {
        let Some(k0) = k_list.first() else {
            return Err(Error::InvalidInput("empty stiffness family".into()));
        };
        if f_list.is_empty() {
            return Err(Error::InvalidInput("empty load family".into()));
        }
        let n = k0.n();
        let pattern = k0.pattern().clone();
        let mut shared = Vec::with_capacity(k_list.len());
        for k in k_list {
            if k.n() != n || **k.pattern() != *pattern {
                return Err(Error::InvalidInput(
                    "stiffness matrices do not share one sparsity pattern".into(),
                ));
            }
            shared.push(SparseMatrix::from_values(pattern.clone(), k.values().to_vec())?);
        }
        for f in &f_list {
            if f.len() != n {
                return Err(Error::ShapeMismatch {
                    what: "load vector",
                    expected: n,
                    got: f.len(),
                });
            }
        }
        if xi.cols() + 1 != shared.len() {
            return Err(Error::ShapeMismatch {
                what: "stiffness variables",
                expected: shared.len() - 1,
                got: xi.cols(),
            });
        }
        if eta.cols() + 1 != f_list.len() {
            return Err(Error::ShapeMismatch {
                what: "load variables",
                expected: f_list.len() - 1,
                got: eta.cols(),
            });
        }
        if xi.rows() != eta.rows() || xi.rows() == 0 {
            return Err(Error::InvalidInput("sample matrices need the same positive row count".into()));
        }
        let sys = Self {
            k_list: shared,
            f_list,
            xi: xi.with_ones_column(),
            eta: eta.with_ones_column(),
            seed,
            rejected,
            symbolic: Arc::new(CholeskySymbolic::analyze(pattern)),
        };
        sys.symbolic.factorize(&sys.mean_operator()?).map_err(|e| match e {
            Error::NotPositiveDefinite { row, pivot } => Error::InvalidInput(format!(
                "mean stiffness operator is not positive definite (row {row}, pivot {pivot:e})"
            )),
            other => other,
        })?;
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.k_list[0].n()
    }

    pub fn r(&self) -> usize {
        self.xi.rows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn k_list(&self) -> &[SparseMatrix] {
        &self.k_list
    }

    pub fn f_list(&self) -> &[Vec<f64>] {
        &self.f_list
    }

    /// Stiffness variables including the leading ones column.
    pub fn xi(&self) -> &SampleMatrix {
        &self.xi
    }

    /// Load variables including the leading ones column.
    pub fn eta(&self) -> &SampleMatrix {
        &self.eta
    }

    pub fn symbolic(&self) -> &Arc<CholeskySymbolic> {
        &self.symbolic
    }

    /// Sample means of every `ξᵢ` (the first is exactly 1).
    pub fn xi_means(&self) -> Vec<f64> {
        (0..self.xi.cols())
            .map(|i| {
                let col = self.xi.column(i);
                mean_of(col.len(), |r| col[r])
            })
            .collect()
    }

    /// `Σᵢ E{ξᵢ} Kᵢ` with sample means.
    pub fn mean_operator(&self) -> Result<SparseMatrix> {
        SparseMatrix::linear_combination(&self.xi_means(), &self.k_list)
    }

    pub fn k_at(&self, r: usize) -> Result<SparseMatrix> {
        SparseMatrix::linear_combination(&self.xi.row(r), &self.k_list)
    }

    pub fn f_at(&self, r: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.n()];
        for (l, fl) in self.f_list.iter().enumerate() {
            let eta = self.eta.get(r, l);
            for (o, v) in f.iter_mut().zip(fl) {
                *o += eta * v;
            }
        }
        f
    }

    pub fn evaluate_at_sample(&self, r: usize) -> Result<EvaluatedSample> {
        if r >= self.r() {
            return Err(Error::InvalidInput(format!(
                "sample {r} out of range (R = {})",
                self.r()
            )));
        }
        let k = self.k_at(r)?;
        let suspect = k.diagonal().iter().any(|v| !(*v > 0.0));
        Ok(EvaluatedSample {
            k,
            f: self.f_at(r),
            suspect,
        })
    }

    /// Factorizes `K(θ⁽ʳ⁾)` reusing the shared symbolic analysis.
    pub fn factor_at(&self, r: usize) -> Result<(SparseMatrix, CholeskyFactor)> {
        let k = self.k_at(r)?;
        let factor = self.symbolic.factorize(&k)?;
        Ok((k, factor))
    }
}

fn centroid_values(mesh: &Mesh, nodal: &[f64]) -> Vec<f64> {
    mesh.elements()
        .iter()
        .map(|e| mesh.centroid_value(e, nodal))
        .collect()
}

fn weighted_assembly(plan: &AssemblyPlan, unit: &[crate::DenseMatrix], w: &[f64]) -> Result<SparseMatrix> {
    plan.assemble_with(|e| Ok(unit[e].scaled(w[e])))
}

/// `[K₀, K₁, …, K_M]` for a KL-expanded modulus multiplier: `K₀` weights
/// every element by the field mean at its centroid, `Kᵢ` by `√λᵢ ωᵢ`.
pub fn build_from_modulus_field(
    mesh: &Mesh,
    plan: &AssemblyPlan,
    kl: &KLExpansion,
) -> Result<Vec<SparseMatrix>> {
    if kl.n_nodes() != mesh.nodes().len() {
        return Err(Error::ShapeMismatch {
            what: "field nodes",
            expected: mesh.nodes().len(),
            got: kl.n_nodes(),
        });
    }
    let unit = unit_element_matrices(mesh, StiffnessPart::Full)?;
    let mean = centroid_values(mesh, &kl.mean_values);
    if let Some(e) = mean.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveMean(mesh.elements()[e].id));
    }
    let mut out = Vec::with_capacity(kl.m() + 1);
    out.push(weighted_assembly(plan, &unit, &mean)?);
    for i in 0..kl.m() {
        let w = centroid_values(mesh, &kl.scaled_mode(i));
        out.push(weighted_assembly(plan, &unit, &w)?);
    }
    Ok(out)
}

/// Admissibility screen for KL modulus samples: the realized field must be
/// positive at every element centroid.
pub fn modulus_screen(mesh: &Mesh, kl: &KLExpansion) -> impl Fn(&[f64]) -> bool {
    let mean = centroid_values(mesh, &kl.mean_values);
    let modes: Vec<Vec<f64>> = (0..kl.m())
        .map(|i| centroid_values(mesh, &kl.scaled_mode(i)))
        .collect();
    move |row: &[f64]| {
        (0..mean.len()).all(|e| {
            let v = mean[e]
                + modes
                    .iter()
                    .zip(row)
                    .map(|(m, xi)| xi * m[e])
                    .sum::<f64>();
            v > 0.0
        })
    }
}

/// `[F₀, F₁, …, F_M]` for a KL-expanded nodal load field.
///
/// The field lives on `field_mesh`; each field node applies its value, times
/// `sign`, on degree of freedom `dof` of the structural node with the same id.
pub fn build_from_load_field(
    mesh: &Mesh,
    dofs: &DofMap,
    field_mesh: &Mesh,
    kl: &KLExpansion,
    dof: DofKind,
    sign: f64,
) -> Result<Vec<Vec<f64>>> {
    if kl.n_nodes() != field_mesh.nodes().len() {
        return Err(Error::ShapeMismatch {
            what: "field nodes",
            expected: field_mesh.nodes().len(),
            got: kl.n_nodes(),
        });
    }
    let targets = field_mesh
        .nodes()
        .iter()
        .map(|n| {
            mesh.node_index(n.id)
                .ok_or_else(|| Error::InvalidInput(format!("load field node {} not in the structure", n.id)))
                .map(|s| dofs.equation(s, dof))
        })
        .collect::<Result<Vec<_>>>()?;
    let spread = |nodal: &[f64]| {
        let mut f = vec![0.0; dofs.n_free()];
        for (t, v) in targets.iter().zip(nodal) {
            if let Some(eq) = t {
                f[*eq] += sign * v;
            }
        }
        f
    };
    let mut out = Vec::with_capacity(kl.m() + 1);
    out.push(spread(&kl.mean_values));
    for i in 0..kl.m() {
        out.push(spread(&kl.scaled_mode(i)));
    }
    Ok(out)
}
