//! Turns a run configuration into a [`StochasticSystem`].

use std::collections::BTreeMap;

use stochafem_core::fem::{
    AssemblyPlan,
    assemble_stiffness, nodal_load_vector, self_weight_load, solve_spd, DofKind, StiffnessPart,
};
use stochafem_core::random_field::{
    assemble_covariance_problem, draw_samples_screened, solve_kl_eigenproblem, truncation_energy,
};
use stochafem_core::system::{build_from_load_field, build_from_modulus_field, modulus_screen};
use stochafem_core::{
    CovarianceKernel, DofMap, KLExpansion, Marginal, Mesh, SparseMatrix,
    StochasticSystem,
};

use crate::config::{LoadedConfig, PartName};
use crate::error::Result;
use crate::mesh_io::{dof_letter, read_mesh};

/// A response quantity tracked in summaries and Monte Carlo output.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub name: String,
    pub node: usize,
    pub dof: DofKind,
    pub equation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldReport {
    pub target: &'static str,
    pub terms: usize,
    pub truncation_energy: f64,
}

/// Mesh, numbering and KL data shared by every system built from one config.
pub struct Model {
    pub loaded: LoadedConfig,
    pub hash: String,
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub plan: AssemblyPlan,
    modulus_kl: Option<KLExpansion>,
    load_field: Option<(Mesh, KLExpansion)>,
}

pub struct Problem {
    pub system: StochasticSystem,
    pub monitors: Vec<Monitor>,
    pub fields: Vec<FieldReport>,
}

fn kl_for(mesh: &Mesh, sigma2: f64, corr_len: &[f64], mean: f64, terms: usize) -> Result<KLExpansion> {
    let kernel = CovarianceKernel::separable_exponential(sigma2, corr_len.to_vec())?;
    let (c, w) = assemble_covariance_problem(mesh, &kernel)?;
    Ok(solve_kl_eigenproblem(&c, &w, terms)?.with_constant_mean(mean))
}

impl Model {
    pub fn prepare(loaded: LoadedConfig) -> Result<Self> {
        let cfg = &loaded.config;
        let hash = loaded.hash()?;
        let mesh = read_mesh(&loaded.resolve(&cfg.mesh))?;
        let dofs = DofMap::new(&mesh)?;
        if dofs.n_free() == 0 {
            return Err(loaded.fail("every degree of freedom is fixed"));
        }
        let plan = AssemblyPlan::new(&mesh, &dofs);
        let modulus_kl = match &cfg.field.modulus {
            Some(f) => {
                if !cfg.stiffness.is_empty() {
                    return Err(loaded.fail("[field.modulus] cannot be combined with [[stiffness]] terms"));
                }
                Some(kl_for(&mesh, f.sigma2, &f.corr_len, f.mean, f.terms)?)
            }
            None => None,
        };
        let load_field = match &cfg.field.load {
            Some(f) => {
                let field_mesh = read_mesh(&loaded.resolve(&f.mesh))?;
                let most = cfg
                    .scaling
                    .iter()
                    .flat_map(|s| s.terms.iter().copied())
                    .chain([f.terms])
                    .max()
                    .unwrap_or(f.terms);
                let kl = kl_for(&field_mesh, f.sigma2, &f.corr_len, f.mean, most)?;
                Some((field_mesh, kl))
            }
            None => None,
        };
        Ok(Self {
            loaded,
            hash,
            mesh,
            dofs,
            plan,
            modulus_kl,
            load_field,
        })
    }

    /// Builds the system; `load_terms` overrides the load field truncation.
    pub fn build(&self, seed: u64, load_terms: Option<usize>) -> Result<Problem> {
        let cfg = &self.loaded.config;
        let fail = |m: String| self.loaded.fail(m);
        let mut fields = Vec::new();

        let declared: BTreeMap<&str, Marginal> = cfg
            .variables
            .iter()
            .map(|v| Ok((v.name.as_str(), Marginal::from_name(&v.marginal, &v.params)?)))
            .collect::<Result<_>>()?;
        if declared.len() != cfg.variables.len() {
            return Err(fail("duplicate variable name".into()));
        }
        let mut xi_names: Vec<&str> = Vec::new();
        let mut eta_names: Vec<&str> = Vec::new();
        for v in cfg.stiffness.iter().filter_map(|t| t.variable.as_deref()) {
            if !xi_names.contains(&v) {
                xi_names.push(v);
            }
        }
        for v in cfg.load.iter().filter_map(|t| t.variable.as_deref()) {
            if xi_names.contains(&v) {
                return Err(fail(format!("variable `{v}` multiplies both stiffness and load")));
            }
            if !eta_names.contains(&v) {
                eta_names.push(v);
            }
        }
        for v in xi_names.iter().chain(&eta_names) {
            if !declared.contains_key(v) {
                return Err(fail(format!("undeclared variable `{v}`")));
            }
        }
        if let Some(v) = cfg.variables.iter().find(|v| {
            !xi_names.contains(&v.name.as_str()) && !eta_names.contains(&v.name.as_str())
        }) {
            return Err(fail(format!("variable `{}` is declared but unused", v.name)));
        }

        let k_list = match &self.modulus_kl {
            Some(kl) => {
                let f = cfg.field.modulus.as_ref().expect("modulus field config");
                fields.push(FieldReport {
                    target: "modulus",
                    terms: f.terms,
                    truncation_energy: truncation_energy(kl, f.terms),
                });
                build_from_modulus_field(&self.mesh, &self.plan, kl)?
            }
            None => self.stiffness_family(&xi_names)?,
        };

        let mut base = nodal_load_vector(&self.mesh, &self.dofs);
        if let Some(g) = &cfg.gravity {
            let mut dir = [0.0; 3];
            if g.direction.len() != self.mesh.dim() {
                return Err(fail(format!("gravity direction needs {} components", self.mesh.dim())));
            }
            dir[..g.direction.len()].copy_from_slice(&g.direction);
            let w = self_weight_load(&self.mesh, &self.dofs, g.g, dir);
            base.iter_mut().zip(w).for_each(|(b, w)| *b += w);
        }
        let n = self.dofs.n_free();
        let mut f_list = if cfg.load.is_empty() {
            vec![base]
        } else {
            let mut f0 = vec![0.0; n];
            let mut per_var = vec![vec![0.0; n]; eta_names.len()];
            for t in &cfg.load {
                let target = match &t.variable {
                    Some(v) => &mut per_var[eta_names.iter().position(|x| x == v).unwrap()],
                    None => &mut f0,
                };
                target.iter_mut().zip(&base).for_each(|(y, b)| *y += t.scale * b);
            }
            let mut out = vec![f0];
            out.extend(per_var);
            out
        };
        let mut field_load_terms = 0;
        if let (Some((field_mesh, kl)), Some(f)) = (&self.load_field, &cfg.field.load) {
            let m = load_terms.unwrap_or(f.terms);
            if m > kl.m() {
                return Err(fail(format!("load field has only {} terms available", kl.m())));
            }
            let kl = kl.clone().truncated(m);
            let dof = dof_letter(&f.dof).map_err(fail)?;
            let mut parts = build_from_load_field(&self.mesh, &self.dofs, field_mesh, &kl, dof, f.sign)?;
            let rest = parts.split_off(1);
            f_list[0].iter_mut().zip(&parts[0]).for_each(|(y, v)| *y += v);
            f_list.extend(rest);
            field_load_terms = m;
            fields.push(FieldReport {
                target: "load",
                terms: m,
                truncation_energy: truncation_energy(&kl, m),
            });
        }

        let field_xi = self.modulus_kl.as_ref().map_or(0, |kl| kl.m());
        let mut marginals = vec![Marginal::StandardNormal; field_xi];
        marginals.extend(xi_names.iter().map(|v| declared[v]));
        marginals.extend(eta_names.iter().map(|v| declared[v]));
        marginals.extend(std::iter::repeat_n(Marginal::StandardNormal, field_load_terms));
        let m = field_xi + xi_names.len();
        let q = eta_names.len() + field_load_terms;
        let r = cfg.solver.samples;
        let samples = match &self.modulus_kl {
            Some(kl) => draw_samples_screened(m, q, r, seed, &marginals, modulus_screen(&self.mesh, kl))?,
            None => draw_samples_screened(m, q, r, seed, &marginals, |_| true)?,
        };
        let system = StochasticSystem::new(k_list, f_list, &samples)?;
        let monitors = self.monitors(&system)?;
        Ok(Problem {
            system,
            monitors,
            fields,
        })
    }

    fn stiffness_family(&self, xi_names: &[&str]) -> Result<Vec<SparseMatrix>> {
        let cfg = &self.loaded.config;
        if cfg.stiffness.is_empty() {
            return Ok(vec![assemble_stiffness(&self.mesh, &self.plan, StiffnessPart::Full)?]);
        }
        let mut parts: BTreeMap<u8, SparseMatrix> = BTreeMap::new();
        let mut groups: Vec<(Vec<f64>, Vec<SparseMatrix>)> = vec![(vec![], vec![]); xi_names.len() + 1];
        for t in &cfg.stiffness {
            let (key, part) = match t.part {
                PartName::Full => (0, StiffnessPart::Full),
                PartName::Axial => (1, StiffnessPart::Axial),
                PartName::Bending => (2, StiffnessPart::Bending),
            };
            if let std::collections::btree_map::Entry::Vacant(e) = parts.entry(key) {
                e.insert(assemble_stiffness(&self.mesh, &self.plan, part)?);
            }
            let slot = match &t.variable {
                Some(v) => 1 + xi_names.iter().position(|x| x == v).unwrap(),
                None => 0,
            };
            groups[slot].0.push(t.scale);
            groups[slot].1.push(parts[&key].clone());
        }
        groups
            .into_iter()
            .map(|(coeffs, mats)| {
                if mats.is_empty() {
                    Ok(SparseMatrix::zeros(self.plan.pattern().clone()))
                } else {
                    Ok(SparseMatrix::linear_combination(&coeffs, &mats)?)
                }
            })
            .collect()
    }

    fn monitors(&self, sys: &StochasticSystem) -> Result<Vec<Monitor>> {
        let cfg = &self.loaded.config;
        let owners = self.dofs.equation_owners();
        let at = |name: &str, eq: usize| {
            let (node, dof) = owners[eq];
            Monitor {
                name: name.to_string(),
                node: self.mesh.nodes()[node].id,
                dof,
                equation: eq,
            }
        };
        let mut out = Vec::new();
        let mut specs = cfg.monitor.clone();
        if specs.is_empty() {
            specs.push(crate::config::MonitorSpec {
                name: "max_displacement".into(),
                node: None,
                dof: None,
                max_displacement: true,
            });
        }
        for s in &specs {
            if s.max_displacement {
                if s.node.is_some() || s.dof.is_some() {
                    return Err(self.loaded.fail(format!(
                        "monitor `{}`: max_displacement excludes node and dof",
                        s.name
                    )));
                }
                let eq = argmax_abs(&mean_response(sys)?);
                out.push(at(&s.name, eq));
                continue;
            }
            let (Some(node), Some(dof)) = (s.node, s.dof.as_deref()) else {
                return Err(self.loaded.fail(format!("monitor `{}` needs node and dof", s.name)));
            };
            let dof = dof_letter(dof).map_err(|m| self.loaded.fail(m))?;
            let eq = self
                .mesh
                .node_index(node)
                .and_then(|i| self.dofs.equation(i, dof))
                .ok_or_else(|| {
                    self.loaded.fail(format!(
                        "monitor `{}`: node {node} dof {} is not a free degree of freedom",
                        s.name,
                        dof.letter()
                    ))
                })?;
            out.push(at(&s.name, eq));
        }
        Ok(out)
    }
}

/// Response of the mean operator to the mean load.
pub fn mean_response(sys: &StochasticSystem) -> Result<Vec<f64>> {
    let k = sys.mean_operator()?;
    let eta = sys.eta();
    let mut f = vec![0.0; sys.n()];
    for (l, fl) in sys.f_list().iter().enumerate() {
        let col = eta.column(l);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        f.iter_mut().zip(fl).for_each(|(y, v)| *y += mean * v);
    }
    Ok(solve_spd(&k, &f)?)
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}
