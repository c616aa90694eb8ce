//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use stochafem_core::{CoupleUpdate, SolverConfig};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Structural mesh, relative to the config file.
    pub mesh: PathBuf,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub stiffness: Vec<StiffnessTerm>,
    #[serde(default)]
    pub load: Vec<LoadTerm>,
    pub gravity: Option<Gravity>,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub monitor: Vec<MonitorSpec>,
    pub scaling: Option<ScalingSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub eps_global: f64,
    pub eps_local: f64,
    pub k_max: usize,
    pub j_max: usize,
    pub samples: usize,
    pub seed: u64,
    pub update: UpdateName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateName {
    Joint,
    Sequential,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            eps_global: d.eps_global,
            eps_local: d.eps_local,
            k_max: d.k_max,
            j_max: d.j_max,
            samples: 10_000,
            seed: d.seed,
            update: UpdateName::Joint,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub marginal: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartName {
    Full,
    Axial,
    Bending,
}

/// `scale * K_part`, multiplied by `variable` when one is named.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StiffnessTerm {
    #[serde(default = "full")]
    pub part: PartName,
    #[serde(default = "one")]
    pub scale: f64,
    pub variable: Option<String>,
}

/// `scale * P`, where `P` is the mesh point loads plus gravity.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTerm {
    #[serde(default = "one")]
    pub scale: f64,
    pub variable: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gravity {
    pub g: f64,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub modulus: Option<ModulusField>,
    pub load: Option<LoadField>,
}

/// Gaussian multiplier on every element's stiffness.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusField {
    pub sigma2: f64,
    pub corr_len: Vec<f64>,
    #[serde(default = "one")]
    pub mean: f64,
    pub terms: usize,
}

/// Gaussian nodal load on a separate field mesh.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadField {
    pub mesh: PathBuf,
    pub sigma2: f64,
    pub corr_len: Vec<f64>,
    pub mean: f64,
    pub terms: usize,
    pub dof: String,
    #[serde(default = "one")]
    pub sign: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    pub name: String,
    pub node: Option<usize>,
    pub dof: Option<String>,
    #[serde(default)]
    pub max_displacement: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub terms: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

fn full() -> PartName {
    PartName::Full
}

/// A parsed config with its location and raw bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    pub bytes: Vec<u8>,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            config,
            bytes,
        })
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        match self.path.parent() {
            Some(dir) => dir.join(rel),
            None => rel.to_path_buf(),
        }
    }

    pub fn fail(&self, msg: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }

    /// SHA-256 over the config bytes followed by every mesh it references.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(&self.bytes);
        let mut meshes = vec![self.config.mesh.clone()];
        if let Some(f) = &self.config.field.load {
            meshes.push(f.mesh.clone());
        }
        for m in meshes {
            let p = self.resolve(&m);
            h.update(std::fs::read(&p).map_err(io_err(p))?);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let s = &self.config.solver;
        SolverConfig {
            eps_global: s.eps_global,
            eps_local: s.eps_local,
            k_max: s.k_max,
            j_max: s.j_max,
            seed,
            update: match s.update {
                UpdateName::Joint => CoupleUpdate::Joint,
                UpdateName::Sequential => CoupleUpdate::Sequential,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let c: RunConfig = toml::from_str("mesh = \"m.txt\"\n").unwrap();
        assert_eq!(c.solver.k_max, 20);
        assert_eq!(c.solver.samples, 10_000);
        assert!(c.stiffness.is_empty());
        let e = toml::from_str::<RunConfig>("mesh = \"m.txt\"\n[solver]\nkmax = 3\n").unwrap_err();
        assert!(e.to_string().contains("kmax"), "{e}");
    }

    #[test]
    fn terms_parse() {
        let c: RunConfig = toml::from_str(
            "mesh = \"m.txt\"\n\
             [[variables]]\nname = \"a\"\nmarginal = \"lognormal\"\nparams = [0.0, 0.3]\n\
             [[stiffness]]\npart = \"axial\"\nvariable = \"a\"\nscale = 0.2\n\
             [[stiffness]]\npart = \"bending\"\n\
             [[monitor]]\nname = \"tip\"\nnode = 3\ndof = \"y\"\n",
        )
        .unwrap();
        assert_eq!(c.stiffness[0].part, PartName::Axial);
        assert_eq!(c.stiffness[0].scale, 0.2);
        assert_eq!(c.stiffness[1].variable, None);
        assert_eq!(c.monitor[0].node, Some(3));
    }
}
