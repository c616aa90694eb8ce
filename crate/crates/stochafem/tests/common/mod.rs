#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use stochafem::config::LoadedConfig;
use stochafem::pipeline::{Model, Problem};

pub fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("bundled").join(name)
}

pub fn bundled_config(name: &str) -> PathBuf {
    bundled(name).join("config.toml")
}

/// Copies a bundled example into `dir` and applies `edit` to its config.
pub fn adapted(name: &str, dir: &Path, edit: impl FnOnce(&mut toml::Table)) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    for entry in fs::read_dir(bundled(name)).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
    }
    let path = dir.join("config.toml");
    let mut table: toml::Table = fs::read_to_string(&path).unwrap().parse().unwrap();
    edit(&mut table);
    fs::write(&path, toml::to_string(&table).unwrap()).unwrap();
    path
}

pub fn solver_table(t: &mut toml::Table) -> &mut toml::Table {
    t.get_mut("solver").and_then(|v| v.as_table_mut()).unwrap()
}

pub fn stochafem(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_stochafem"))
        .args(args)
        .output()
        .unwrap()
}

pub fn run_command(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stochafem(&args)
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn load(config: &Path) -> (Model, u64) {
    let loaded = LoadedConfig::read(config).unwrap();
    let seed = loaded.config.solver.seed;
    (Model::prepare(loaded).unwrap(), seed)
}

pub fn problem(config: &Path) -> (Model, Problem, u64) {
    let (model, seed) = load(config);
    let p = model.build(seed, None).unwrap();
    (model, p, seed)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
