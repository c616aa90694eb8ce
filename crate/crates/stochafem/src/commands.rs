//! The four subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use stochafem_core::decomposition::{residual_audit, solve};
use stochafem_core::statistics::{mean_variance, paired_pdfs, pdf_distance};
use stochafem_core::{mc_solve, SolutionExpansion};

use crate::config::LoadedConfig;
use crate::error::{io_err, CliError, Result};
use crate::output::{num, read_csv, read_json, record_timing, write_csv, write_json, Provenance};
use crate::pipeline::{Model, Monitor, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Mc,
    Compare,
    Scaling,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Whether the run reached its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    Unconverged,
}

pub fn run(command: Command, opts: &RunOptions) -> Result<Outcome> {
    let loaded = LoadedConfig::read(&opts.config)?;
    let seed = opts.seed.unwrap_or(loaded.config.solver.seed);
    std::fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    match command {
        Command::Solve => run_solve(loaded, seed, &opts.out),
        Command::Mc => run_mc(loaded, seed, &opts.out),
        Command::Compare => run_compare(&loaded, seed, &opts.out),
        Command::Scaling => run_scaling(loaded, seed, &opts.out),
    }
}

fn monitors_json(monitors: &[Monitor]) -> Vec<Value> {
    monitors
        .iter()
        .map(|m| {
            json!({
                "name": m.name,
                "node": m.node,
                "dof": m.dof.letter().to_string(),
                "equation": m.equation,
            })
        })
        .collect()
}

fn history_json(prov: &Provenance, exp: &SolutionExpansion) -> Value {
    let couples: Vec<Value> = exp
        .history
        .iter()
        .zip(&exp.couples)
        .enumerate()
        .map(|(k, (h, c))| {
            json!({
                "couple": k + 1,
                "iterations": h.iterations,
                "inner_converged": h.inner_converged,
                "local_errors": h.local_errors,
                "global_error": h.global_error,
                "kappa": c.kappa,
                "flagged_samples": h.flagged_samples,
            })
        })
        .collect();
    json!({
        "config_hash": prov.hash,
        "seed": prov.seed,
        "converged": exp.converged,
        "termination": exp.termination.name(),
        "couples": couples,
    })
}

fn run_solve(loaded: LoadedConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let solver = loaded.solver_config(seed);
    let model = Model::prepare(loaded)?;
    let prov = Provenance {
        hash: model.hash.clone(),
        seed,
    };
    let Problem {
        system,
        monitors,
        fields,
    } = model.build(seed, None)?;
    let start = Instant::now();
    let exp = match solve(&system, &solver) {
        Ok(e) => e,
        Err(e) => {
            write_json(
                &out.join("history.json"),
                &json!({
                    "config_hash": prov.hash,
                    "seed": seed,
                    "converged": false,
                    "error": e.to_string(),
                }),
            )?;
            return Err(e.into());
        }
    };
    let seconds = start.elapsed().as_secs_f64();

    let owners = model.dofs.equation_owners();
    let k = exp.k();
    let mut header = vec!["eq".to_string(), "node".into(), "dof".into()];
    header.extend((1..=k).map(|i| format!("d{i}")));
    write_csv(
        &out.join("expansion.csv"),
        &prov,
        &header,
        (0..exp.n()).map(|eq| {
            let (node, dof) = owners[eq];
            let mut row = vec![
                eq.to_string(),
                model.mesh.nodes()[node].id.to_string(),
                dof.letter().to_string(),
            ];
            row.extend(exp.couples.iter().map(|c| num(c.d[eq])));
            row
        }),
    )?;
    let mut header = vec!["sample".to_string()];
    header.extend((1..=k).map(|i| format!("lambda{i}")));
    write_csv(
        &out.join("lambda.csv"),
        &prov,
        &header,
        (0..exp.r()).map(|r| {
            let mut row = vec![r.to_string()];
            row.extend(exp.couples.iter().map(|c| num(c.lambda[r])));
            row
        }),
    )?;
    write_json(&out.join("history.json"), &history_json(&prov, &exp))?;

    let (mean, var) = exp.moment_fields();
    let audit = residual_audit(&system, &exp)?;
    let mut monitor_rows = monitors_json(&monitors);
    for (row, m) in monitor_rows.iter_mut().zip(&monitors) {
        row["mean"] = json!(mean[m.equation]);
        row["std"] = json!(var[m.equation].max(0.0).sqrt());
    }
    let summary = json!({
        "config_hash": prov.hash,
        "seed": seed,
        "samples": system.r(),
        "rejected_samples": system.rejected(),
        "dofs": system.n(),
        "couples": k,
        "converged": exp.converged,
        "termination": exp.termination.name(),
        "residual_median_by_couple": audit.medians(),
        "fields": fields.iter().map(|f| json!({
            "target": f.target,
            "terms": f.terms,
            "truncation_energy": f.truncation_energy,
        })).collect::<Vec<_>>(),
        "monitors": monitor_rows,
    });
    write_json(&out.join("summary.json"), &summary)?;
    record_timing(out, "solve", seconds)?;
    Ok(if exp.converged {
        Outcome::Converged
    } else {
        Outcome::Unconverged
    })
}

fn run_mc(loaded: LoadedConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let model = Model::prepare(loaded)?;
    let prov = Provenance {
        hash: model.hash.clone(),
        seed,
    };
    let problem = model.build(seed, None)?;
    let eqs: Vec<usize> = problem.monitors.iter().map(|m| m.equation).collect();
    let all: Vec<usize> = (0..problem.system.r()).collect();
    let mc = mc_solve(&problem.system, &all, &eqs)?;
    let mut header = vec!["sample".to_string()];
    header.extend(problem.monitors.iter().map(|m| m.name.clone()));
    write_csv(
        &out.join("mc_responses.csv"),
        &prov,
        &header,
        mc.samples.iter().enumerate().map(|(row, s)| {
            let mut v = vec![s.to_string()];
            v.extend(mc.responses.row(row).iter().map(|x| num(*x)));
            v
        }),
    )?;
    record_timing(out, "mc", mc.wall_time)?;
    Ok(Outcome::Converged)
}

fn run_compare(loaded: &LoadedConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let prov = Provenance {
        hash: loaded.hash()?,
        seed,
    };
    let summary_path = out.join("summary.json");
    let mut summary = read_json(&summary_path, "solve")?;
    let expansion_path = out.join("expansion.csv");
    let lambda_path = out.join("lambda.csv");
    let mc_path = out.join("mc_responses.csv");
    let expansion = read_csv(&expansion_path, "solve")?;
    let lambda = read_csv(&lambda_path, "solve")?;
    let mc = read_csv(&mc_path, "mc")?;
    prov.check(&expansion.prov, &expansion_path)?;
    prov.check(&lambda.prov, &lambda_path)?;
    prov.check(&mc.prov, &mc_path)?;
    if summary["config_hash"] != json!(prov.hash) || summary["seed"] != json!(seed) {
        return Err(CliError::Invalid(format!(
            "{} was written by a different run",
            summary_path.display()
        )));
    }
    let monitors = summary["monitors"].as_array().cloned().unwrap_or_default();
    let samples: Vec<usize> = mc.column("sample")?.iter().map(|s| *s as usize).collect();
    let lambdas = (0..lambda.rows.len())
        .map(|i| lambda.numeric_row(i, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut comparison = serde_json::Map::new();
    for m in &monitors {
        let name = m["name"].as_str().unwrap_or_default().to_string();
        let eq = m["equation"].as_u64().unwrap_or(u64::MAX) as usize;
        let bad = |msg: &str| CliError::Invalid(format!("monitor `{name}`: {msg}"));
        let d_row = expansion.numeric_row(eq, 3)?;
        let mc_values = mc.column(&name)?;
        let decomposition = samples
            .iter()
            .map(|&s| {
                let l = lambdas.get(s).ok_or_else(|| bad("sample missing from lambda.csv"))?;
                Ok(d_row.iter().zip(l).map(|(d, l)| d * l).sum::<f64>())
            })
            .collect::<Result<Vec<f64>>>()?;
        let dist = pdf_distance(&decomposition, &mc_values)?;
        let (grid, p_dec, p_mc) = paired_pdfs(&decomposition, &mc_values)?;
        write_csv(
            &out.join(format!("pdf_{name}.csv")),
            &prov,
            &["x".into(), "decomposition".into(), "monte_carlo".into()],
            (0..grid.len()).map(|i| vec![num(grid[i]), num(p_dec[i]), num(p_mc[i])]),
        )?;
        let (md, vd) = mean_variance(&decomposition);
        let (mm, vm) = mean_variance(&mc_values);
        let (sd, sm) = (vd.sqrt(), vm.sqrt());
        comparison.insert(
            name,
            json!({
                "samples": samples.len(),
                "l1": dist.l1,
                "ks": dist.ks,
                "mean_decomposition": md,
                "mean_monte_carlo": mm,
                "std_decomposition": sd,
                "std_monte_carlo": sm,
                "mean_relative_error": ((md - mm) / mm).abs(),
                "std_relative_error": ((sd - sm) / sm).abs(),
            }),
        );
    }
    summary["comparison"] = Value::Object(comparison);
    write_json(&summary_path, &summary)?;
    Ok(Outcome::Converged)
}

fn run_scaling(loaded: LoadedConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let Some(spec) = loaded.config.scaling.clone() else {
        return Err(loaded.fail("scaling needs a [scaling] section"));
    };
    if loaded.config.field.load.is_none() {
        return Err(loaded.fail("scaling varies the load field truncation and needs [field.load]"));
    }
    let solver = loaded.solver_config(seed);
    let model = Model::prepare(loaded)?;
    let prov = Provenance {
        hash: model.hash.clone(),
        seed,
    };
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &m in &spec.terms {
        let problem = model.build(seed, Some(m))?;
        let start = Instant::now();
        let exp = solve(&problem.system, &solver)?;
        let seconds = start.elapsed().as_secs_f64();
        all_converged &= exp.converged;
        rows.push(vec![
            m.to_string(),
            exp.k().to_string(),
            exp.converged.to_string(),
            num(seconds),
        ]);
    }
    write_csv(
        &out.join("scaling.csv"),
        &prov,
        &["terms".into(), "couples".into(), "converged".into(), "seconds".into()],
        rows,
    )?;
    Ok(if all_converged {
        Outcome::Converged
    } else {
        Outcome::Unconverged
    })
}
