mod common;

use std::fs;

use common::*;
use toml::Value;

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn deterministic_smoke_converges_in_one_couple() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_command("solve", &bundled_config("deterministic_smoke"), tmp.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history = json(&tmp.path().join("history.json"));
    assert_eq!(history["couples"].as_array().unwrap().len(), 1);
    let summary = json(&tmp.path().join("summary.json"));
    assert_eq!(summary["couples"], 1);
    assert_eq!(summary["converged"], true);
    for f in ["expansion.csv", "lambda.csv", "timings.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let first = fs::read_to_string(tmp.path().join("expansion.csv")).unwrap();
    let line = first.lines().next().unwrap();
    assert!(line.starts_with("# stochafem config_hash=") && line.ends_with(" seed=1"), "{line}");
}

#[test]
fn pylon_converges_with_two_to_four_couples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_command("solve", &bundled_config("pylon_like"), tmp.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let k = json(&tmp.path().join("history.json"))["couples"].as_array().unwrap().len();
    assert!((2..=4).contains(&k), "{k} couples");
}

#[test]
fn unreachable_tolerance_exits_two_with_complete_history() {
    let tmp = tempfile::tempdir().unwrap();
    let config = adapted("pylon_like", &tmp.path().join("cfg"), |t| {
        let s = solver_table(t);
        s.insert("eps_global".into(), Value::Float(1e-30));
        s.insert("k_max".into(), Value::Integer(2));
        s.insert("samples".into(), Value::Integer(2000));
    });
    let dir = tmp.path().join("out");
    let out = run_command("solve", &config, &dir, &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let history = json(&dir.join("history.json"));
    let couples = history["couples"].as_array().unwrap();
    assert_eq!(couples.len(), 2);
    for (i, c) in couples.iter().enumerate() {
        assert_eq!(c["couple"], i + 1);
        for key in ["iterations", "inner_converged", "local_errors", "global_error", "kappa", "flagged_samples"] {
            assert!(!c[key].is_null(), "couple {} lacks {key}", i + 1);
        }
    }
    let summary = json(&dir.join("summary.json"));
    assert_eq!(summary["converged"], false);
    assert_eq!(summary["termination"], "max-couples");
}

#[test]
fn mesh_syntax_errors_exit_one_with_a_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let config = adapted("deterministic_smoke", tmp.path(), |_| {});
    let mesh = tmp.path().join("mesh.txt");
    let mut text = fs::read_to_string(&mesh).unwrap();
    text.push_str("elem 99 beam 1 2 1\n");
    let line = text.lines().count();
    fs::write(&mesh, text).unwrap();
    let out = run_command("solve", &config, &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains(&format!("mesh.txt:{line}:")), "{msg}");
    assert!(msg.contains("beam"), "{msg}");
}

#[test]
fn unknown_config_keys_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = adapted("deterministic_smoke", tmp.path(), |t| {
        solver_table(t).insert("epsilon".into(), Value::Float(1e-3));
    });
    let out = run_command("solve", &config, &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("epsilon"), "{}", stderr(&out));
}

#[test]
fn compare_without_prior_outputs_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_command("compare", &bundled_config("deterministic_smoke"), tmp.path(), &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing prior output"), "{}", stderr(&out));
}

#[test]
fn compare_rejects_outputs_from_another_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = adapted("pylon_like", &tmp.path().join("cfg"), |t| {
        solver_table(t).insert("samples".into(), Value::Integer(500));
    });
    let dir = tmp.path().join("out");
    assert_eq!(code(&run_command("solve", &config, &dir, &[])), 0);
    assert_eq!(code(&run_command("mc", &config, &dir, &["--seed", "5"])), 0);
    let out = run_command("compare", &config, &dir, &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn mc_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = adapted("pylon_like", &tmp.path().join("cfg"), |t| {
        solver_table(t).insert("samples".into(), Value::Integer(1000));
    });
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run_command("mc", &config, &a, &[])), 0);
    assert_eq!(code(&run_command("mc", &config, &b, &[])), 0);
    let read = |d: &std::path::Path| fs::read(d.join("mc_responses.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

fn roof_scaling(dir: &std::path::Path, terms: &[i64]) -> std::path::PathBuf {
    let terms = terms.to_vec();
    adapted("roof_like", dir, move |t| {
        solver_table(t).insert("samples".into(), Value::Integer(1000));
        let mut s = toml::Table::new();
        s.insert("terms".into(), Value::Array(terms.into_iter().map(Value::Integer).collect()));
        t.insert("scaling".into(), Value::Table(s));
    })
}

#[test]
fn scaling_with_one_truncation_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let config = roof_scaling(&tmp.path().join("cfg"), &[10]);
    let dir = tmp.path().join("out");
    let out = run_command("scaling", &config, &dir, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.join("scaling.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert_eq!(lines[1], "terms,couples,converged,seconds");
    assert!(lines[2].starts_with("10,"));
}

#[test]
fn repeated_scaling_runs_give_the_same_couple_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = roof_scaling(&tmp.path().join("cfg"), &[5, 20]);
    let couples = |d: &str| {
        let dir = tmp.path().join(d);
        assert_eq!(code(&run_command("scaling", &config, &dir, &[])), 0);
        fs::read_to_string(dir.join("scaling.csv"))
            .unwrap()
            .lines()
            .skip(2)
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
    };
    let first = couples("a");
    assert_eq!(first.len(), 2);
    assert_eq!(first, couples("b"));
}

#[test]
fn scaling_requires_a_load_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_command("scaling", &bundled_config("pylon_like"), tmp.path(), &[]);
    assert_eq!(code(&out), 1);
}
