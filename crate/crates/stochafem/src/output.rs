//! Output files. Every CSV opens with a provenance comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub hash: String,
    pub seed: u64,
}

impl Provenance {
    fn line(&self) -> String {
        format!("# stochafem config_hash={} seed={}", self.hash, self.seed)
    }

    fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# stochafem ")?;
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self {
            hash: hash?,
            seed: seed?,
        })
    }

    pub fn check(&self, other: &Provenance, path: &Path) -> Result<()> {
        if self != other {
            return Err(CliError::Invalid(format!(
                "{} was written by a different run (config_hash={} seed={})",
                path.display(),
                other.hash,
                other.seed
            )));
        }
        Ok(())
    }
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv<I>(path: &Path, prov: &Provenance, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", prov.line()).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub prov: Provenance,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    path: std::path::PathBuf,
}

impl CsvTable {
    fn bad(&self, msg: String) -> CliError {
        CliError::Invalid(format!("{}: {msg}", self.path.display()))
    }

    fn parse(&self, f: &str) -> Result<f64> {
        f.parse().map_err(|_| self.bad(format!("`{f}` is not a number")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| self.bad(format!("no column `{name}`")))?;
        self.rows.iter().map(|r| self.parse(&r[j])).collect()
    }

    /// Numeric fields of row `i` from column `from` on.
    pub fn numeric_row(&self, i: usize, from: usize) -> Result<Vec<f64>> {
        let row = self.rows.get(i).ok_or_else(|| self.bad(format!("no row {i}")))?;
        row.iter().skip(from).map(|f| self.parse(f)).collect()
    }
}

/// Reads a numeric CSV written by [`write_csv`].
pub fn read_csv(path: &Path, producer: &'static str) -> Result<CsvTable> {
    let text = read_output(path, producer)?;
    let bad = |msg: String| CliError::Invalid(format!("{}: {msg}", path.display()));
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let prov = Provenance::parse(first).ok_or_else(|| bad("missing provenance line".into()))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(CsvTable {
        prov,
        header,
        rows,
        path: path.to_path_buf(),
    })
}

fn read_output(path: &Path, producer: &'static str) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingOutput {
            path: path.to_path_buf(),
            command: producer,
        }),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json(path: &Path, producer: &'static str) -> Result<Value> {
    let text = read_output(path, producer)?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Records wall-clock seconds under `key`, keeping other entries.
pub fn record_timing(dir: &Path, key: &str, seconds: f64) -> Result<()> {
    let path = dir.join("timings.json");
    let mut v = match std::fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str(&t).unwrap_or_else(|_| Value::Object(Default::default())),
        Err(_) => Value::Object(Default::default()),
    };
    if !v.is_object() {
        v = Value::Object(Default::default());
    }
    v[key] = Value::from(seconds);
    write_json(&path, &v)
}
