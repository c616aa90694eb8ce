//! Line-oriented mesh text format.
//!
//! ```text
//! # comment
//! group 1 E=2e11 A=4e-4 I=1.3e-8 rho=7800
//! node 1 0.0 0.0
//! node 2 1.0 0.0
//! elem 1 frame2d 1 2 1
//! fix 1 xyr
//! load 2 y -1000
//! ```
//!
//! Records may appear in any order; `#` starts a comment anywhere on a line.
//! The spatial dimension is the number of node coordinates (2 or 3).

use std::path::Path;

use stochafem_core::fem::DofKind;
use stochafem_core::{ElementKind, Error as CoreError, Mesh, PlaneCondition, PropertyGroup};

use crate::error::{CliError, Result};

struct Record<'a> {
    line: usize,
    words: Vec<&'a str>,
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    parse_mesh(&text, path)
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut by_kind: [Vec<Record>; 5] = Default::default();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        let Some(head) = words.first() else { continue };
        let slot = match *head {
            "group" => 0,
            "node" => 1,
            "elem" => 2,
            "fix" => 3,
            "load" => 4,
            other => return Err(err(i + 1, format!("unknown record `{other}`"))),
        };
        by_kind[slot].push(Record { line: i + 1, words });
    }
    let [groups, nodes, elems, fixes, loads] = by_kind;

    let dim = match nodes.first() {
        Some(r) => r.words.len().saturating_sub(2),
        None => return Err(err(1, "mesh has no nodes".into())),
    };
    if !(2..=3).contains(&dim) {
        return Err(err(nodes[0].line, "nodes need 2 or 3 coordinates".into()));
    }
    let mut mesh = Mesh::new(dim).map_err(|e| err(nodes[0].line, e.to_string()))?;
    let core = |line: usize| move |e: CoreError| err(line, e.to_string());

    for r in &groups {
        let g = parse_group(&r.words).map_err(|m| err(r.line, m))?;
        mesh.add_group(g).map_err(core(r.line))?;
    }
    for r in &nodes {
        if r.words.len() != dim + 2 {
            return Err(err(r.line, format!("node needs an id and {dim} coordinates")));
        }
        let id = int(r.words[1]).map_err(|m| err(r.line, m))?;
        let coords = r.words[2..]
            .iter()
            .map(|w| float(w))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| err(r.line, m))?;
        mesh.add_node(id, &coords).map_err(core(r.line))?;
    }
    for r in &elems {
        let w = &r.words;
        if w.len() < 3 {
            return Err(err(r.line, "elem needs an id, a kind, nodes and a group".into()));
        }
        let kind = ElementKind::from_name(w[2])
            .ok_or_else(|| err(r.line, format!("unknown element kind `{}`", w[2])))?;
        if w.len() != 4 + kind.node_count() {
            return Err(err(
                r.line,
                format!("{} needs {} nodes and a group", w[2], kind.node_count()),
            ));
        }
        let ints = w[3..]
            .iter()
            .chain([&w[1]])
            .map(|s| int(s))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| err(r.line, m))?;
        let (nodes, rest) = ints.split_at(kind.node_count());
        mesh.add_element(rest[1], kind, nodes, rest[0])
            .map_err(core(r.line))?;
    }
    for r in &fixes {
        if r.words.len() != 3 {
            return Err(err(r.line, "fix needs a node and dof letters".into()));
        }
        let node = int(r.words[1]).map_err(|m| err(r.line, m))?;
        let dofs = r.words[2]
            .chars()
            .map(|c| DofKind::from_letter(c).ok_or_else(|| err(r.line, format!("unknown dof `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        mesh.fix(node, &dofs).map_err(core(r.line))?;
    }
    for r in &loads {
        if r.words.len() != 4 {
            return Err(err(r.line, "load needs a node, a dof letter and a value".into()));
        }
        let node = int(r.words[1]).map_err(|m| err(r.line, m))?;
        let dof = dof_letter(r.words[2]).map_err(|m| err(r.line, m))?;
        let value = float(r.words[3]).map_err(|m| err(r.line, m))?;
        mesh.add_load(node, dof, value).map_err(core(r.line))?;
    }
    if mesh.elements().is_empty() {
        return Err(err(1, "mesh has no elements".into()));
    }
    Ok(mesh)
}

pub(crate) fn dof_letter(s: &str) -> std::result::Result<DofKind, String> {
    let mut chars = s.chars();
    match (chars.next().and_then(DofKind::from_letter), chars.next()) {
        (Some(d), None) => Ok(d),
        _ => Err(format!("`{s}` is not a dof letter (x, y, z or r)")),
    }
}

fn int(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn float(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn parse_group(words: &[&str]) -> std::result::Result<PropertyGroup, String> {
    if words.len() < 2 {
        return Err("group needs an id".into());
    }
    let mut g = PropertyGroup::new(int(words[1])?, 0.0);
    for kv in &words[2..] {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        match k {
            "E" => g.e = float(v)?,
            "A" => g.a = float(v)?,
            "I" => g.i = float(v)?,
            "nu" => g.nu = float(v)?,
            "rho" => g.rho = float(v)?,
            "t" => g.thickness = float(v)?,
            "plane" => {
                g.plane = match v {
                    "stress" => PlaneCondition::Stress,
                    "strain" => PlaneCondition::Strain,
                    _ => return Err(format!("plane must be stress or strain, got `{v}`")),
                }
            }
            _ => return Err(format!("unknown group property `{k}`")),
        }
    }
    Ok(g)
}
