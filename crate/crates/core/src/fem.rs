//! Deterministic finite element machinery.
//!
//! A [`Mesh`] owns nodes, elements, property groups, supports and point
//! loads. [`DofMap`] numbers the free degrees of freedom (fixed ones are
//! eliminated, not penalized) and [`AssemblyPlan`] caches where every
//! element entry lands in the shared global pattern, so every matrix of a
//! stochastic problem is assembled onto one pattern.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix, SparsityPattern};
use crate::math::{abs, sqrt};

pub use crate::linalg::solve_spd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ElementKind {
    Bar,
    Frame2d,
    Tri3,
}

impl ElementKind {
    pub fn node_count(self) -> usize {
        match self {
            ElementKind::Bar | ElementKind::Frame2d => 2,
            ElementKind::Tri3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Bar => "bar",
            ElementKind::Frame2d => "frame2d",
            ElementKind::Tri3 => "tri3",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "bar" => Some(ElementKind::Bar),
            "frame2d" => Some(ElementKind::Frame2d),
            "tri3" => Some(ElementKind::Tri3),
            _ => None,
        }
    }
}

/// Nodal degree of freedom kinds; `R` is the in-plane rotation of frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DofKind {
    X,
    Y,
    Z,
    R,
}

impl DofKind {
    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'x' => Some(DofKind::X),
            'y' => Some(DofKind::Y),
            'z' => Some(DofKind::Z),
            'r' => Some(DofKind::R),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            DofKind::X => 'x',
            DofKind::Y => 'y',
            DofKind::Z => 'z',
            DofKind::R => 'r',
        }
    }

    fn translation_axis(self) -> Option<usize> {
        match self {
            DofKind::X => Some(0),
            DofKind::Y => Some(1),
            DofKind::Z => Some(2),
            DofKind::R => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PlaneCondition {
    Stress,
    Strain,
}

/// Material and section data shared by a set of elements.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropertyGroup {
    pub id: usize,
    /// Young's modulus.
    pub e: f64,
    /// Cross-section area (bar, frame2d).
    pub a: f64,
    /// Second moment of area (frame2d).
    pub i: f64,
    /// Poisson ratio (tri3).
    pub nu: f64,
    /// Mass density.
    pub rho: f64,
    /// Out-of-plane thickness (tri3).
    pub thickness: f64,
    pub plane: PlaneCondition,
}

impl PropertyGroup {
    pub fn new(id: usize, e: f64) -> Self {
        Self {
            id,
            e,
            a: 0.0,
            i: 0.0,
            nu: 0.0,
            rho: 0.0,
            thickness: 1.0,
            plane: PlaneCondition::Stress,
        }
    }

    fn check_for(&self, kind: ElementKind) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidInput(format!(
                "group {} invalid for {} elements: {what}",
                self.id,
                kind.name()
            )))
        };
        if !(self.e > 0.0 && self.e.is_finite()) {
            return bad("E must be positive");
        }
        if !(self.rho >= 0.0) {
            return bad("rho must be non-negative");
        }
        match kind {
            ElementKind::Bar | ElementKind::Frame2d if !(self.a > 0.0) => bad("A must be positive"),
            ElementKind::Frame2d if !(self.i > 0.0) => bad("I must be positive"),
            ElementKind::Tri3 if !(self.thickness > 0.0) => bad("t must be positive"),
            ElementKind::Tri3 if !(0.0..0.5).contains(&self.nu) => bad("nu must lie in [0, 0.5)"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub coords: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub kind: ElementKind,
    /// Node indices (positions in [`Mesh::nodes`]).
    pub nodes: Vec<usize>,
    /// Group index (position in [`Mesh::groups`]).
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointLoad {
    pub node: usize,
    pub dof: DofKind,
    pub value: f64,
}

/// Homogeneous Dirichlet supports as (node index, dof) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub fixed: BTreeSet<(usize, DofKind)>,
}

impl BoundaryConditions {
    pub fn is_fixed(&self, node: usize, dof: DofKind) -> bool {
        self.fixed.contains(&(node, dof))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Node>,
    elements: Vec<Element>,
    groups: Vec<PropertyGroup>,
    bcs: BoundaryConditions,
    loads: Vec<PointLoad>,
    node_index: BTreeMap<usize, usize>,
    group_index: BTreeMap<usize, usize>,
    element_ids: BTreeSet<usize>,
}

impl Mesh {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("unsupported dimension {dim}")));
        }
        Ok(Self {
            dim,
            nodes: Vec::new(),
            elements: Vec::new(),
            groups: Vec::new(),
            bcs: BoundaryConditions::default(),
            loads: Vec::new(),
            node_index: BTreeMap::new(),
            group_index: BTreeMap::new(),
            element_ids: BTreeSet::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn groups(&self) -> &[PropertyGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [PropertyGroup] {
        &mut self.groups
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn point_loads(&self) -> &[PointLoad] {
        &self.loads
    }

    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn group_index(&self, id: usize) -> Option<usize> {
        self.group_index.get(&id).copied()
    }

    pub fn has_frames(&self) -> bool {
        self.elements.iter().any(|e| e.kind == ElementKind::Frame2d)
    }

    pub fn add_node(&mut self, id: usize, coords: &[f64]) -> Result<usize> {
        if coords.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "node {id}: expected {} coordinates, got {}",
                self.dim,
                coords.len()
            )));
        }
        if self.node_index.contains_key(&id) {
            return Err(Error::InvalidInput(format!("duplicate node {id}")));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        self.nodes.push(Node { id, coords: c });
        self.node_index.insert(id, self.nodes.len() - 1);
        Ok(self.nodes.len() - 1)
    }

    pub fn add_group(&mut self, group: PropertyGroup) -> Result<usize> {
        if self.group_index.contains_key(&group.id) {
            return Err(Error::InvalidInput(format!("duplicate group {}", group.id)));
        }
        self.group_index.insert(group.id, self.groups.len());
        self.groups.push(group);
        Ok(self.groups.len() - 1)
    }

    pub fn add_element(
        &mut self,
        id: usize,
        kind: ElementKind,
        node_ids: &[usize],
        group_id: usize,
    ) -> Result<usize> {
        if !self.element_ids.insert(id) {
            return Err(Error::InvalidInput(format!("duplicate element {id}")));
        }
        if node_ids.len() != kind.node_count() {
            return Err(Error::InvalidInput(format!(
                "element {id}: {} needs {} nodes",
                kind.name(),
                kind.node_count()
            )));
        }
        if matches!(kind, ElementKind::Frame2d | ElementKind::Tri3) && self.dim != 2 {
            return Err(Error::InvalidInput(format!(
                "element {id}: {} requires a 2D mesh",
                kind.name()
            )));
        }
        let nodes = node_ids
            .iter()
            .map(|n| {
                self.node_index(*n).ok_or_else(|| {
                    Error::InvalidInput(format!("element {id} references missing node {n}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let group = self.group_index(group_id).ok_or_else(|| {
            Error::InvalidInput(format!("element {id} references missing group {group_id}"))
        })?;
        self.groups[group].check_for(kind)?;
        let element = Element {
            id,
            kind,
            nodes,
            group,
        };
        if !(self.measure(&element) > 0.0) {
            return Err(Error::DegenerateElement(id));
        }
        self.elements.push(element);
        Ok(self.elements.len() - 1)
    }

    pub fn fix(&mut self, node_id: usize, dofs: &[DofKind]) -> Result<()> {
        let n = self.node_index(node_id).ok_or_else(|| {
            Error::InvalidInput(format!("support references missing node {node_id}"))
        })?;
        for &d in dofs {
            self.bcs.fixed.insert((n, d));
        }
        Ok(())
    }

    pub fn add_load(&mut self, node_id: usize, dof: DofKind, value: f64) -> Result<()> {
        let node = self.node_index(node_id).ok_or_else(|| {
            Error::InvalidInput(format!("load references missing node {node_id}"))
        })?;
        self.loads.push(PointLoad { node, dof, value });
        Ok(())
    }

    pub fn element_coords(&self, e: &Element) -> Vec<[f64; 3]> {
        e.nodes.iter().map(|&n| self.nodes[n].coords).collect()
    }

    /// Length of line elements, area of triangles.
    pub fn measure(&self, e: &Element) -> f64 {
        element_measure(e.kind, &self.element_coords(e))
    }

    /// Element-centroid value of a nodal field (linear interpolation).
    pub fn centroid_value(&self, e: &Element, nodal: &[f64]) -> f64 {
        e.nodes.iter().map(|&n| nodal[n]).sum::<f64>() / e.nodes.len() as f64
    }

    /// Lumped nodal integration weights: every element gives
    /// `measure / nodes-per-element` to each of its nodes.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for e in &self.elements {
            let share = self.measure(e) / e.nodes.len() as f64;
            for &n in &e.nodes {
                w[n] += share;
            }
        }
        w
    }
}

fn element_measure(kind: ElementKind, c: &[[f64; 3]]) -> f64 {
    match kind {
        ElementKind::Bar | ElementKind::Frame2d => {
            let d: [f64; 3] = core::array::from_fn(|k| c[1][k] - c[0][k]);
            sqrt(d.iter().map(|v| v * v).sum())
        }
        ElementKind::Tri3 => abs(signed_double_area(c)) / 2.0,
    }
}

fn signed_double_area(c: &[[f64; 3]]) -> f64 {
    (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1])
}

/// Free-DOF numbering. Fixed DOFs, and rotations of nodes not attached to
/// any frame element, get no equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    layout: Vec<DofKind>,
    equations: Vec<Option<usize>>,
    n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let mut layout = match mesh.dim {
            1 => vec![DofKind::X],
            2 => vec![DofKind::X, DofKind::Y],
            _ => vec![DofKind::X, DofKind::Y, DofKind::Z],
        };
        let mut rotating = vec![false; mesh.nodes.len()];
        if mesh.has_frames() {
            layout.push(DofKind::R);
            for e in mesh.elements.iter().filter(|e| e.kind == ElementKind::Frame2d) {
                for &n in &e.nodes {
                    rotating[n] = true;
                }
            }
        }
        let mut equations = Vec::with_capacity(mesh.nodes.len() * layout.len());
        let mut n_free = 0;
        for (node, rot) in rotating.iter().enumerate() {
            for &kind in &layout {
                let free = !mesh.bcs.is_fixed(node, kind) && (kind != DofKind::R || *rot);
                if free {
                    equations.push(Some(n_free));
                    n_free += 1;
                } else {
                    equations.push(None);
                }
            }
        }
        if n_free == 0 {
            return Err(Error::InvalidInput("no free degrees of freedom".into()));
        }
        Ok(Self {
            layout,
            equations,
            n_free,
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn layout(&self) -> &[DofKind] {
        &self.layout
    }

    /// Equation number of `(node, kind)`, `None` if fixed or absent.
    pub fn equation(&self, node: usize, kind: DofKind) -> Option<usize> {
        let local = self.layout.iter().position(|k| *k == kind)?;
        self.equations[node * self.layout.len() + local]
    }

    /// Equations of an element's DOFs in element-matrix order.
    pub fn element_equations(&self, mesh: &Mesh, e: &Element) -> Vec<Option<usize>> {
        let kinds: &[DofKind] = match (e.kind, mesh.dim) {
            (ElementKind::Frame2d, _) => &[DofKind::X, DofKind::Y, DofKind::R],
            (_, 1) => &[DofKind::X],
            (_, 2) => &[DofKind::X, DofKind::Y],
            _ => &[DofKind::X, DofKind::Y, DofKind::Z],
        };
        e.nodes
            .iter()
            .flat_map(|&n| kinds.iter().map(move |&k| self.equation(n, k)))
            .collect()
    }

    /// (node index, dof) owning each equation.
    pub fn equation_owners(&self) -> Vec<(usize, DofKind)> {
        let per = self.layout.len();
        let mut owners = vec![(0, DofKind::X); self.n_free];
        for (slot, eq) in self.equations.iter().enumerate() {
            if let Some(eq) = eq {
                owners[*eq] = (slot / per, self.layout[slot % per]);
            }
        }
        owners
    }
}

/// Selects which part of an element's stiffness to build.
///
/// Frames split into independent axial (EA) and bending (EI) matrices so
/// the two can carry different random multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StiffnessPart {
    Full,
    Axial,
    Bending,
}

/// Element stiffness in global axes, scaled by `weight`.
///
/// `weight` is the element-centroid value of the modulus multiplier (the
/// mean field for the mean matrix, `√λᵢ ωᵢ` for the KL matrices).
pub fn element_stiffness(
    kind: ElementKind,
    coords: &[[f64; 3]],
    dim: usize,
    props: &PropertyGroup,
    weight: f64,
    part: StiffnessPart,
) -> Result<DenseMatrix> {
    if coords.len() != kind.node_count() {
        return Err(Error::ShapeMismatch {
            what: "element coordinates",
            expected: kind.node_count(),
            got: coords.len(),
        });
    }
    if !(element_measure(kind, coords) > 0.0) {
        return Err(Error::InvalidInput(format!(
            "zero-measure {} element",
            kind.name()
        )));
    }
    let mut k = match (kind, part) {
        (ElementKind::Bar, StiffnessPart::Bending) => DenseMatrix::zeros(2 * dim, 2 * dim),
        (ElementKind::Bar, _) => bar_stiffness(coords, dim, props),
        (ElementKind::Frame2d, _) => frame2d_stiffness(coords, props, part),
        (ElementKind::Tri3, StiffnessPart::Full) => tri3_stiffness(coords, props),
        (ElementKind::Tri3, _) => {
            return Err(Error::InvalidInput(
                "axial/bending split is only defined for line elements".into(),
            ))
        }
    };
    k.scale(weight);
    Ok(k)
}

fn bar_stiffness(c: &[[f64; 3]], dim: usize, p: &PropertyGroup) -> DenseMatrix {
    let d: Vec<f64> = (0..dim).map(|k| c[1][k] - c[0][k]).collect();
    let l = sqrt(d.iter().map(|v| v * v).sum());
    let cos: Vec<f64> = d.iter().map(|v| v / l).collect();
    let ea_l = p.e * p.a / l;
    DenseMatrix::from_fn(2 * dim, 2 * dim, |i, j| {
        let sign = if (i < dim) == (j < dim) { 1.0 } else { -1.0 };
        sign * ea_l * cos[i % dim] * cos[j % dim]
    })
}

fn frame2d_stiffness(c: &[[f64; 3]], p: &PropertyGroup, part: StiffnessPart) -> DenseMatrix {
    let dx = c[1][0] - c[0][0];
    let dy = c[1][1] - c[0][1];
    let l = sqrt(dx * dx + dy * dy);
    let (cs, sn) = (dx / l, dy / l);
    let mut local = DenseMatrix::zeros(6, 6);
    if part != StiffnessPart::Bending {
        let a = p.e * p.a / l;
        local[(0, 0)] = a;
        local[(0, 3)] = -a;
        local[(3, 0)] = -a;
        local[(3, 3)] = a;
    }
    if part != StiffnessPart::Axial {
        let b = p.e * p.i / (l * l * l);
        let idx = [1, 2, 4, 5];
        let m = [
            [12.0, 6.0 * l, -12.0, 6.0 * l],
            [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
            [-12.0, -6.0 * l, 12.0, -6.0 * l],
            [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
        ];
        for (a, &i) in idx.iter().enumerate() {
            for (bcol, &j) in idx.iter().enumerate() {
                local[(i, j)] = b * m[a][bcol];
            }
        }
    }
    // Local-to-global rotation, one 3x3 block per node.
    let t = DenseMatrix::from_fn(6, 6, |i, j| {
        if i / 3 != j / 3 {
            return 0.0;
        }
        match (i % 3, j % 3) {
            (0, 0) | (1, 1) => cs,
            (0, 1) => sn,
            (1, 0) => -sn,
            (2, 2) => 1.0,
            _ => 0.0,
        }
    });
    t.transpose().matmul(&local).matmul(&t)
}

fn tri3_stiffness(c: &[[f64; 3]], p: &PropertyGroup) -> DenseMatrix {
    let two_a = signed_double_area(c);
    let area = abs(two_a) / 2.0;
    let b = [c[1][1] - c[2][1], c[2][1] - c[0][1], c[0][1] - c[1][1]];
    let cc = [c[2][0] - c[1][0], c[0][0] - c[2][0], c[1][0] - c[0][0]];
    let mut bm = DenseMatrix::zeros(3, 6);
    for i in 0..3 {
        bm[(0, 2 * i)] = b[i] / two_a;
        bm[(1, 2 * i + 1)] = cc[i] / two_a;
        bm[(2, 2 * i)] = cc[i] / two_a;
        bm[(2, 2 * i + 1)] = b[i] / two_a;
    }
    let (e, nu) = (p.e, p.nu);
    let d = match p.plane {
        PlaneCondition::Stress => {
            let f = e / (1.0 - nu * nu);
            DenseMatrix::from_row_major(
                3,
                3,
                vec![f, f * nu, 0.0, f * nu, f, 0.0, 0.0, 0.0, f * (1.0 - nu) / 2.0],
            )
        }
        PlaneCondition::Strain => {
            let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            DenseMatrix::from_row_major(
                3,
                3,
                vec![
                    f * (1.0 - nu),
                    f * nu,
                    0.0,
                    f * nu,
                    f * (1.0 - nu),
                    0.0,
                    0.0,
                    0.0,
                    f * (1.0 - 2.0 * nu) / 2.0,
                ],
            )
        }
    };
    let mut k = bm.transpose().matmul(&d).matmul(&bm);
    k.scale(p.thickness * area);
    k
}

/// Maps element matrix entries onto the reduced global pattern.
#[derive(Debug, Clone)]
pub struct AssemblyPlan {
    pattern: Arc<SparsityPattern>,
    /// Per element: global pattern position of each local (i, j), row-major.
    positions: Vec<Vec<Option<usize>>>,
    n_free: usize,
}

impl AssemblyPlan {
    pub fn new(mesh: &Mesh, dofs: &DofMap) -> Self {
        let element_eqs: Vec<Vec<Option<usize>>> = mesh
            .elements
            .iter()
            .map(|e| dofs.element_equations(mesh, e))
            .collect();
        let pattern = Arc::new(SparsityPattern::from_entries(
            dofs.n_free(),
            element_eqs.iter().flat_map(|eqs| {
                let free: Vec<usize> = eqs.iter().flatten().copied().collect();
                let pairs: Vec<(usize, usize)> = free
                    .iter()
                    .flat_map(|&i| free.iter().map(move |&j| (i, j)))
                    .collect();
                pairs
            }),
        ));
        let positions = element_eqs
            .iter()
            .map(|eqs| {
                let mut pos = Vec::with_capacity(eqs.len() * eqs.len());
                for ei in eqs {
                    for ej in eqs {
                        pos.push(match (ei, ej) {
                            (Some(i), Some(j)) => pattern.position(*i, *j),
                            _ => None,
                        });
                    }
                }
                pos
            })
            .collect();
        Self {
            pattern,
            positions,
            n_free: dofs.n_free(),
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Scatter-adds element matrices in element order; fixed rows and
    /// columns are dropped.
    pub fn assemble_with<F>(&self, mut element_matrix: F) -> Result<SparseMatrix>
    where
        F: FnMut(usize) -> Result<DenseMatrix>,
    {
        let mut k = SparseMatrix::zeros(self.pattern.clone());
        let values = k.values_mut();
        for (e, pos) in self.positions.iter().enumerate() {
            let ke = element_matrix(e)?;
            let n = ke.rows();
            if n * n != pos.len() {
                return Err(Error::ShapeMismatch {
                    what: "element matrix",
                    expected: pos.len(),
                    got: n * n,
                });
            }
            for (p, v) in pos.iter().zip(ke.as_slice()) {
                if let Some(p) = p {
                    values[*p] += v;
                }
            }
        }
        Ok(k)
    }
}

/// Assembles precomputed element matrices (one per mesh element, in order).
pub fn assemble_global(plan: &AssemblyPlan, element_matrices: &[DenseMatrix]) -> Result<SparseMatrix> {
    if element_matrices.len() != plan.positions.len() {
        return Err(Error::ShapeMismatch {
            what: "element matrices",
            expected: plan.positions.len(),
            got: element_matrices.len(),
        });
    }
    plan.assemble_with(|e| Ok(element_matrices[e].clone()))
}

/// Unit-weight element matrices for every element of the mesh.
pub fn unit_element_matrices(mesh: &Mesh, part: StiffnessPart) -> Result<Vec<DenseMatrix>> {
    mesh.elements
        .iter()
        .map(|e| {
            element_stiffness(
                e.kind,
                &mesh.element_coords(e),
                mesh.dim,
                &mesh.groups[e.group],
                1.0,
                part,
            )
            .map_err(|_| Error::DegenerateElement(e.id))
        })
        .collect()
}

/// Deterministic stiffness with unit modulus multiplier everywhere.
pub fn assemble_stiffness(
    mesh: &Mesh,
    plan: &AssemblyPlan,
    part: StiffnessPart,
) -> Result<SparseMatrix> {
    assemble_global(plan, &unit_element_matrices(mesh, part)?)
}

/// Point loads from the mesh; loads on fixed DOFs are dropped.
pub fn nodal_load_vector(mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    let mut f = vec![0.0; dofs.n_free()];
    for l in &mesh.loads {
        if let Some(eq) = dofs.equation(l.node, l.dof) {
            f[eq] += l.value;
        }
    }
    f
}

/// Lumped gravity load: each element sends `rho · measure · t · g / nodes`
/// to each node along `direction` (`t` is the section area for line
/// elements, the thickness for triangles).
pub fn self_weight_load(mesh: &Mesh, dofs: &DofMap, g: f64, direction: [f64; 3]) -> Vec<f64> {
    let mut f = vec![0.0; dofs.n_free()];
    for e in &mesh.elements {
        let grp = &mesh.groups[e.group];
        let t = match e.kind {
            ElementKind::Tri3 => grp.thickness,
            _ => grp.a,
        };
        let share = grp.rho * mesh.measure(e) * t * g / e.nodes.len() as f64;
        for &n in &e.nodes {
            for kind in [DofKind::X, DofKind::Y, DofKind::Z] {
                let axis = kind.translation_axis().unwrap_or(0);
                if axis >= mesh.dim || direction[axis] == 0.0 {
                    continue;
                }
                if let Some(eq) = dofs.equation(n, kind) {
                    f[eq] += share * direction[axis];
                }
            }
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::norm2;

    fn steel(id: usize) -> PropertyGroup {
        PropertyGroup {
            a: 1.0,
            i: 1.0,
            nu: 0.25,
            rho: 1.0,
            ..PropertyGroup::new(id, 1.0)
        }
    }

    #[test]
    fn unit_bar_is_textbook_matrix() {
        let k = element_stiffness(
            ElementKind::Bar,
            &[[0.0; 3], [1.0, 0.0, 0.0]],
            1,
            &steel(1),
            1.0,
            StiffnessPart::Full,
        )
        .unwrap();
        assert_eq!(k.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn zero_weight_gives_zero_matrix() {
        let k = element_stiffness(
            ElementKind::Tri3,
            &[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            2,
            &steel(1),
            0.0,
            StiffnessPart::Full,
        )
        .unwrap();
        assert!(k.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rigid_body_modes_are_in_the_null_space() {
        let tri = [[0.3, 0.1, 0.0], [2.0, 0.4, 0.0], [0.9, 1.7, 0.0]];
        let k = element_stiffness(ElementKind::Tri3, &tri, 2, &steel(1), 1.0, StiffnessPart::Full)
            .unwrap();
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ty = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let rot: Vec<f64> = tri.iter().flat_map(|c| [-c[1], c[0]]).collect();
        for v in [&tx[..], &ty[..], &rot[..]] {
            assert!(norm2(&k.matvec(v)) < 1e-10);
        }

        let fr = [[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]];
        let k = element_stiffness(ElementKind::Frame2d, &fr, 2, &steel(1), 1.0, StiffnessPart::Full)
            .unwrap();
        let rot = [0.0, 0.0, 1.0, -4.0, 3.0, 1.0];
        assert!(norm2(&k.matvec(&rot)) < 1e-10);
        assert!(norm2(&k.matvec(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])) < 1e-10);
        assert!(k.max_abs_asymmetry() < 1e-12);

        // A bar only resists stretching: any common translation is free.
        let bar = [[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]];
        let k = element_stiffness(ElementKind::Bar, &bar, 3, &steel(1), 1.0, StiffnessPart::Full)
            .unwrap();
        assert!(norm2(&k.matvec(&[0.3, -1.0, 2.0, 0.3, -1.0, 2.0])) < 1e-12);
    }

    #[test]
    fn frame_splits_into_axial_plus_bending() {
        let fr = [[1.0, 1.0, 0.0], [2.5, 3.0, 0.0]];
        let p = steel(1);
        let full = element_stiffness(ElementKind::Frame2d, &fr, 2, &p, 1.0, StiffnessPart::Full).unwrap();
        let ax = element_stiffness(ElementKind::Frame2d, &fr, 2, &p, 1.0, StiffnessPart::Axial).unwrap();
        let be = element_stiffness(ElementKind::Frame2d, &fr, 2, &p, 1.0, StiffnessPart::Bending).unwrap();
        for i in 0..36 {
            let s = ax.as_slice()[i] + be.as_slice()[i];
            assert!((s - full.as_slice()[i]).abs() < 1e-12);
        }
    }

    fn two_bars() -> Mesh {
        let mut m = Mesh::new(1).unwrap();
        m.add_group(steel(1)).unwrap();
        for (id, x) in [(1, 0.0), (2, 1.0), (3, 2.0)] {
            m.add_node(id, &[x]).unwrap();
        }
        m.add_element(1, ElementKind::Bar, &[1, 2], 1).unwrap();
        m.add_element(2, ElementKind::Bar, &[2, 3], 1).unwrap();
        m.fix(1, &[DofKind::X]).unwrap();
        m.fix(3, &[DofKind::X]).unwrap();
        m
    }

    #[test]
    fn series_bars_give_stiffness_two() {
        let m = two_bars();
        let dofs = DofMap::new(&m).unwrap();
        assert_eq!(dofs.n_free(), 1);
        let plan = AssemblyPlan::new(&m, &dofs);
        let k = assemble_stiffness(&m, &plan, StiffnessPart::Full).unwrap();
        assert_eq!(k.get(0, 0), 2.0);
        let zero = assemble_global(&plan, &[DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2)]).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_elements_are_named() {
        let mut m = Mesh::new(2).unwrap();
        m.add_group(steel(1)).unwrap();
        m.add_node(1, &[0.0, 0.0]).unwrap();
        m.add_node(2, &[1.0, 0.0]).unwrap();
        m.add_node(3, &[2.0, 0.0]).unwrap();
        assert_eq!(
            m.add_element(7, ElementKind::Tri3, &[1, 2, 3], 1),
            Err(Error::DegenerateElement(7))
        );
        m.add_node(4, &[1.0, 0.0]).unwrap();
        assert_eq!(
            m.add_element(8, ElementKind::Bar, &[2, 4], 1),
            Err(Error::DegenerateElement(8))
        );
    }

    #[test]
    fn self_weight_lumps_equally() {
        let mut m = Mesh::new(2).unwrap();
        // rho * area * t * g = 3 with area 1.5, t = 2, g = 1.
        m.add_group(PropertyGroup {
            rho: 1.0,
            thickness: 2.0,
            nu: 0.2,
            ..PropertyGroup::new(1, 1.0)
        })
        .unwrap();
        m.add_node(1, &[0.0, 0.0]).unwrap();
        m.add_node(2, &[1.5, 0.0]).unwrap();
        m.add_node(3, &[0.0, 2.0]).unwrap();
        m.add_element(1, ElementKind::Tri3, &[1, 2, 3], 1).unwrap();
        let dofs = DofMap::new(&m).unwrap();
        let f = self_weight_load(&m, &dofs, 1.0, [0.0, -1.0, 0.0]);
        for n in 0..3 {
            assert_eq!(f[dofs.equation(n, DofKind::Y).unwrap()], -1.0);
            assert_eq!(f[dofs.equation(n, DofKind::X).unwrap()], 0.0);
        }
        assert!(self_weight_load(&m, &dofs, 0.0, [0.0, -1.0, 0.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rotations_of_bar_only_nodes_are_eliminated() {
        let mut m = Mesh::new(2).unwrap();
        m.add_group(steel(1)).unwrap();
        m.add_node(1, &[0.0, 0.0]).unwrap();
        m.add_node(2, &[1.0, 0.0]).unwrap();
        m.add_node(3, &[1.0, 1.0]).unwrap();
        m.add_element(1, ElementKind::Frame2d, &[1, 2], 1).unwrap();
        m.add_element(2, ElementKind::Bar, &[2, 3], 1).unwrap();
        let dofs = DofMap::new(&m).unwrap();
        assert!(dofs.equation(2, DofKind::R).is_none());
        assert!(dofs.equation(1, DofKind::R).is_some());
        assert_eq!(dofs.n_free(), 8);
    }
}
