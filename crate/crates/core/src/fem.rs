//! Structured P1 meshes and Galerkin assembly of the metric stiffness and mass
//! forms.
//!
//! Nodes are numbered `i_s * nodes_u + i_u`, so the assembled matrices are
//! banded with half-bandwidth `nodes_u + 1` apart from the rows coupled by a
//! quasi-periodic fold.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CurvatureProfile, Disk, MetricField};
use crate::linalg::{BandedPencil, HermitianMatrix, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("mesh needs at least {min} nodes along {axis}, got {got}")]
    TooFewNodes {
        axis: &'static str,
        min: usize,
        got: usize,
    },
    #[error("hole of radius {radius} removes no element (mesh spacing {spacing})")]
    HoleTooCoarse { radius: f64, spacing: f64 },
    #[error("cut at s = {0} does not coincide with a mesh line")]
    CutOffMeshLine(f64),
    #[error("quasi-periodic phase must have modulus 1, got {0}")]
    PhaseNotUnimodular(f64),
    #[error("metric not positive definite at ({s}, {u})")]
    NotPositiveDefinite { s: f64, u: f64 },
    #[error("no degrees of freedom remain after applying boundary conditions")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCondition {
    Dirichlet,
    Neumann,
}

/// Condition on the `s = 0` and `s = S` edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    Dirichlet,
    Neumann,
    /// `u(S, ·) = θ̄ u(0, ·)` with `|θ| = 1`.
    QuasiPeriodic(Complex64),
}

impl EndCondition {
    pub fn periodic() -> Self {
        Self::QuasiPeriodic(Complex64::new(1.0, 0.0))
    }

    pub fn antiperiodic() -> Self {
        Self::QuasiPeriodic(Complex64::new(-1.0, 0.0))
    }

    /// Floquet phase `exp(2πi l / count)`, exact at `θ = ±1`.
    pub fn floquet(l: usize, count: usize) -> Self {
        let theta = if l == 0 {
            Complex64::new(1.0, 0.0)
        } else if 2 * l == count {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, std::f64::consts::TAU * l as f64 / count as f64)
        };
        Self::QuasiPeriodic(theta)
    }
}

impl From<EdgeCondition> for EndCondition {
    fn from(c: EdgeCondition) -> Self {
        match c {
            EdgeCondition::Dirichlet => EndCondition::Dirichlet,
            EdgeCondition::Neumann => EndCondition::Neumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    /// Condition on `u = 0` and `u = ε` (ignored in one dimension).
    pub sides: EdgeCondition,
    pub ends: EndCondition,
}

impl BoundarySpec {
    pub fn new(sides: EdgeCondition, ends: EndCondition) -> Result<Self, FemError> {
        let ends = match ends {
            EndCondition::QuasiPeriodic(theta) => {
                let modulus = theta.norm();
                if (modulus - 1.0).abs() > 1e-12 {
                    return Err(FemError::PhaseNotUnimodular(modulus));
                }
                EndCondition::QuasiPeriodic(theta / modulus)
            }
            other => other,
        };
        Ok(Self { sides, ends })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
    PeriodicMaster,
    PeriodicSlave,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    length: f64,
    width: f64,
    nodes_s: usize,
    /// 1 for a one-dimensional mesh.
    nodes_u: usize,
    coords: Vec<(f64, f64)>,
    segments: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
    removed: Vec<bool>,
    hole_boundary: Vec<bool>,
    removed_elements: usize,
}

/// Structured mesh of `[0, length]` (`nodes_u = None`) or
/// `[0, length] x [0, width]` with every grid cell split into two triangles.
pub fn build_mesh(
    length: f64,
    width: f64,
    nodes_s: usize,
    nodes_u: Option<usize>,
    hole: Option<Disk>,
) -> Result<Mesh, FemError> {
    if nodes_s < 4 {
        return Err(FemError::TooFewNodes {
            axis: "s",
            min: 4,
            got: nodes_s,
        });
    }
    let hs = length / (nodes_s - 1) as f64;
    let Some(nu) = nodes_u else {
        let coords = (0..nodes_s).map(|i| (i as f64 * hs, 0.0)).collect();
        let segments = (0..nodes_s - 1).map(|i| [i, i + 1]).collect();
        return Ok(Mesh {
            length,
            width: 0.0,
            nodes_s,
            nodes_u: 1,
            coords,
            segments,
            triangles: Vec::new(),
            removed: vec![false; nodes_s],
            hole_boundary: vec![false; nodes_s],
            removed_elements: 0,
        });
    };
    if nu < 2 {
        return Err(FemError::TooFewNodes {
            axis: "u",
            min: 2,
            got: nu,
        });
    }
    let hu = width / (nu - 1) as f64;
    let idx = |i: usize, j: usize| i * nu + j;
    let mut coords = Vec::with_capacity(nodes_s * nu);
    for i in 0..nodes_s {
        for j in 0..nu {
            coords.push((i as f64 * hs, j as f64 * hu));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nodes_s - 1) * (nu - 1));
    let mut dropped = 0;
    let mut keep_node = vec![false; coords.len()];
    let mut touches_removed = vec![false; coords.len()];
    for i in 0..nodes_s - 1 {
        for j in 0..nu - 1 {
            let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            for tri in [[p00, p10, p11], [p00, p11, p01]] {
                let cs = tri.iter().map(|&p| coords[p].0).sum::<f64>() / 3.0;
                let cu = tri.iter().map(|&p| coords[p].1).sum::<f64>() / 3.0;
                if hole.is_some_and(|d| d.contains(cs, cu)) {
                    dropped += 1;
                    tri.iter().for_each(|&p| touches_removed[p] = true);
                } else {
                    tri.iter().for_each(|&p| keep_node[p] = true);
                    triangles.push(tri);
                }
            }
        }
    }
    if let Some(d) = hole {
        let spacing = hs.max(hu);
        if dropped == 0 && d.radius > 2.0 * spacing {
            return Err(FemError::HoleTooCoarse {
                radius: d.radius,
                spacing,
            });
        }
    }
    let removed: Vec<bool> = keep_node.iter().map(|k| !k).collect();
    let hole_boundary = (0..coords.len())
        .map(|p| keep_node[p] && touches_removed[p])
        .collect();
    Ok(Mesh {
        length,
        width,
        nodes_s,
        nodes_u: nu,
        coords,
        segments: Vec::new(),
        triangles,
        removed,
        hole_boundary,
        removed_elements: dropped,
    })
}

impl Mesh {
    pub fn dimension(&self) -> usize {
        if self.triangles.is_empty() && !self.segments.is_empty() {
            1
        } else {
            2
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn nodes_s(&self) -> usize {
        self.nodes_s
    }

    pub fn nodes_u(&self) -> usize {
        self.nodes_u
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn element_count(&self) -> usize {
        self.segments.len() + self.triangles.len()
    }

    pub fn removed_elements(&self) -> usize {
        self.removed_elements
    }

    pub fn is_removed(&self, node: usize) -> bool {
        self.removed[node]
    }

    pub fn s_lines(&self) -> Vec<f64> {
        (0..self.nodes_s)
            .map(|i| self.coords[i * self.nodes_u].0)
            .collect()
    }

    fn column(&self, node: usize) -> usize {
        node / self.nodes_u
    }

    fn row(&self, node: usize) -> usize {
        node % self.nodes_u
    }

    /// Boundary role of a node under the given conditions.
    pub fn tag(&self, node: usize, bc: &BoundarySpec) -> BoundaryTag {
        if self.hole_boundary[node] {
            return BoundaryTag::Dirichlet;
        }
        let (col, row) = (self.column(node), self.row(node));
        let on_side = self.nodes_u > 1 && (row == 0 || row == self.nodes_u - 1);
        if on_side && bc.sides == EdgeCondition::Dirichlet {
            return BoundaryTag::Dirichlet;
        }
        let end = col == 0 || col == self.nodes_s - 1;
        if end {
            return match bc.ends {
                EndCondition::Dirichlet => BoundaryTag::Dirichlet,
                EndCondition::Neumann => BoundaryTag::Neumann,
                EndCondition::QuasiPeriodic(_) if col == 0 => BoundaryTag::PeriodicMaster,
                EndCondition::QuasiPeriodic(_) => BoundaryTag::PeriodicSlave,
            };
        }
        if on_side {
            BoundaryTag::Neumann
        } else {
            BoundaryTag::Interior
        }
    }

    /// Plain-text dump: node lines `v s u`, element lines `e p q [r]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (p, &(s, u)) in self.coords.iter().enumerate() {
            if !self.removed[p] {
                let _ = writeln!(out, "v {p} {s:.16e} {u:.16e}");
            }
        }
        for seg in &self.segments {
            let _ = writeln!(out, "e {} {}", seg[0], seg[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "e {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Degree of freedom attached to a mesh node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeDof {
    Removed,
    Fixed,
    Free(usize),
    /// Value is `phase` times the value of dof `index`.
    Slaved {
        index: usize,
        phase: Complex64,
    },
}

#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub stiffness: HermitianMatrix,
    pub mass: HermitianMatrix,
    /// Node coordinates carried by each matrix index.
    pub dof_coords: Vec<(f64, f64)>,
    pub node_dofs: Vec<NodeDof>,
    pub s_lines: Vec<f64>,
}

impl AssembledForms {
    pub fn order(&self) -> usize {
        self.stiffness.order()
    }

    /// Triplets `row col re im` of the nonzero entries of a matrix.
    pub fn triplets(matrix: &HermitianMatrix) -> String {
        let n = matrix.order();
        let mut out = String::new();
        for j in 0..n {
            for i in 0..n {
                let z = matrix.get(i, j);
                if z.re != 0.0 || z.im != 0.0 {
                    let _ = writeln!(out, "{i} {j} {:.16e} {:.16e}", z.re, z.im);
                }
            }
        }
        out
    }
}

/// Potential added to the stiffness form: `A += ∫ V φ_p φ_q dvol`.
pub type Potential<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

pub fn assemble(
    mesh: &Mesh,
    g: &MetricField,
    bc: &BoundarySpec,
) -> Result<AssembledForms, FemError> {
    assemble_with_potential(mesh, g, bc, None)
}

pub fn assemble_with_potential(
    mesh: &Mesh,
    g: &MetricField,
    bc: &BoundarySpec,
    potential: Option<Potential<'_>>,
) -> Result<AssembledForms, FemError> {
    let node_dofs = number_dofs(mesh, bc);
    let mut dof_coords = Vec::new();
    for (p, d) in node_dofs.iter().enumerate() {
        if let NodeDof::Free(_) = d {
            dof_coords.push(mesh.coords[p]);
        }
    }
    let n = dof_coords.len();
    if n == 0 {
        return Err(FemError::Empty);
    }
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    let mut b = vec![Complex64::new(0.0, 0.0); n * n];
    let scatter = |mat: &mut [Complex64], nodes: &[usize], local: &[f64]| {
        let k = nodes.len();
        for (qi, &q) in nodes.iter().enumerate() {
            let Some((cq, qq)) = coefficient(node_dofs[q]) else {
                continue;
            };
            for (pi, &p) in nodes.iter().enumerate() {
                let Some((cp, pp)) = coefficient(node_dofs[p]) else {
                    continue;
                };
                mat[qq * n + pp] += cp.conj() * cq * local[pi * k + qi];
            }
        }
    };

    if mesh.dimension() == 1 {
        let gl = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        for seg in &mesh.segments {
            let (s0, s1) = (mesh.coords[seg[0]].0, mesh.coords[seg[1]].0);
            let h = s1 - s0;
            let mut ka = [0.0; 4];
            let mut kb = [0.0; 4];
            for &t in &gl {
                let s = s0 + t * h;
                let m = g.eval(s, 0.0);
                if !(m.conformal > 0.0 && m.base[0] > 0.0) {
                    return Err(FemError::NotPositiveDefinite { s, u: 0.0 });
                }
                let dens = m.line_density();
                let w = 0.5 * h;
                let phi = [1.0 - t, t];
                let dphi = [-1.0 / h, 1.0 / h];
                let v = potential.map_or(0.0, |f| f(s));
                for p in 0..2 {
                    for q in 0..2 {
                        ka[p * 2 + q] +=
                            w * (dphi[p] * dphi[q] / (dens * dens) + v * phi[p] * phi[q]) * dens;
                        kb[p * 2 + q] += w * phi[p] * phi[q] * dens;
                    }
                }
            }
            scatter(&mut a, seg, &ka);
            scatter(&mut b, seg, &kb);
        }
    } else {
        const QP: [[f64; 3]; 3] = [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        for tri in &mesh.triangles {
            let [x0, x1, x2] = tri.map(|p| mesh.coords[p]);
            let det = (x1.0 - x0.0) * (x2.1 - x0.1) - (x2.0 - x0.0) * (x1.1 - x0.1);
            let area = 0.5 * det.abs();
            // gradients of the barycentric coordinates
            let grads = [
                ((x1.1 - x2.1) / det, (x2.0 - x1.0) / det),
                ((x2.1 - x0.1) / det, (x0.0 - x2.0) / det),
                ((x0.1 - x1.1) / det, (x1.0 - x0.0) / det),
            ];
            let mut ka = [0.0; 9];
            let mut kb = [0.0; 9];
            for bary in &QP {
                let s = bary[0] * x0.0 + bary[1] * x1.0 + bary[2] * x2.0;
                let u = bary[0] * x0.1 + bary[1] * x1.1 + bary[2] * x2.1;
                let m = g.eval(s, u);
                if !m.is_positive_definite() {
                    return Err(FemError::NotPositiveDefinite { s, u });
                }
                let w = area / 3.0;
                // g^{ij} √det g from the base tensor; the conformal weight cancels in 2D
                let [g11, g12, g22] = m.base;
                let bdet = m.base_det();
                let root = bdet.sqrt();
                let (i11, i12, i22) = (g22 / bdet * root, -g12 / bdet * root, g11 / bdet * root);
                let vol = m.sqrt_det();
                for p in 0..3 {
                    for q in 0..3 {
                        let (gp, gq) = (grads[p], grads[q]);
                        let stiff = i11 * gp.0 * gq.0
                            + i12 * (gp.0 * gq.1 + gp.1 * gq.0)
                            + i22 * gp.1 * gq.1;
                        ka[p * 3 + q] += w * stiff;
                        kb[p * 3 + q] += w * vol * bary[p] * bary[q];
                    }
                }
                if let Some(f) = potential {
                    let v = f(s);
                    for p in 0..3 {
                        for q in 0..3 {
                            ka[p * 3 + q] += w * v * vol * bary[p] * bary[q];
                        }
                    }
                }
            }
            scatter(&mut a, tri, &ka);
            scatter(&mut b, tri, &kb);
        }
    }

    Ok(AssembledForms {
        stiffness: HermitianMatrix::from_column_major(n, a)?,
        mass: HermitianMatrix::from_column_major(n, b)?,
        dof_coords,
        node_dofs,
        s_lines: mesh.s_lines(),
    })
}

fn coefficient(d: NodeDof) -> Option<(Complex64, usize)> {
    match d {
        NodeDof::Free(i) => Some((Complex64::new(1.0, 0.0), i)),
        NodeDof::Slaved { index, phase } => Some((phase, index)),
        NodeDof::Removed | NodeDof::Fixed => None,
    }
}

fn number_dofs(mesh: &Mesh, bc: &BoundarySpec) -> Vec<NodeDof> {
    let mut dofs = vec![NodeDof::Fixed; mesh.node_count()];
    let mut next = 0;
    for p in 0..mesh.node_count() {
        if mesh.removed[p] {
            dofs[p] = NodeDof::Removed;
            continue;
        }
        dofs[p] = match mesh.tag(p, bc) {
            BoundaryTag::Dirichlet => NodeDof::Fixed,
            BoundaryTag::PeriodicSlave => continue,
            _ => {
                next += 1;
                NodeDof::Free(next - 1)
            }
        };
    }
    if let EndCondition::QuasiPeriodic(theta) = bc.ends {
        let last = mesh.nodes_s - 1;
        for row in 0..mesh.nodes_u {
            let slave = last * mesh.nodes_u + row;
            if mesh.tag(slave, bc) != BoundaryTag::PeriodicSlave {
                continue;
            }
            dofs[slave] = match dofs[row] {
                NodeDof::Free(index) => NodeDof::Slaved {
                    index,
                    phase: theta.conj(),
                },
                other => other,
            };
        }
    }
    dofs
}

/// Imposes Dirichlet conditions along the mesh lines `s = cut`.
pub fn dirichlet_restrict(
    forms: &AssembledForms,
    cuts: &[f64],
) -> Result<AssembledForms, FemError> {
    if cuts.is_empty() {
        return Ok(forms.clone());
    }
    let span = forms.s_lines.last().copied().unwrap_or(1.0).abs().max(1.0);
    let tol = 1e-9 * span;
    for &c in cuts {
        if !forms.s_lines.iter().any(|&s| (s - c).abs() <= tol) {
            return Err(FemError::CutOffMeshLine(c));
        }
    }
    let removed: Vec<usize> = forms
        .dof_coords
        .iter()
        .enumerate()
        .filter(|(_, &(s, _))| cuts.iter().any(|&c| (s - c).abs() <= tol))
        .map(|(i, _)| i)
        .collect();
    if removed.len() == forms.order() {
        return Err(FemError::Empty);
    }
    let mut new_index = vec![None; forms.order()];
    let mut next = 0;
    for (i, slot) in new_index.iter_mut().enumerate() {
        if !removed.contains(&i) {
            *slot = Some(next);
            next += 1;
        }
    }
    let node_dofs = forms
        .node_dofs
        .iter()
        .map(|d| match *d {
            NodeDof::Free(i) => new_index[i].map_or(NodeDof::Fixed, NodeDof::Free),
            NodeDof::Slaved { index, phase } => {
                new_index[index].map_or(NodeDof::Fixed, |index| NodeDof::Slaved { index, phase })
            }
            other => other,
        })
        .collect();
    Ok(AssembledForms {
        stiffness: forms.stiffness.without_indices(&removed),
        mass: forms.mass.without_indices(&removed),
        dof_coords: forms
            .dof_coords
            .iter()
            .enumerate()
            .filter(|(i, _)| new_index[*i].is_some())
            .map(|(_, c)| *c)
            .collect(),
        node_dofs,
        s_lines: forms.s_lines.clone(),
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            // Chebyshev guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Real band form of a strip discretized by P1 elements along the curve and
/// polynomial modes across it.
#[derive(Debug, Clone)]
pub struct StripPencil {
    pub pencil: BandedPencil,
    /// Complex phases are carried as (re, im) pairs, doubling every value.
    pub doubled: bool,
}

/// Forms `∫∫ |∂_s ψ|² / f + |∂_u ψ|² f` and `∫∫ |ψ|² f`, `f = 1 - uκ(s)`, on
/// `[0, 2π] × [0, ε]` with Dirichlet sides. Across the strip the trial space
/// is spanned by the `modes` lowest integrated Legendre polynomials, so the
/// thin direction converges spectrally and mesh refinement acts on `s` only.
pub fn assemble_strip(
    kappa: &CurvatureProfile,
    width: f64,
    cells_s: usize,
    modes: usize,
    ends: EndCondition,
) -> Result<StripPencil, FemError> {
    if cells_s < 3 {
        return Err(FemError::TooFewNodes {
            axis: "s",
            min: 4,
            got: cells_s + 1,
        });
    }
    if modes == 0 {
        return Err(FemError::TooFewNodes {
            axis: "width modes",
            min: 1,
            got: 0,
        });
    }
    let ends = BoundarySpec::new(EdgeCondition::Dirichlet, ends)?.ends;
    let (nodes, phase) = match ends {
        EndCondition::Dirichlet => (cells_s - 1, None),
        EndCondition::Neumann => (cells_s + 1, None),
        EndCondition::QuasiPeriodic(theta) => (cells_s, Some(theta)),
    };
    let doubled = phase.is_some_and(|t| t.im != 0.0);
    let parts = if doubled { 2 } else { 1 };
    let per_node = modes * parts;
    // folded numbering keeps the wrap-around coupling inside the band
    let position = |k: usize| {
        if k < nodes.div_ceil(2) {
            2 * k
        } else {
            2 * (nodes - 1 - k) + 1
        }
    };
    let width_band = if phase.is_some() {
        3 * per_node - 1
    } else {
        2 * per_node - 1
    };
    let order = nodes * per_node;
    let stride = width_band + 1;
    let mut band_a = vec![0.0; order * stride];
    let mut band_b = vec![0.0; order * stride];

    let across = gauss_legendre(2 * modes + 12);
    let scale: Vec<f64> = (1..=modes)
        .map(|j| 1.0 / (2.0 * (2 * j + 1) as f64).sqrt())
        .collect();
    // values and u-derivatives of the modes at the transverse nodes
    let mut shape = vec![vec![0.0; modes]; across.len()];
    let mut slope = vec![vec![0.0; modes]; across.len()];
    for (q, &(t, _)) in across.iter().enumerate() {
        let mut p = vec![1.0, t];
        for k in 2..=modes + 1 {
            let next = ((2 * k - 1) as f64 * t * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
            p.push(next);
        }
        for j in 1..=modes {
            shape[q][j - 1] = scale[j - 1] * (p[j + 1] - p[j - 1]);
            slope[q][j - 1] = scale[j - 1] * (2 * j + 1) as f64 * p[j] * 2.0 / width;
        }
    }

    let along = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    let h = std::f64::consts::TAU / cells_s as f64;
    let mut add = |row: usize, col: usize, a: f64, b: f64| {
        if row >= col {
            band_a[row * stride + row - col] += a;
            band_b[row * stride + row - col] += b;
        }
    };
    let mut mass = vec![0.0; modes * modes];
    let mut grad = vec![0.0; modes * modes];
    let mut inv = vec![0.0; modes * modes];
    for e in 0..cells_s {
        // local node a sits at mesh node e + a; map to (free node, phase)
        let local: [Option<(usize, Complex64)>; 2] = std::array::from_fn(|a| {
            let k = e + a;
            match phase {
                None if matches!(ends, EndCondition::Dirichlet) => {
                    (k >= 1 && k < cells_s).then(|| (k - 1, Complex64::new(1.0, 0.0)))
                }
                None => Some((k, Complex64::new(1.0, 0.0))),
                Some(theta) if k == cells_s => Some((0, theta.conj())),
                Some(_) => Some((k, Complex64::new(1.0, 0.0))),
            }
        });
        let mut k_loc = [
            [vec![0.0; modes * modes], vec![0.0; modes * modes]],
            [vec![0.0; modes * modes], vec![0.0; modes * modes]],
        ];
        let mut m_loc = k_loc.clone();
        for &(xs, ws) in &along {
            let x = 0.5 * (xs + 1.0);
            let s = (e as f64 + x) * h;
            let c = kappa.eval(s);
            mass.iter_mut()
                .chain(grad.iter_mut())
                .chain(inv.iter_mut())
                .for_each(|v| *v = 0.0);
            for (q, &(t, wq)) in across.iter().enumerate() {
                let u = 0.5 * width * (t + 1.0);
                let f = 1.0 - u * c;
                let w = 0.5 * width * wq;
                for i in 0..modes {
                    for j in 0..modes {
                        let pp = shape[q][i] * shape[q][j];
                        mass[i * modes + j] += w * f * pp;
                        inv[i * modes + j] += w * pp / f;
                        grad[i * modes + j] += w * f * slope[q][i] * slope[q][j];
                    }
                }
            }
            let phi = [1.0 - x, x];
            let dphi = [-1.0 / h, 1.0 / h];
            let w = 0.5 * h * ws;
            for a in 0..2 {
                for b in 0..2 {
                    for ij in 0..modes * modes {
                        k_loc[a][b][ij] +=
                            w * (phi[a] * phi[b] * grad[ij] + dphi[a] * dphi[b] * inv[ij]);
                        m_loc[a][b][ij] += w * phi[a] * phi[b] * mass[ij];
                    }
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let (Some((ga, pa)), Some((gb, pb))) = (local[a], local[b]) else {
                    continue;
                };
                let z = pa.conj() * pb;
                let (ra, rb) = (position(ga) * per_node, position(gb) * per_node);
                for i in 0..modes {
                    for j in 0..modes {
                        let (kv, mv) = (k_loc[a][b][i * modes + j], m_loc[a][b][i * modes + j]);
                        if doubled {
                            let (r, c) = (ra + 2 * i, rb + 2 * j);
                            add(r, c, z.re * kv, z.re * mv);
                            add(r + 1, c + 1, z.re * kv, z.re * mv);
                            add(r, c + 1, -z.im * kv, -z.im * mv);
                            add(r + 1, c, z.im * kv, z.im * mv);
                        } else {
                            add(ra + i, rb + j, z.re * kv, z.re * mv);
                        }
                    }
                }
            }
        }
    }
    let pencil = BandedPencil::from_bands(order, width_band, band_a, band_b)?;
    Ok(StripPencil { pencil, doubled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_gevp;
    use std::f64::consts::PI;

    #[test]
    fn mesh_counts() {
        let m = build_mesh(2.0 * PI, 0.0, 5, None, None).unwrap();
        assert_eq!(m.element_count(), 4);
        assert_eq!(m.dimension(), 1);
        for seg in m.segments() {
            let h = m.coords()[seg[1]].0 - m.coords()[seg[0]].0;
            assert!((h - PI / 2.0).abs() < 1e-15);
        }
        let m = build_mesh(1.0, 1.0, 4, Some(3), None).unwrap();
        assert_eq!(m.element_count(), 12);
        let m = build_mesh(
            1.0,
            1.0,
            9,
            Some(9),
            Some(Disk {
                center: (0.5, 0.5),
                radius: 0.0,
            }),
        )
        .unwrap();
        assert_eq!(m.removed_elements(), 0);
    }

    #[test]
    fn mesh_preconditions() {
        assert!(matches!(
            build_mesh(1.0, 1.0, 3, Some(3), None),
            Err(FemError::TooFewNodes { axis: "s", .. })
        ));
        assert!(matches!(
            build_mesh(1.0, 1.0, 5, Some(1), None),
            Err(FemError::TooFewNodes { axis: "u", .. })
        ));
    }

    #[test]
    fn hole_marks_exposed_nodes() {
        let m = build_mesh(
            2.0,
            2.0,
            21,
            Some(21),
            Some(Disk {
                center: (1.0, 1.0),
                radius: 0.35,
            }),
        )
        .unwrap();
        assert!(m.removed_elements() > 0);
        let bc = BoundarySpec::new(EdgeCondition::Neumann, EndCondition::Neumann).unwrap();
        let center = 10 * 21 + 10;
        assert!(m.is_removed(center));
        let exposed = (0..m.node_count())
            .filter(|&p| m.tag(p, &bc) == BoundaryTag::Dirichlet)
            .count();
        assert!(exposed >= 8);
        for t in m.triangles() {
            assert!(t.iter().all(|&p| !m.is_removed(p)));
        }
    }

    #[test]
    fn phase_must_be_unimodular() {
        let err = BoundarySpec::new(
            EdgeCondition::Dirichlet,
            EndCondition::QuasiPeriodic(Complex64::new(0.5, 0.0)),
        );
        assert!(matches!(err, Err(FemError::PhaseNotUnimodular(_))));
    }

    #[test]
    fn free_dirichlet_interval() {
        let m = build_mesh(2.0 * PI, 0.0, 400, None, None).unwrap();
        let g = MetricField::euclidean(2.0 * PI, 0.0);
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::Dirichlet).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        let s = solve_gevp(&f.stiffness, &f.mass, 3).unwrap();
        assert!((s.values[0] - 0.25).abs() < 1e-3);
        assert!((s.values[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn unit_square_dirichlet() {
        let g = MetricField::euclidean(1.0, 1.0);
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::Dirichlet).unwrap();
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let m = build_mesh(1.0, 1.0, n, Some(n), None).unwrap();
            let f = assemble(&m, &g, &bc).unwrap();
            let s = solve_gevp(&f.stiffness, &f.mass, 1).unwrap();
            errs.push(s.values[0] - 2.0 * PI * PI);
        }
        assert!(errs.iter().all(|&e| e > 0.0));
        assert!(errs[2] < errs[1] && errs[1] < errs[0]);
        assert!(errs[2] < 0.25, "{errs:?}");
        // O(h²)
        assert!((errs[1] / errs[2] - 4.0).abs() < 0.5);
    }

    #[test]
    fn periodic_flat_strip_ground_state() {
        let eps = 0.5;
        let g = MetricField::euclidean(2.0 * PI, eps);
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::periodic()).unwrap();
        let m = build_mesh(2.0 * PI, eps, 17, Some(33), None).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        assert!(f.stiffness.is_real());
        let s = solve_gevp(&f.stiffness, &f.mass, 1).unwrap();
        let exact = PI * PI / (eps * eps);
        assert!((s.values[0] - exact) / exact < 2e-3);
        assert!(s.values[0] >= exact);
    }

    #[test]
    fn antiperiodic_forms_are_real_and_complex_phase_is_not() {
        let g = MetricField::euclidean(2.0 * PI, 1.0);
        let m = build_mesh(2.0 * PI, 1.0, 8, Some(4), None).unwrap();
        let bc = BoundarySpec::new(EdgeCondition::Neumann, EndCondition::antiperiodic()).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        assert!(f.stiffness.is_real() && f.mass.is_real());
        let bc = BoundarySpec::new(EdgeCondition::Neumann, EndCondition::floquet(1, 8)).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        assert!(!f.stiffness.is_real());
    }

    #[test]
    fn mass_sums_to_volume() {
        let g = crate::geometry::waveguide_metric(
            &crate::geometry::CurvatureProfile::even(vec![0.2, 1.0]),
            0.3,
        )
        .unwrap();
        let m = build_mesh(2.0 * PI, 0.3, 41, Some(5), None).unwrap();
        let bc = BoundarySpec::new(EdgeCondition::Neumann, EndCondition::Neumann).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        let total: f64 = f.mass.entries().iter().map(|z| z.re).sum();
        let want = 2.0 * PI * 0.3 - 0.3 * 0.3 / 2.0 * 0.2 * 2.0 * PI;
        assert!((total - want).abs() < 1e-4 * want, "{total} vs {want}");
    }

    #[test]
    fn restrict_requires_mesh_line() {
        let g = MetricField::euclidean(2.0, 1.0);
        let m = build_mesh(2.0, 1.0, 5, Some(3), None).unwrap();
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::Dirichlet).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        assert!(matches!(
            dirichlet_restrict(&f, &[0.7]),
            Err(FemError::CutOffMeshLine(_))
        ));
        let same = dirichlet_restrict(&f, &[]).unwrap();
        assert_eq!(same.stiffness, f.stiffness);
        let cut = dirichlet_restrict(&f, &[1.0]).unwrap();
        assert_eq!(cut.order(), f.order() - 1);
    }

    #[test]
    fn triplet_export() {
        let g = MetricField::euclidean(1.0, 0.0);
        let m = build_mesh(1.0, 0.0, 5, None, None).unwrap();
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::Dirichlet).unwrap();
        let f = assemble(&m, &g, &bc).unwrap();
        let text = AssembledForms::triplets(&f.stiffness);
        // tridiagonal 3x3
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().next().unwrap().starts_with("0 0 "));
        assert!(m.to_text().contains("e 0 1"));
    }
}
