//! Reference-configuration hexahedral meshes.

mod generate;
mod io;

pub use generate::{generate_block, generate_gastroc, BlockSpec, Divisions, GastrocSpec};
pub use io::{import_mesh, parse_mesh, write_mesh, ImportOptions};

use std::collections::BTreeMap;

use crate::constitutive::TissueKind;
use crate::elements::{face_nodes, isoparametric_map, reference_nodes, ElementType, Tabulation};
use crate::error::{MyoError, Result};
use crate::tensor::Vec3;

/// Fibre orientation data attached to a mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum FibreField {
    /// One constant direction per tissue region.
    PerRegion(BTreeMap<TissueKind, Vec3>),
    /// One direction per cell.
    PerCell(Vec<Vec3>),
    /// One direction per quadrature point, cell-major.
    PerQuadrature { per_cell: usize, dirs: Vec<Vec3> },
}

impl FibreField {
    fn vectors(&self) -> Box<dyn Iterator<Item = &Vec3> + '_> {
        match self {
            FibreField::PerRegion(m) => Box::new(m.values()),
            FibreField::PerCell(v) | FibreField::PerQuadrature { dirs: v, .. } => {
                Box::new(v.iter())
            }
        }
    }

    fn vectors_mut(&mut self) -> Box<dyn Iterator<Item = &mut Vec3> + '_> {
        match self {
            FibreField::PerRegion(m) => Box::new(m.values_mut()),
            FibreField::PerCell(v) | FibreField::PerQuadrature { dirs: v, .. } => {
                Box::new(v.iter_mut())
            }
        }
    }
}

pub type FaceRef = (usize, u8);

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub element: ElementType,
    pub nodes: Vec<Vec3>,
    /// Flat connectivity, `element.nodes_per_cell()` entries per cell.
    pub connectivity: Vec<usize>,
    pub regions: Vec<TissueKind>,
    pub face_sets: BTreeMap<String, Vec<FaceRef>>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    pub fibres: FibreField,
}

/// Tolerance on `|a0| - 1` accepted without normalization.
pub const FIBRE_NORM_TOL: f64 = 1e-6;

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.regions.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.element.nodes_per_cell()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.nodes_per_cell();
        &self.connectivity[c * n..(c + 1) * n]
    }

    pub fn cell_coords(&self, c: usize) -> Vec<Vec3> {
        self.cell(c).iter().map(|&i| self.nodes[i]).collect()
    }

    /// Reference fibre direction at quadrature point `q` of cell `c`.
    pub fn fibre(&self, c: usize, q: usize) -> Vec3 {
        match &self.fibres {
            FibreField::PerRegion(m) => m.get(&self.regions[c]).copied().unwrap_or_else(Vec3::x),
            FibreField::PerCell(v) => v[c],
            FibreField::PerQuadrature { per_cell, dirs } => dirs[c * per_cell + q],
        }
    }

    pub fn volume(&self) -> f64 {
        let tab = Tabulation::new(self.element);
        (0..self.n_cells())
            .map(|c| {
                let x = self.cell_coords(c);
                tab.rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(q, w)| {
                        isoparametric_map(&x, &tab.u_vals[q], &tab.u_grads[q])
                            .map(|m| m.det * w)
                            .unwrap_or(0.0)
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn region_volume(&self, kind: TissueKind) -> f64 {
        let mut sub = self.clone();
        let keep: Vec<usize> = (0..self.n_cells())
            .filter(|&c| self.regions[c] == kind)
            .collect();
        let n = self.nodes_per_cell();
        sub.connectivity = keep
            .iter()
            .flat_map(|&c| self.connectivity[c * n..(c + 1) * n].to_vec())
            .collect();
        sub.regions = keep.iter().map(|&c| self.regions[c]).collect();
        sub.volume()
    }

    /// Sorted unique nodes of a named face set or node set.
    pub fn set_nodes(&self, name: &str) -> Option<Vec<usize>> {
        if let Some(faces) = self.face_sets.get(name) {
            let kind = self.element.displacement();
            let mut out: Vec<usize> = faces
                .iter()
                .flat_map(|&(c, f)| {
                    let cell = self.cell(c);
                    face_nodes(kind, f as usize)
                        .into_iter()
                        .map(move |l| cell[l])
                })
                .collect();
            out.sort_unstable();
            out.dedup();
            return Some(out);
        }
        self.node_sets.get(name).cloned()
    }

    /// Shortest cell edge, measured between corner nodes.
    pub fn h_min(&self) -> f64 {
        let corners: Vec<usize> = match self.element {
            ElementType::Q1P0 => (0..8).collect(),
            ElementType::Q2P1 => vec![0, 2, 6, 8, 18, 20, 24, 26],
        };
        const EDGES: [(usize, usize); 12] = [
            (0, 1),
            (2, 3),
            (4, 5),
            (6, 7),
            (0, 2),
            (1, 3),
            (4, 6),
            (5, 7),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ];
        let mut h = f64::INFINITY;
        for c in 0..self.n_cells() {
            let cell = self.cell(c);
            for (a, b) in EDGES {
                h = h.min((self.nodes[cell[corners[a]]] - self.nodes[cell[corners[b]]]).norm());
            }
        }
        h
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for x in &self.nodes {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        (lo, hi)
    }

    pub fn nearest_node(&self, p: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, x) in self.nodes.iter().enumerate() {
            let d = (x - p).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn region_names(&self) -> Vec<&'static str> {
        let mut kinds: Vec<TissueKind> = self.regions.clone();
        kinds.sort_by_key(|k| k.name());
        kinds.dedup();
        kinds.into_iter().map(|k| k.name()).collect()
    }

    /// Normalizes every fibre vector in place.
    pub fn normalize_fibres(&mut self) {
        for v in self.fibres.vectors_mut() {
            let n = v.norm();
            if n > 0.0 {
                *v /= n;
            }
        }
    }

    /// Checks indices, fibre norms and cell orientation at every quadrature point.
    pub fn validate(&self) -> Result<()> {
        let npc = self.nodes_per_cell();
        if self.connectivity.len() != npc * self.n_cells() {
            return Err(MyoError::Validation(
                "connectivity length does not match cell count".into(),
            ));
        }
        if let Some(bad) = self.connectivity.iter().find(|&&i| i >= self.n_nodes()) {
            return Err(MyoError::Validation(format!(
                "node index {bad} out of range"
            )));
        }
        for (name, faces) in &self.face_sets {
            for &(c, f) in faces {
                if c >= self.n_cells() || f >= 6 {
                    return Err(MyoError::Validation(format!(
                        "face set {name}: bad face {c}:{f}"
                    )));
                }
            }
        }
        for (name, nodes) in &self.node_sets {
            if nodes.iter().any(|&n| n >= self.n_nodes()) {
                return Err(MyoError::Validation(format!(
                    "node set {name}: index out of range"
                )));
            }
        }
        match &self.fibres {
            FibreField::PerCell(v) if v.len() != self.n_cells() => {
                return Err(MyoError::Validation(
                    "per-cell fibre count does not match cells".into(),
                ));
            }
            FibreField::PerQuadrature { per_cell, dirs }
                if dirs.len() != per_cell * self.n_cells() =>
            {
                return Err(MyoError::Validation(
                    "per-point fibre count does not match cells".into(),
                ));
            }
            _ => {}
        }
        for v in self.fibres.vectors() {
            if (v.norm() - 1.0).abs() > FIBRE_NORM_TOL {
                return Err(MyoError::Validation(format!(
                    "fibre vector ({}, {}, {}) has norm {}",
                    v.x,
                    v.y,
                    v.z,
                    v.norm()
                )));
            }
        }
        let tab = Tabulation::new(self.element);
        let mut checks: Vec<(Vec<f64>, Vec<Vec3>)> = (0..tab.rule.len())
            .map(|q| (tab.u_vals[q].clone(), tab.u_grads[q].clone()))
            .collect();
        // Corner nodes catch inversions that interior points can miss.
        for xi in reference_nodes(self.element.displacement()) {
            if xi.iter().all(|c| c.abs() == 1.0) {
                checks.push(crate::elements::shape_eval(
                    self.element.displacement(),
                    &xi,
                ));
            }
        }
        for c in 0..self.n_cells() {
            let x = self.cell_coords(c);
            for (v, g) in &checks {
                if let Err(MyoError::InvertedCell { det, .. }) = isoparametric_map(&x, v, g) {
                    return Err(MyoError::InvertedCell { cell: c, det });
                }
            }
        }
        Ok(())
    }
}
