//! Structured generators for the block and simplified gastrocnemius.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FaceRef, FibreField, Mesh};
use crate::constitutive::TissueKind;
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::tensor::Vec3;

const MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            length: 52.0008 * MM,
            width: 13.75 * MM,
            height: 5.5783 * MM,
        }
    }
}

/// Cells per axis; missing keys take the defaults 4, 1, 1 and one
/// aponeurosis layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Divisions {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Layers through each aponeurosis (gastrocnemius only).
    pub n_apo: usize,
}

impl Default for Divisions {
    fn default() -> Self {
        Self::new(4, 1, 1)
    }
}

impl Divisions {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            n_apo: 1,
        }
    }

    fn check(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 || self.n_apo == 0 {
            return Err(MyoError::Validation(format!(
                "divisions must be at least 1 per axis, got {}x{}x{} (apo {})",
                self.nx, self.ny, self.nz, self.n_apo
            )));
        }
        Ok(())
    }
}

/// Simplified gastrocnemius: a sheared muscle prism between two aponeuroses.
///
/// The muscle is a parallelogram in the x-z plane with base `l_apo` along x
/// and sides of length `lambda0` at angle `theta0`; `l_mus` is its long
/// diagonal, so `lambda0 sin(theta0) = l_mus sin(theta0 - gamma0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GastrocSpec {
    pub l_apo: f64,
    pub lambda0: f64,
    /// Fibre angle from the x-axis (rad).
    pub theta0: f64,
    pub l_mus: f64,
    pub t_apo: f64,
    pub w_mus: f64,
    /// Solved from the closure relation when absent.
    #[serde(default)]
    pub gamma0: Option<f64>,
    /// Fraction of the length covered by each aponeurosis from its end.
    #[serde(default = "default_f_apo")]
    pub f_apo: f64,
    /// Shear the muscle along the fibres; off gives a box with flat layers.
    #[serde(default = "default_true")]
    pub shear: bool,
    /// Muscle thickness override, used when `shear` is off.
    #[serde(default)]
    pub height: Option<f64>,
}

fn default_f_apo() -> f64 {
    0.75
}

fn default_true() -> bool {
    true
}

impl Default for GastrocSpec {
    fn default() -> Self {
        Self {
            l_apo: 52.0008 * MM,
            lambda0: 16.25 * MM,
            theta0: 20f64.to_radians(),
            l_mus: 67.5 * MM,
            t_apo: 0.75 * MM,
            w_mus: 13.75 * MM,
            gamma0: None,
            f_apo: default_f_apo(),
            shear: true,
            height: None,
        }
    }
}

impl GastrocSpec {
    /// Muscle thickness normal to the aponeuroses.
    pub fn muscle_height(&self) -> f64 {
        match (self.shear, self.height) {
            (_, Some(h)) => h,
            _ => self.lambda0 * self.theta0.sin(),
        }
    }

    /// `gamma0` from the closure relation, checked against any given value.
    pub fn solve_gamma0(&self) -> Result<f64> {
        let s = self.lambda0 * self.theta0.sin() / self.l_mus;
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            return Err(MyoError::GeometryInfeasible(format!(
                "lambda0 sin(theta0) / L_mus = {s} has no angle solution"
            )));
        }
        let gamma = self.theta0 - s.asin();
        if let Some(g) = self.gamma0 {
            let lhs = self.lambda0 * self.theta0.sin();
            let rhs = self.l_mus * (self.theta0 - g).sin();
            if (lhs - rhs).abs() > 1e-9 * lhs.abs().max(rhs.abs()) {
                return Err(MyoError::GeometryInfeasible(format!(
                    "closure violated: lambda0 sin(theta0) = {lhs}, L_mus sin(theta0 - gamma0) = {rhs}"
                )));
            }
            return Ok(g);
        }
        Ok(gamma)
    }

    pub fn fibre_direction(&self) -> Vec3 {
        if self.shear {
            Vec3::new(self.theta0.cos(), 0.0, self.theta0.sin())
        } else {
            Vec3::x()
        }
    }

    /// Analytic volume: sheared prism plus two aponeurosis slabs.
    pub fn volume(&self) -> f64 {
        let w = self.w_mus;
        self.l_apo * self.muscle_height() * w + 2.0 * self.f_apo * self.l_apo * self.t_apo * w
    }

    fn check(&self) -> Result<()> {
        let positive = [self.l_apo, self.lambda0, self.l_mus, self.t_apo, self.w_mus];
        if positive.iter().any(|&v| !(v > 0.0)) {
            return Err(MyoError::GeometryInfeasible(
                "all lengths must be positive".into(),
            ));
        }
        if !(self.f_apo > 0.0 && self.f_apo <= 1.0) {
            return Err(MyoError::GeometryInfeasible(
                "f_apo must lie in (0, 1]".into(),
            ));
        }
        if self.shear && !(self.theta0 > 0.0 && self.theta0 < std::f64::consts::FRAC_PI_2) {
            return Err(MyoError::GeometryInfeasible(
                "theta0 must lie in (0, pi/2)".into(),
            ));
        }
        if !(self.muscle_height() > 0.0) {
            return Err(MyoError::GeometryInfeasible(
                "muscle height must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// 1D breakpoints split into roughly length-proportional segments.
fn axis_grid(breaks: &[f64], n: usize) -> Vec<f64> {
    let total = breaks[breaks.len() - 1] - breaks[0];
    let segs = breaks.len() - 1;
    let n = n.max(segs);
    let mut counts: Vec<usize> = breaks
        .windows(2)
        .map(|w| (((w[1] - w[0]) / total) * n as f64).round().max(1.0) as usize)
        .collect();
    // Adjust the largest segment so the total matches the request.
    while counts.iter().sum::<usize>() != n {
        let (i, _) = counts.iter().enumerate().max_by_key(|(_, &c)| c).unwrap();
        if counts.iter().sum::<usize>() > n {
            counts[i] -= 1;
        } else {
            counts[i] += 1;
        }
    }
    let mut out = vec![breaks[0]];
    for (w, &c) in breaks.windows(2).zip(&counts) {
        for k in 1..=c {
            out.push(if k == c {
                w[1]
            } else {
                w[0] + (w[1] - w[0]) * k as f64 / c as f64
            });
        }
    }
    out
}

/// Inserts midpoints for quadratic layouts.
fn refine(grid: &[f64], et: ElementType) -> Vec<f64> {
    if et == ElementType::Q1P0 {
        return grid.to_vec();
    }
    let mut out = vec![grid[0]];
    for w in grid.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
        out.push(w[1]);
    }
    out
}

/// Builds a structured mesh over a tensor lattice. `cell_region` returns the
/// tissue of lattice cell `(i, j, k)` or `None` to leave it out; `map` sends
/// lattice coordinates to physical space and must be affine on each cell.
fn lattice_mesh(
    gx: &[f64],
    gy: &[f64],
    gz: &[f64],
    et: ElementType,
    cell_region: impl Fn(usize, usize, usize) -> Option<TissueKind>,
    map: impl Fn(f64, f64, f64) -> Vec3,
    fibres: FibreField,
) -> Mesh {
    let (cx, cy, cz) = (gx.len() - 1, gy.len() - 1, gz.len() - 1);
    let order = if et == ElementType::Q1P0 { 1 } else { 2 };
    let (fx, fy, fz) = (refine(gx, et), refine(gy, et), refine(gz, et));
    let (nx, ny) = (fx.len(), fy.len());
    let lattice = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    let mut node_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut present = Vec::new();
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                if let Some(r) = cell_region(i, j, k) {
                    present.push((i, j, k, r));
                }
            }
        }
    }
    // Number nodes in lattice order for a deterministic layout.
    let mut used = std::collections::BTreeSet::new();
    for &(i, j, k, _) in &present {
        for c in 0..=order {
            for b in 0..=order {
                for a in 0..=order {
                    used.insert(lattice(order * i + a, order * j + b, order * k + c));
                }
            }
        }
    }
    let mut nodes = Vec::with_capacity(used.len());
    for &l in &used {
        let i = l % nx;
        let j = (l / nx) % ny;
        let k = l / (nx * ny);
        node_id.insert(l, nodes.len());
        nodes.push(map(fx[i], fy[j], fz[k]));
    }

    let mut connectivity = Vec::new();
    let mut regions = Vec::new();
    let mut cell_index = BTreeMap::new();
    for &(i, j, k, r) in &present {
        cell_index.insert((i, j, k), regions.len());
        for c in 0..=order {
            for b in 0..=order {
                for a in 0..=order {
                    connectivity
                        .push(node_id[&lattice(order * i + a, order * j + b, order * k + c)]);
                }
            }
        }
        regions.push(r);
    }

    let mut face_sets: BTreeMap<String, Vec<FaceRef>> = BTreeMap::new();
    for &(i, j, k, _) in &present {
        let id = cell_index[&(i, j, k)];
        let on = [
            i == 0,
            i == cx - 1,
            j == 0,
            j == cy - 1,
            k == 0,
            k == cz - 1,
        ];
        for (f, name) in ["-x", "+x", "-y", "+y", "-z", "+z"].iter().enumerate() {
            if on[f] {
                face_sets
                    .entry(name.to_string())
                    .or_default()
                    .push((id, f as u8));
            }
        }
    }

    let mut mesh = Mesh {
        element: et,
        nodes,
        connectivity,
        regions,
        face_sets,
        node_sets: BTreeMap::new(),
        fibres,
    };
    let names: Vec<String> = mesh.face_sets.keys().cloned().collect();
    for name in names {
        let nodes = mesh.set_nodes(&name).unwrap_or_default();
        mesh.node_sets.insert(name, nodes);
    }
    mesh
}

pub fn generate_block(spec: &BlockSpec, div: Divisions, et: ElementType) -> Result<Mesh> {
    div.check()?;
    if !(spec.length > 0.0 && spec.width > 0.0 && spec.height > 0.0) {
        return Err(MyoError::Validation(
            "block dimensions must be positive".into(),
        ));
    }
    let gx = axis_grid(&[0.0, spec.length], div.nx);
    let gy = axis_grid(&[0.0, spec.width], div.ny);
    let gz = axis_grid(&[0.0, spec.height], div.nz);
    let fibres = FibreField::PerRegion(BTreeMap::from([(TissueKind::Muscle, Vec3::x())]));
    Ok(lattice_mesh(
        &gx,
        &gy,
        &gz,
        et,
        |_, _, _| Some(TissueKind::Muscle),
        Vec3::new,
        fibres,
    ))
}

pub fn generate_gastroc(spec: &GastrocSpec, div: Divisions, et: ElementType) -> Result<Mesh> {
    div.check()?;
    spec.check()?;
    if spec.shear {
        spec.solve_gamma0()?;
    }
    let l = spec.l_apo;
    let h = spec.muscle_height();
    let t = spec.t_apo;
    let f = spec.f_apo;
    let cot = if spec.shear {
        1.0 / spec.theta0.tan()
    } else {
        0.0
    };

    let mut breaks = vec![0.0, (1.0 - f) * l, f * l, l];
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * l);
    let gx = axis_grid(&breaks, div.nx);
    let gy = axis_grid(&[0.0, spec.w_mus], div.ny);
    let mut gz = axis_grid(&[-t, 0.0], div.n_apo);
    gz.extend(axis_grid(&[0.0, h], div.nz).into_iter().skip(1));
    gz.extend(axis_grid(&[h, h + t], div.n_apo).into_iter().skip(1));

    let n_apo = div.n_apo;
    let n_mus = div.nz;
    let gx_cells = gx.clone();
    let tol = 1e-12 * l;
    let region = move |i: usize, _j: usize, k: usize| {
        let (x0, x1) = (gx_cells[i], gx_cells[i + 1]);
        if k < n_apo {
            (x1 <= f * l + tol).then_some(TissueKind::Aponeurosis)
        } else if k < n_apo + n_mus {
            Some(TissueKind::Muscle)
        } else {
            (x0 >= (1.0 - f) * l - tol).then_some(TissueKind::Aponeurosis)
        }
    };
    let map = move |x: f64, y: f64, z: f64| Vec3::new(x + z.clamp(0.0, h) * cot, y, z);
    let fibres = FibreField::PerRegion(BTreeMap::from([
        (TissueKind::Muscle, spec.fibre_direction()),
        (TissueKind::Aponeurosis, Vec3::x()),
    ]));
    let mut mesh = lattice_mesh(&gx, &gy, &gz, et, region, map, fibres);
    // End faces of the aponeuroses alone: the bottom sheet at -x and the
    // top sheet at +x carry the loading in the experiments.
    for (from, to) in [("-x", "-x-apo"), ("+x", "+x-apo")] {
        let faces: Vec<FaceRef> = mesh.face_sets[from]
            .iter()
            .copied()
            .filter(|&(c, _)| mesh.regions[c] == TissueKind::Aponeurosis)
            .collect();
        mesh.face_sets.insert(to.to_string(), faces);
        let nodes = mesh.set_nodes(to).unwrap_or_default();
        mesh.node_sets.insert(to.to_string(), nodes);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_block_cell() {
        let spec = BlockSpec::default();
        let m = generate_block(&spec, Divisions::new(1, 1, 1), ElementType::Q1P0).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.n_nodes(), 8);
        assert_relative_eq!(
            m.volume(),
            52.0008 * 13.75 * 5.5783 * 1e-9,
            max_relative = 1e-12
        );
        m.validate().unwrap();
    }

    #[test]
    fn node_counts() {
        for (et, d) in [(ElementType::Q1P0, 1), (ElementType::Q2P1, 2)] {
            let m = generate_block(&BlockSpec::default(), Divisions::new(3, 2, 4), et).unwrap();
            assert_eq!(m.n_nodes(), (3 * d + 1) * (2 * d + 1) * (4 * d + 1));
            assert_eq!(m.n_cells(), 24);
        }
    }

    #[test]
    fn two_cells_share_a_face() {
        let m = generate_block(
            &BlockSpec::default(),
            Divisions::new(2, 1, 1),
            ElementType::Q2P1,
        )
        .unwrap();
        let right: Vec<usize> = crate::elements::face_nodes(crate::elements::BasisKind::Q2, 1)
            .iter()
            .map(|&l| m.cell(0)[l])
            .collect();
        let left: Vec<usize> = crate::elements::face_nodes(crate::elements::BasisKind::Q2, 0)
            .iter()
            .map(|&l| m.cell(1)[l])
            .collect();
        assert_eq!(right, left);
    }

    #[test]
    fn zero_divisions_rejected() {
        assert!(generate_block(
            &BlockSpec::default(),
            Divisions::new(0, 1, 1),
            ElementType::Q1P0
        )
        .is_err());
    }

    #[test]
    fn block_face_sets() {
        let m = generate_block(
            &BlockSpec::default(),
            Divisions::new(2, 2, 1),
            ElementType::Q1P0,
        )
        .unwrap();
        assert_eq!(m.face_sets["-x"].len(), 2);
        assert_eq!(m.face_sets["+z"].len(), 4);
        let nodes = m.set_nodes("+x").unwrap();
        assert_eq!(nodes.len(), 6);
        for n in nodes {
            assert_relative_eq!(
                m.nodes[n].x,
                BlockSpec::default().length,
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn gastroc_defaults() {
        let spec = GastrocSpec::default();
        let g = spec.solve_gamma0().unwrap();
        assert_relative_eq!(
            spec.lambda0 * spec.theta0.sin(),
            spec.l_mus * (spec.theta0 - g).sin(),
            max_relative = 1e-12
        );
        // The tabulated base length is the diagonal's projection minus the side's.
        let l_apo = spec.l_mus * (spec.theta0 - g).cos() - spec.lambda0 * spec.theta0.cos();
        assert_relative_eq!(l_apo, spec.l_apo, max_relative = 1e-5);

        let m = generate_gastroc(&spec, Divisions::new(8, 2, 3), ElementType::Q2P1).unwrap();
        m.validate().unwrap();
        assert_eq!(m.region_names(), vec!["aponeurosis", "muscle"]);
        let a0 = m.fibre(
            m.regions
                .iter()
                .position(|&r| r == TissueKind::Muscle)
                .unwrap(),
            0,
        );
        assert_relative_eq!(
            a0,
            Vec3::new(20f64.to_radians().cos(), 0.0, 20f64.to_radians().sin())
        );

        // Aponeurosis end faces: bottom sheet at x = 0, top sheet at the far end.
        let h = spec.muscle_height();
        for n in m.set_nodes("-x-apo").unwrap() {
            assert!(m.nodes[n].x.abs() < 1e-15 && m.nodes[n].z <= 0.0);
        }
        let x_end = spec.l_apo + h / spec.theta0.tan();
        for n in m.set_nodes("+x-apo").unwrap() {
            assert_relative_eq!(m.nodes[n].x, x_end, max_relative = 1e-12);
            assert!(m.nodes[n].z >= h - 1e-15);
        }
        assert_eq!(m.set_nodes("-x-apo").unwrap().len(), 5 * 3);
    }

    #[test]
    fn gastroc_volume_matches_analytic() {
        let spec = GastrocSpec::default();
        for (div, et) in [
            (Divisions::new(4, 1, 1), ElementType::Q1P0),
            (Divisions::new(8, 2, 3), ElementType::Q2P1),
            (
                Divisions {
                    nx: 13,
                    ny: 3,
                    nz: 2,
                    n_apo: 2,
                },
                ElementType::Q1P0,
            ),
        ] {
            let m = generate_gastroc(&spec, div, et).unwrap();
            assert_relative_eq!(m.volume(), spec.volume(), max_relative = 1e-9);
        }
    }

    #[test]
    fn gastroc_without_shear_is_layered_box() {
        let spec = GastrocSpec {
            shear: false,
            theta0: 0.0,
            height: Some(5.0e-3),
            ..Default::default()
        };
        let m = generate_gastroc(&spec, Divisions::new(4, 1, 2), ElementType::Q1P0).unwrap();
        m.validate().unwrap();
        let (lo, hi) = m.bounding_box();
        assert_relative_eq!(lo.x, 0.0);
        assert_relative_eq!(hi.x, spec.l_apo, max_relative = 1e-14);
        assert_relative_eq!(hi.z - lo.z, 5.0e-3 + 2.0 * spec.t_apo, max_relative = 1e-12);
        assert_relative_eq!(m.volume(), spec.volume(), max_relative = 1e-12);
    }

    #[test]
    fn infeasible_closure() {
        let spec = GastrocSpec {
            l_mus: 1e-3,
            ..Default::default()
        };
        assert!(matches!(
            generate_gastroc(&spec, Divisions::new(2, 1, 1), ElementType::Q1P0),
            Err(MyoError::GeometryInfeasible(_))
        ));
        let spec = GastrocSpec {
            gamma0: Some(0.1),
            ..Default::default()
        };
        assert!(spec.solve_gamma0().is_err());
    }

    #[test]
    fn refinement_preserves_volume() {
        let spec = BlockSpec::default();
        let coarse = generate_block(&spec, Divisions::new(2, 1, 1), ElementType::Q1P0).unwrap();
        let fine = generate_block(&spec, Divisions::new(4, 2, 2), ElementType::Q1P0).unwrap();
        assert_relative_eq!(coarse.volume(), fine.volume(), max_relative = 1e-12);
    }
}
