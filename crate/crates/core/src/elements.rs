//! Reference hexahedron: Lagrange and discontinuous monomial bases,
//! Gauss quadrature and the isoparametric map.
//!
//! Lagrange nodes are numbered lexicographically with `xi` fastest, so the
//! Q2 node at 1D positions `(i, j, k)` has index `i + 3 j + 9 k` with
//! positions `{-1, 0, 1}`. Local faces are numbered
//! `0: -xi, 1: +xi, 2: -eta, 3: +eta, 4: -zeta, 5: +zeta`.

use serde::{Deserialize, Serialize};

use crate::error::{MyoError, Result};
use crate::tensor::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Q1,
    Q2,
    P0Disc,
    P1Disc,
}

impl BasisKind {
    pub fn n_dofs(self) -> usize {
        match self {
            BasisKind::Q1 => 8,
            BasisKind::Q2 => 27,
            BasisKind::P0Disc => 1,
            BasisKind::P1Disc => 4,
        }
    }

    /// Lagrange points per axis (Q kinds only).
    fn points_per_axis(self) -> usize {
        match self {
            BasisKind::Q1 => 2,
            BasisKind::Q2 => 3,
            _ => 0,
        }
    }
}

/// 1D Lagrange values and derivatives on equispaced nodes over [-1, 1].
fn lagrange_1d(n: usize, x: f64) -> ([f64; 3], [f64; 3]) {
    match n {
        2 => ([0.5 * (1.0 - x), 0.5 * (1.0 + x), 0.0], [-0.5, 0.5, 0.0]),
        3 => (
            [0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)],
            [x - 0.5, -2.0 * x, x + 0.5],
        ),
        _ => unreachable!("unsupported Lagrange order"),
    }
}

/// Shape values and reference gradients of `kind` at `xi`.
pub fn shape_eval(kind: BasisKind, xi: &Vec3) -> (Vec<f64>, Vec<Vec3>) {
    match kind {
        BasisKind::P0Disc => (vec![1.0], vec![Vec3::zeros()]),
        BasisKind::P1Disc => (
            vec![1.0, xi.x, xi.y, xi.z],
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
        ),
        BasisKind::Q1 | BasisKind::Q2 => {
            let n = kind.points_per_axis();
            let (vx, dx) = lagrange_1d(n, xi.x);
            let (vy, dy) = lagrange_1d(n, xi.y);
            let (vz, dz) = lagrange_1d(n, xi.z);
            let mut vals = Vec::with_capacity(n * n * n);
            let mut grads = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        vals.push(vx[i] * vy[j] * vz[k]);
                        grads.push(Vec3::new(
                            dx[i] * vy[j] * vz[k],
                            vx[i] * dy[j] * vz[k],
                            vx[i] * vy[j] * dz[k],
                        ));
                    }
                }
            }
            (vals, grads)
        }
    }
}

/// Reference coordinates of the Lagrange nodes.
pub fn reference_nodes(kind: BasisKind) -> Vec<Vec3> {
    let n = kind.points_per_axis();
    let pos = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                out.push(Vec3::new(pos(i), pos(j), pos(k)));
            }
        }
    }
    out
}

/// Local node indices lying on local face `face`.
pub fn face_nodes(kind: BasisKind, face: usize) -> Vec<usize> {
    let n = kind.points_per_axis();
    let axis = face / 2;
    let fixed = if face % 2 == 0 { 0 } else { n - 1 };
    let mut out = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if [i, j, k][axis] == fixed {
                    out.push(i + n * j + n * n * k);
                }
            }
        }
    }
    out
}

/// Reference coordinates of the center of a local face.
pub fn face_center(face: usize) -> Vec3 {
    let mut c = Vec3::zeros();
    c[face / 2] = if face % 2 == 0 { -1.0 } else { 1.0 };
    c
}

fn gauss_1d(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6_f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let s = (6.0 / 5.0_f64).sqrt() * 2.0;
            let a = ((3.0 - s) / 7.0).sqrt();
            let b = ((3.0 + s) / 7.0).sqrt();
            let wa = (18.0 + 30.0_f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0_f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        5 => {
            let r = (10.0 / 7.0_f64).sqrt() * 2.0;
            let a = (5.0 - r).sqrt() / 3.0;
            let b = (5.0 + r).sqrt() / 3.0;
            let q = 13.0 * 70.0_f64.sqrt();
            let wa = (322.0 + q) / 900.0;
            let wb = (322.0 - q) / 900.0;
            vec![(-b, wb), (-a, wa), (0.0, 128.0 / 225.0), (a, wa), (b, wb)]
        }
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Tensor-product Gauss-Legendre rule with `order` points per axis.
pub fn gauss_rule(order: usize) -> Result<QuadratureRule> {
    if !(1..=5).contains(&order) {
        return Err(MyoError::Validation(format!(
            "Gauss order {order} outside 1..=5"
        )));
    }
    let g = gauss_1d(order);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(z, wz) in &g {
        for &(y, wy) in &g {
            for &(x, wx) in &g {
                points.push(Vec3::new(x, y, z));
                weights.push(wx * wy * wz);
            }
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Physical data of the isoparametric map at one reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub x0: Vec3,
    pub jac: Mat3,
    pub det: f64,
    pub grad0: Vec<Vec3>,
}

/// Maps shape data to the physical cell. `grads` are reference gradients.
pub fn isoparametric_map(nodes: &[Vec3], vals: &[f64], grads: &[Vec3]) -> Result<MapPoint> {
    debug_assert_eq!(nodes.len(), vals.len());
    let mut x0 = Vec3::zeros();
    let mut jac = Mat3::zeros();
    for ((x, &v), g) in nodes.iter().zip(vals).zip(grads) {
        x0 += x * v;
        jac += x * g.transpose();
    }
    let det = jac.determinant();
    if !(det > 0.0) {
        return Err(MyoError::InvertedCell {
            cell: usize::MAX,
            det,
        });
    }
    let jinv_t = jac.try_inverse().expect("det > 0").transpose();
    let grad0 = grads.iter().map(|g| jinv_t * g).collect();
    Ok(MapPoint {
        x0,
        jac,
        det,
        grad0,
    })
}

/// Field discretizations: displacement / pressure-and-dilation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ElementType {
    /// Trilinear displacement, piecewise-constant pressure and dilation.
    #[serde(rename = "Q1-P0")]
    Q1P0,
    /// Triquadratic displacement, discontinuous linear pressure and dilation.
    #[default]
    #[serde(rename = "Q2-P1")]
    Q2P1,
}

impl ElementType {
    pub fn displacement(self) -> BasisKind {
        match self {
            ElementType::Q1P0 => BasisKind::Q1,
            ElementType::Q2P1 => BasisKind::Q2,
        }
    }

    pub fn pressure(self) -> BasisKind {
        match self {
            ElementType::Q1P0 => BasisKind::P0Disc,
            ElementType::Q2P1 => BasisKind::P1Disc,
        }
    }

    pub fn quadrature_order(self) -> usize {
        match self {
            ElementType::Q1P0 => 2,
            ElementType::Q2P1 => 3,
        }
    }

    pub fn nodes_per_cell(self) -> usize {
        self.displacement().n_dofs()
    }

    pub fn from_nodes_per_cell(n: usize) -> Option<Self> {
        match n {
            8 => Some(ElementType::Q1P0),
            27 => Some(ElementType::Q2P1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementType::Q1P0 => "Q1-P0",
            ElementType::Q2P1 => "Q2-P1",
        }
    }
}

/// Shape tabulation at the quadrature points of an element type.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub u_vals: Vec<Vec<f64>>,
    pub u_grads: Vec<Vec<Vec3>>,
    pub p_vals: Vec<Vec<f64>>,
}

impl Tabulation {
    pub fn new(et: ElementType) -> Self {
        let rule = gauss_rule(et.quadrature_order()).expect("valid order");
        let mut u_vals = Vec::new();
        let mut u_grads = Vec::new();
        let mut p_vals = Vec::new();
        for xi in &rule.points {
            let (v, g) = shape_eval(et.displacement(), xi);
            u_vals.push(v);
            u_grads.push(g);
            p_vals.push(shape_eval(et.pressure(), xi).0);
        }
        Self {
            rule,
            u_vals,
            u_grads,
            p_vals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn q1_center_values() {
        let (v, _) = shape_eval(BasisKind::Q1, &Vec3::zeros());
        assert!(v.iter().all(|&x| x == 0.125));
    }

    #[test]
    fn kronecker_property() {
        for kind in [BasisKind::Q1, BasisKind::Q2] {
            for (i, xi) in reference_nodes(kind).iter().enumerate() {
                let (v, _) = shape_eval(kind, xi);
                for (j, &vj) in v.iter().enumerate() {
                    assert_eq!(vj, if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn p1_is_monomial() {
        let xi = Vec3::new(0.3, -0.7, 0.1);
        assert_eq!(
            shape_eval(BasisKind::P1Disc, &xi).0,
            vec![1.0, 0.3, -0.7, 0.1]
        );
        assert_eq!(BasisKind::P1Disc.n_dofs(), 4);
    }

    #[test]
    fn gauss_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.points, vec![Vec3::zeros()]);
        assert_eq!(r1.weights, vec![8.0]);
        let r2 = gauss_rule(2).unwrap();
        assert_eq!(r2.len(), 8);
        for (p, w) in r2.points.iter().zip(&r2.weights) {
            assert_relative_eq!(*w, 1.0, epsilon = 1e-15);
            for c in p.iter() {
                assert_relative_eq!(c.abs(), 1.0 / 3.0_f64.sqrt(), epsilon = 1e-15);
            }
        }
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(6).is_err());
    }

    fn integrate(rule: &QuadratureRule, f: impl Fn(&Vec3) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    fn monomial_integral(p: i32) -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            2.0 / (p as f64 + 1.0)
        }
    }

    #[test]
    fn exactness_by_degree() {
        for order in 1..=5 {
            let rule = gauss_rule(order).unwrap();
            let deg = 2 * order as i32 - 1;
            for a in 0..=deg {
                for b in 0..=deg {
                    for c in 0..=deg {
                        let got = integrate(&rule, |x| x.x.powi(a) * x.y.powi(b) * x.z.powi(c));
                        let exact =
                            monomial_integral(a) * monomial_integral(b) * monomial_integral(c);
                        assert!((got - exact).abs() < 1e-12, "order {order}: {a} {b} {c}");
                    }
                }
            }
        }
        // Negative/positive pair for the 3-point rule.
        let r3 = gauss_rule(3).unwrap();
        let f = |x: &Vec3| x.x.powi(6) * x.y.powi(2) * x.z.powi(2);
        let exact = monomial_integral(6) * monomial_integral(2) * monomial_integral(2);
        assert!((integrate(&r3, f) - exact).abs() > 1e-3);
        assert!(integrate(&r3, |x| x.x.powi(5)).abs() < 1e-15);
        let four = monomial_integral(4) * 2.0 * monomial_integral(2);
        assert!((integrate(&r3, |x| x.x.powi(4) * x.z.powi(2)) - four).abs() < 1e-12);
    }

    fn cube_nodes(kind: BasisKind, map: impl Fn(&Vec3) -> Vec3) -> Vec<Vec3> {
        reference_nodes(kind).iter().map(map).collect()
    }

    #[test]
    fn unit_cube_map() {
        for kind in [BasisKind::Q1, BasisKind::Q2] {
            let nodes = cube_nodes(kind, |x| {
                (x + Vec3::repeat(1.0)) * 0.5 + Vec3::new(3.0, -2.0, 7.0)
            });
            for xi in gauss_rule(3).unwrap().points {
                let (v, g) = shape_eval(kind, &xi);
                let mp = isoparametric_map(&nodes, &v, &g).unwrap();
                assert_relative_eq!(mp.det, 0.125, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sheared_map_has_constant_det() {
        let cot = 1.0 / 20f64.to_radians().tan();
        let nodes = cube_nodes(BasisKind::Q2, |x| {
            Vec3::new(2.0 * x.x + 0.5 * x.z * cot, x.y, 0.5 * x.z)
        });
        for xi in gauss_rule(3).unwrap().points {
            let (v, g) = shape_eval(BasisKind::Q2, &xi);
            let mp = isoparametric_map(&nodes, &v, &g).unwrap();
            assert_relative_eq!(mp.det, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn inverted_map_is_rejected() {
        let nodes = cube_nodes(BasisKind::Q1, |x| Vec3::new(-x.x, x.y, x.z));
        let (v, g) = shape_eval(BasisKind::Q1, &Vec3::zeros());
        assert!(matches!(
            isoparametric_map(&nodes, &v, &g),
            Err(MyoError::InvertedCell { .. })
        ));
    }

    #[test]
    fn face_node_sets() {
        assert_eq!(face_nodes(BasisKind::Q1, 0), vec![0, 2, 4, 6]);
        assert_eq!(face_nodes(BasisKind::Q1, 5), vec![4, 5, 6, 7]);
        assert_eq!(face_nodes(BasisKind::Q2, 1).len(), 9);
        for f in 0..6 {
            for &n in &face_nodes(BasisKind::Q2, f) {
                assert_eq!(
                    reference_nodes(BasisKind::Q2)[n][f / 2],
                    face_center(f)[f / 2]
                );
            }
        }
    }

    #[test]
    fn affine_patch_test() {
        let a = Mat3::new(0.1, -0.3, 0.2, 0.05, 0.4, -0.1, 0.0, 0.2, 0.3);
        let c = Vec3::new(0.5, -1.0, 2.0);
        for kind in [BasisKind::Q1, BasisKind::Q2] {
            let nodes = cube_nodes(kind, |x| {
                Vec3::new(1.5 * x.x + 0.2 * x.y, x.y, 0.7 * x.z + 0.1 * x.x)
            });
            let u: Vec<Vec3> = nodes.iter().map(|x| a * x + c).collect();
            for xi in gauss_rule(3).unwrap().points {
                let (v, g) = shape_eval(kind, &xi);
                let mp = isoparametric_map(&nodes, &v, &g).unwrap();
                let mut uh = Vec3::zeros();
                let mut grad = Mat3::zeros();
                for i in 0..v.len() {
                    uh += u[i] * v[i];
                    grad += u[i] * mp.grad0[i].transpose();
                }
                assert_relative_eq!(uh, a * mp.x0 + c, epsilon = 1e-12);
                assert_relative_eq!(grad, a, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            for kind in [BasisKind::Q1, BasisKind::Q2] {
                let (v, g) = shape_eval(kind, &Vec3::new(x, y, z));
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let gs: Vec3 = g.iter().sum();
                prop_assert!(gs.norm() < 1e-12);
            }
        }
    }
}
