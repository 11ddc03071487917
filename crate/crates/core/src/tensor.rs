//! Small dense tensor helpers shared by the pointwise modules.
//!
//! Voigt ordering is (11, 22, 33, 12, 23, 13). Stress-like vectors carry
//! plain components, strain-like vectors carry engineering shears, so a
//! 6x6 tangent maps strain-like to stress-like without extra factors.

use nalgebra::{Matrix3, Matrix6, Vector6};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Voigt = Vector6<f64>;
pub type Tangent = Matrix6<f64>;

pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

pub fn sym(a: &Mat3) -> Mat3 {
    (a + a.transpose()) * 0.5
}

pub fn dev(a: &Mat3) -> Mat3 {
    a - Mat3::identity() * (a.trace() / 3.0)
}

pub fn to_voigt(a: &Mat3) -> Voigt {
    Voigt::new(
        a[(0, 0)],
        a[(1, 1)],
        a[(2, 2)],
        a[(0, 1)],
        a[(1, 2)],
        a[(0, 2)],
    )
}

pub fn from_voigt(v: &Voigt) -> Mat3 {
    Mat3::new(
        v[0], v[3], v[5], //
        v[3], v[1], v[4], //
        v[5], v[4], v[2],
    )
}

pub fn identity_voigt() -> Voigt {
    Voigt::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
}

/// Fourth-order symmetric identity in the stress/strain Voigt mapping.
pub fn sym_identity4() -> Tangent {
    Tangent::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 0.5, 0.5, 0.5))
}

/// Spatial deviatoric projector `I4sym - I (x) I / 3`.
pub fn dev_projector4() -> Tangent {
    let i = identity_voigt();
    sym_identity4() - i * i.transpose() / 3.0
}

pub fn outer(a: &Voigt, b: &Voigt) -> Tangent {
    a * b.transpose()
}

pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

/// Fourth-order tensor entry `c_ijkl` from its Voigt form (minor symmetries assumed).
pub fn voigt_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (1, 2) => 4,
        (0, 2) => 5,
        _ => unreachable!(),
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
