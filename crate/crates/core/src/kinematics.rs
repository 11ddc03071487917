//! Pointwise deformation measures.
//!
//! The volumetric/isochoric split `F = J^{1/3} Fbar` is applied eagerly;
//! fibre quantities are attached separately because not every tissue
//! carries a fibre family.

use crate::error::{MyoError, Result};
use crate::tensor::{dev, sym, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibrePoint {
    /// Reference fibre direction (unit).
    pub a0: Vec3,
    /// Deformed fibre vector `Fbar a0`.
    pub a_spatial: Vec3,
    pub lambda: f64,
    pub lambdabar: f64,
    pub i4bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationPoint {
    pub f: Mat3,
    pub j: f64,
    pub fbar: Mat3,
    pub cbar: Mat3,
    pub bbar: Mat3,
    pub i1bar: f64,
    pub fibre: Option<FibrePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    /// Spatial velocity gradient.
    pub l: Mat3,
    /// Rate of strain, `sym(l)`.
    pub d: Mat3,
    /// Modified fibre strain rate.
    pub epsbar: f64,
}

impl RatePoint {
    pub fn at_rest() -> Self {
        Self {
            l: Mat3::zeros(),
            d: Mat3::zeros(),
            epsbar: 0.0,
        }
    }

    /// A rate point carrying only a prescribed fibre strain rate.
    pub fn with_epsbar(epsbar: f64) -> Self {
        Self {
            epsbar,
            ..Self::at_rest()
        }
    }
}

/// Builds `F = I + grad0_u` and the isochoric measures.
pub fn deformation_gradient(grad0_u: &Mat3) -> Result<DeformationPoint> {
    from_f(Mat3::identity() + grad0_u)
}

pub fn from_f(f: Mat3) -> Result<DeformationPoint> {
    let j = f.determinant();
    if !(j > 0.0) || !j.is_finite() {
        return Err(MyoError::NonPositiveJacobian {
            jacobian: j,
            cell: None,
        });
    }
    let fbar = f * j.powf(-1.0 / 3.0);
    let cbar = fbar.transpose() * fbar;
    let bbar = fbar * fbar.transpose();
    Ok(DeformationPoint {
        f,
        j,
        fbar,
        cbar,
        bbar,
        i1bar: cbar.trace(),
        fibre: None,
    })
}

/// Attaches fibre stretch measures for the reference direction `a0`.
pub fn fibre_measures(dp: &DeformationPoint, a0: &Vec3) -> DeformationPoint {
    debug_assert!((a0.norm() - 1.0).abs() <= 1e-10, "a0 must be a unit vector");
    let lambda = (dp.f * a0).norm();
    let a_spatial = dp.fbar * a0;
    let i4bar = a0.dot(&(dp.cbar * a0));
    let mut out = *dp;
    out.fibre = Some(FibrePoint {
        a0: *a0,
        a_spatial,
        lambda,
        lambdabar: dp.j.powf(-1.0 / 3.0) * lambda,
        i4bar,
    });
    out
}

/// Modified fibre strain rate from a spatial velocity gradient.
///
/// Uses the deviatoric part of `d`, so spherical rates do not stretch fibres.
pub fn fibre_strain_rate(dp: &DeformationPoint, l: &Mat3) -> RatePoint {
    let d = sym(l);
    let epsbar = match dp.fibre {
        Some(fp) if fp.lambdabar > 0.0 => {
            let a = fp.a_spatial;
            a.dot(&(dev(&d) * a)) / fp.lambdabar
        }
        _ => 0.0,
    };
    RatePoint { l: *l, d, epsbar }
}

/// Spatial velocity gradient `l = grad0(v) F^{-1}`.
pub fn spatial_velocity_gradient(grad0_v: &Mat3, f: &Mat3) -> Mat3 {
    match f.try_inverse() {
        Some(finv) => grad0_v * finv,
        None => Mat3::zeros(),
    }
}
