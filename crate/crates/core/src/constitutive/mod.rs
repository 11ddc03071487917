//! Strain energies, pointwise stress and the consistent spatial tangent.

pub mod curves;
pub mod params;

pub use curves::{
    active_force_length, apo_ten_fibre_stress, force_velocity, passive_fibre_stress, ApoVariant,
};
pub use params::{
    mix_bulk_modulus, yeoh_energy_derivs, yeoh_uniaxial, yeoh_uniaxial_oracle, FibreCurve,
    MaterialLibrary, TissueKind, TissueParams, Yeoh,
};

use crate::error::{MyoError, Result};
use crate::kinematics::{DeformationPoint, RatePoint};
use crate::tensor::{
    dev, dev_projector4, identity_voigt, outer, sym_identity4, to_voigt, Mat3, Tangent, Voigt,
};

/// Volumetric energy, pressure and its dilation derivative.
pub fn volumetric_response(d: f64, kappa: f64) -> Result<(f64, f64, f64)> {
    if !(d > 0.0) {
        return Err(MyoError::NonPositiveDilation(d));
    }
    let psi = 0.25 * kappa * (d * d - 2.0 * d.ln() - 1.0);
    let p = 0.5 * kappa * (d - 1.0 / d);
    let dp = 0.5 * kappa * (1.0 + 1.0 / (d * d));
    Ok((psi, p, dp))
}

/// Fibre stress split into its passive and active parts (Pa), with
/// derivatives with respect to the modified stretch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FibreStress {
    pub passive: f64,
    pub active: f64,
    pub d_passive: f64,
    pub d_active: f64,
}

impl FibreStress {
    pub fn total(&self) -> f64 {
        self.passive + self.active
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            passive: s * self.passive,
            active: s * self.active,
            d_passive: s * self.d_passive,
            d_active: s * self.d_active,
        }
    }
}

/// Muscle fibre stress `sigma0 (a sigma_len(lambdabar + c_sarco) sigma_vel + sigma_pass)`.
///
/// `quasi_static` pins the force-velocity factor to one.
pub fn muscle_fibre_stress(
    lambdabar: f64,
    epsbar: f64,
    activation: f64,
    params: &TissueParams,
    quasi_static: bool,
) -> FibreStress {
    let vel = if quasi_static {
        1.0
    } else {
        force_velocity(epsbar, params.epsbar0)
    };
    let (len, dlen) = curves::force_length(lambdabar + params.c_sarco);
    let pass_arg = if params.shift_passive {
        lambdabar + params.c_sarco
    } else {
        lambdabar
    };
    let (pass, dpass) = curves::passive_muscle(pass_arg);
    let s0 = params.sigma0;
    FibreStress {
        passive: s0 * pass,
        active: s0 * activation * len * vel,
        d_passive: s0 * dpass,
        d_active: s0 * activation * dlen * vel,
    }
}

/// Fibre stress for any tissue, including the volume-fraction weight.
pub fn fibre_stress(
    lambdabar: f64,
    epsbar: f64,
    activation: f64,
    params: &TissueParams,
    quasi_static: bool,
) -> FibreStress {
    match params.fibre {
        FibreCurve::None => FibreStress::default(),
        FibreCurve::Muscle => {
            muscle_fibre_stress(lambdabar, epsbar, activation, params, quasi_static)
                .scaled(1.0 - params.beta)
        }
        FibreCurve::ApoTen {
            variant,
            regularized,
        } => {
            let (v, dv) = curves::apo_ten(lambdabar, variant, regularized);
            FibreStress {
                passive: params.sigma0 * v,
                d_passive: params.sigma0 * dv,
                ..Default::default()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressOptions {
    pub fibre_on: bool,
    pub quasi_static: bool,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            fibre_on: true,
            quasi_static: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub volumetric: Mat3,
    pub base: Mat3,
    pub fibre_passive: Mat3,
    pub fibre_active: Mat3,
}

impl Decomposition {
    pub fn sum(&self) -> Mat3 {
        self.volumetric + self.base + self.fibre_passive + self.fibre_active
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressPoint {
    /// Kirchhoff stress.
    pub tau: Mat3,
    pub tau_iso: Mat3,
    /// Volumetric pressure term `p J`.
    pub p_contrib: f64,
    /// Spatial tangent in Voigt form, pressure held fixed.
    pub c_tangent: Tangent,
    pub decomposition: Decomposition,
    /// Fibre stress used for this point (zero without fibres).
    pub fibre: FibreStress,
}

/// Kirchhoff stress `tau = p J I + dev(taubar)` with its spatial tangent.
pub fn evaluate_stress(
    dp: &DeformationPoint,
    rp: &RatePoint,
    p: f64,
    activation: f64,
    params: &TissueParams,
    opts: StressOptions,
) -> Result<StressPoint> {
    if !(dp.j > 0.0) {
        return Err(MyoError::NonPositiveJacobian {
            jacobian: dp.j,
            cell: None,
        });
    }
    let (w1, w11) = params.base_derivs(dp.i1bar);
    let bbar = dp.bbar;
    let taubar_base = bbar * (2.0 * w1);

    let eye = identity_voigt();
    let proj = dev_projector4();
    let dev_b = to_voigt(&dev(&bbar));
    let mut cbar_proj = outer(&dev_b, &dev_b) * (4.0 * w11);

    let mut taubar_pass = Mat3::zeros();
    let mut taubar_act = Mat3::zeros();
    let mut fs = FibreStress::default();
    if let (true, Some(fp)) = (opts.fibre_on, dp.fibre) {
        if params.fibre != FibreCurve::None {
            fs = fibre_stress(
                fp.lambdabar,
                rp.epsbar,
                activation,
                params,
                opts.quasi_static,
            );
            let l = fp.lambdabar;
            let aa = fp.a_spatial * fp.a_spatial.transpose();
            taubar_pass = aa * (fs.passive / (l * l));
            taubar_act = aa * (fs.active / (l * l));
            let sf = fs.total();
            let dsf = fs.d_passive + fs.d_active;
            let w44x4 = dsf / (l * l * l) - 2.0 * sf / (l * l * l * l);
            let dev_aa = to_voigt(&dev(&aa));
            cbar_proj += outer(&dev_aa, &dev_aa) * w44x4;
        }
    }

    let taubar = taubar_base + taubar_pass + taubar_act;
    let tau_iso = dev(&taubar);
    let tau_iso_v = to_voigt(&tau_iso);
    let c_iso = cbar_proj + proj * (2.0 / 3.0 * taubar.trace())
        - (outer(&eye, &tau_iso_v) + outer(&tau_iso_v, &eye)) * (2.0 / 3.0);

    let pj = p * dp.j;
    let c_vol = (outer(&eye, &eye) - sym_identity4() * 2.0) * pj;
    let vol = Mat3::identity() * pj;

    let decomposition = Decomposition {
        volumetric: vol,
        base: dev(&taubar_base),
        fibre_passive: dev(&taubar_pass),
        fibre_active: dev(&taubar_act),
    };
    Ok(StressPoint {
        tau: vol + tau_iso,
        tau_iso,
        p_contrib: pj,
        c_tangent: c_iso + c_vol,
        decomposition,
        fibre: fs,
    })
}

/// Tangent data at a point: the displacement block plus the pressure and
/// dilation couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPoint {
    pub c: Tangent,
    /// `d tau / d p` in Voigt form (`J I`).
    pub dtau_dp: Voigt,
    /// Second derivative of the volumetric energy in `D`.
    pub dp_dd: f64,
}

pub fn evaluate_tangent(
    dp: &DeformationPoint,
    rp: &RatePoint,
    p: f64,
    d: f64,
    activation: f64,
    params: &TissueParams,
    opts: StressOptions,
) -> Result<TangentPoint> {
    let sp = evaluate_stress(dp, rp, p, activation, params, opts)?;
    let (_, _, dp_dd) = volumetric_response(d, params.kappa)?;
    Ok(TangentPoint {
        c: sp.c_tangent,
        dtau_dp: identity_voigt() * dp.j,
        dp_dd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{deformation_gradient, fibre_measures, from_f};
    use crate::tensor::{sym, Vec3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn muscle() -> TissueParams {
        MaterialLibrary::default().tissue(TissueKind::Muscle)
    }

    fn point(f: Mat3, a0: Vec3) -> DeformationPoint {
        fibre_measures(&from_f(f).unwrap(), &a0)
    }

    fn strain_voigt(d: &Mat3) -> Voigt {
        Voigt::new(
            d[(0, 0)],
            d[(1, 1)],
            d[(2, 2)],
            2.0 * d[(0, 1)],
            2.0 * d[(1, 2)],
            2.0 * d[(0, 2)],
        )
    }

    fn random_f(rng: &mut impl Rng, amp: f64) -> Mat3 {
        Mat3::identity() + Mat3::from_fn(|_, _| rng.random_range(-amp..amp))
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn volumetric_examples() {
        assert_eq!(volumetric_response(1.0, 7.0).unwrap(), (0.0, 0.0, 7.0));
        assert_eq!(volumetric_response(2.0, 4.0).unwrap().1, 3.0);
        assert!(volumetric_response(0.9, 1.0).unwrap().1 < 0.0);
        assert!(volumetric_response(1.1, 1.0).unwrap().1 > 0.0);
        assert!(matches!(
            volumetric_response(0.0, 1.0),
            Err(MyoError::NonPositiveDilation(_))
        ));
    }

    #[test]
    fn muscle_fibre_examples() {
        let m = muscle();
        assert_eq!(muscle_fibre_stress(1.0, 0.0, 0.0, &m, false).total(), 0.0);
        let s = muscle_fibre_stress(1.0, 0.0, 1.0, &m, false).total();
        assert_relative_eq!(
            s,
            m.sigma0 * active_force_length(1.0, 0.0),
            max_relative = 1e-15
        );
        let plateau = muscle_fibre_stress(1.0, 0.8 * m.epsbar0, 1.0, &m, false).total();
        assert_relative_eq!(
            plateau,
            m.sigma0 * 1.5950 * active_force_length(1.0, 0.0),
            max_relative = 1e-15
        );
        let qs = muscle_fibre_stress(1.0, 0.8 * m.epsbar0, 1.0, &m, true).total();
        assert_relative_eq!(qs, s, max_relative = 1e-15);
    }

    #[test]
    fn rest_state_is_stress_free() {
        let dp = point(Mat3::identity(), Vec3::x());
        let sp = evaluate_stress(
            &dp,
            &RatePoint::at_rest(),
            0.0,
            0.0,
            &muscle(),
            StressOptions::default(),
        )
        .unwrap();
        assert!(sp.tau.norm() < 1e-10);
        let sp = evaluate_stress(
            &dp,
            &RatePoint::at_rest(),
            5e3,
            0.0,
            &muscle(),
            StressOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(sp.tau, Mat3::identity() * 5e3, epsilon = 1e-9);
    }

    #[test]
    fn fibre_stress_along_fibre_matches_curve() {
        let s = 1.0 / 1.2_f64.sqrt();
        let dp = point(Mat3::from_diagonal(&Vec3::new(1.2, s, s)), Vec3::x());
        let mut m = muscle();
        m.beta = 0.0;
        let sp = evaluate_stress(
            &dp,
            &RatePoint::at_rest(),
            0.0,
            1.0,
            &m,
            StressOptions::default(),
        )
        .unwrap();
        let f = sp.decomposition.fibre_passive + sp.decomposition.fibre_active;
        // dev(sigma e1 e1) has 11-component 2/3 sigma.
        let expect = muscle_fibre_stress(1.2, 0.0, 1.0, &m, false).total();
        assert_relative_eq!(f[(0, 0)] * 1.5, expect, max_relative = 1e-12);
        assert_relative_eq!(f[(0, 0)] - f[(1, 1)], expect, max_relative = 1e-12);
    }

    #[test]
    fn decomposition_sums_to_tau() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let f = random_f(&mut rng, 0.2);
            let dp = point(f, Vec3::new(1.0, 1.0, 0.0).normalize());
            let sp = evaluate_stress(
                &dp,
                &RatePoint::with_epsbar(-0.5),
                1234.0,
                0.7,
                &muscle(),
                StressOptions::default(),
            )
            .unwrap();
            assert!((sp.decomposition.sum() - sp.tau).norm() <= 1e-9 * sp.tau.norm());
            assert!((sp.tau - sp.tau.transpose()).norm() <= 1e-9 * sp.tau.norm());
            assert!(sp.tau_iso.trace().abs() <= 1e-9 * sp.tau_iso.norm());
        }
    }

    fn fd_check(params: &TissueParams, rng: &mut impl Rng, activation: f64, p: f64) {
        let f = random_f(rng, 0.15);
        let a0 = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            1.0,
        )
        .normalize();
        let rp = RatePoint::with_epsbar(0.3);
        let opts = StressOptions::default();
        let sp = evaluate_stress(&point(f, a0), &rp, p, activation, params, opts).unwrap();
        let l = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let h = 1e-6;
        let tau_at = |s: f64| {
            let ff = f + l * f * s;
            evaluate_stress(&point(ff, a0), &rp, p, activation, params, opts)
                .unwrap()
                .tau
        };
        let dtau = (tau_at(h) - tau_at(-h)) / (2.0 * h);
        let lie = dtau - l * sp.tau - sp.tau * l.transpose();
        let pred = sp.c_tangent * strain_voigt(&sym(&l));
        let err = (to_voigt(&lie) - pred).norm() / pred.norm().max(1e-30);
        assert!(err <= 1e-5, "tangent mismatch {err}");
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let lib = MaterialLibrary::default();
        for _ in 0..10 {
            fd_check(&lib.tissue(TissueKind::Muscle), &mut rng, 0.8, 2e3);
            fd_check(&lib.tissue(TissueKind::Aponeurosis), &mut rng, 0.0, -1e4);
            fd_check(&lib.tissue(TissueKind::Fat), &mut rng, 0.0, 0.0);
        }
    }

    #[test]
    fn tangent_is_symmetric() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let dp = point(random_f(&mut rng, 0.2), Vec3::z());
            let sp = evaluate_stress(
                &dp,
                &RatePoint::at_rest(),
                3e3,
                1.0,
                &muscle(),
                StressOptions::default(),
            )
            .unwrap();
            let c = sp.c_tangent;
            assert!((c - c.transpose()).norm() <= 1e-8 * c.norm());
        }
    }

    #[test]
    fn kappa_only_material_has_no_deviatoric_tangent() {
        let mut m = muscle();
        m.yeoh_ecm = Yeoh([0.0; 3]);
        m.yeoh_cell = Yeoh([0.0; 3]);
        m.fat_c1 = 0.0;
        m.fibre = FibreCurve::None;
        let dp = deformation_gradient(&Mat3::zeros()).unwrap();
        let tp = evaluate_tangent(
            &dp,
            &RatePoint::at_rest(),
            0.0,
            1.0,
            0.0,
            &m,
            StressOptions::default(),
        )
        .unwrap();
        assert_eq!(tp.c, Tangent::zeros());
        assert_eq!(tp.dp_dd, m.kappa);
    }

    #[test]
    fn fibre_only_tangent_at_identity_is_rank_one() {
        let mut apo = MaterialLibrary::default().tissue(TissueKind::Aponeurosis);
        apo.yeoh_ecm = Yeoh([0.0; 3]);
        apo.yeoh_cell = Yeoh([0.0; 3]);
        apo.fibre = FibreCurve::Muscle;
        apo.beta = 0.0;
        let dp = point(Mat3::identity(), Vec3::x());
        let sp = evaluate_stress(
            &dp,
            &RatePoint::at_rest(),
            0.0,
            1.0,
            &apo,
            StressOptions::default(),
        )
        .unwrap();
        let (_, dlen) = curves::force_length(1.0);
        let aa = to_voigt(&dev(&(Vec3::x() * Vec3::x().transpose())));
        let sigma = apo.sigma0 * active_force_length(1.0, 0.0);
        // Stress terms at lambda = 1 reduce to the active fibre stress.
        let expect = outer(&aa, &aa) * (apo.sigma0 * dlen - 2.0 * sigma)
            + dev_projector4() * (2.0 / 3.0 * sigma)
            - (outer(&identity_voigt(), &to_voigt(&sp.tau_iso))
                + outer(&to_voigt(&sp.tau_iso), &identity_voigt()))
                * (2.0 / 3.0);
        assert_relative_eq!(sp.c_tangent, expect, max_relative = 1e-12, epsilon = 1e-6);

        let mut passive = apo;
        passive.sigma0 = 0.0;
        let sp = evaluate_stress(
            &dp,
            &RatePoint::at_rest(),
            0.0,
            1.0,
            &passive,
            StressOptions::default(),
        )
        .unwrap();
        assert_eq!(sp.c_tangent, Tangent::zeros());
    }

    #[test]
    fn objectivity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let f = random_f(&mut rng, 0.25);
            let q = random_rotation(&mut rng);
            let a0 = Vec3::new(0.3, -0.2, 0.9).normalize();
            let args = |f: Mat3| {
                evaluate_stress(
                    &point(f, a0),
                    &RatePoint::with_epsbar(0.2),
                    800.0,
                    0.6,
                    &muscle(),
                    StressOptions::default(),
                )
                .unwrap()
                .tau
            };
            let t = args(f);
            let tq = args(q * f);
            assert!((tq - q * t * q.transpose()).norm() <= 1e-9 * t.norm().max(1.0));
        }
    }

    #[test]
    fn isochoric_stress_ignores_dilation() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let f = random_f(&mut rng, 0.2);
            let c = rng.random_range(0.7..1.4);
            let iso = |f: Mat3| {
                evaluate_stress(
                    &point(f, Vec3::y()),
                    &RatePoint::at_rest(),
                    0.0,
                    0.3,
                    &muscle(),
                    StressOptions::default(),
                )
                .unwrap()
                .tau_iso
            };
            let t = iso(f);
            assert!((iso(f * c) - t).norm() <= 1e-9 * t.norm());
        }
    }
}
