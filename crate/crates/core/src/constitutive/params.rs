//! Tissue parameter sets and the parameter file format.

use serde::{Deserialize, Serialize};

use super::curves::ApoVariant;
use crate::error::{MyoError, Result};

pub const DEFAULT_PARAMS: &str = include_str!("../../data/default_params.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TissueKind {
    Muscle,
    Aponeurosis,
    Tendon,
    Fat,
}

impl TissueKind {
    pub const ALL: [TissueKind; 4] = [
        TissueKind::Muscle,
        TissueKind::Aponeurosis,
        TissueKind::Tendon,
        TissueKind::Fat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TissueKind::Muscle => "muscle",
            TissueKind::Aponeurosis => "aponeurosis",
            TissueKind::Tendon => "tendon",
            TissueKind::Fat => "fat",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Yeoh coefficients `c1..c3` in Pa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Yeoh(pub [f64; 3]);

impl Yeoh {
    pub fn neo_hookean(c1: f64) -> Self {
        Yeoh([c1, 0.0, 0.0])
    }

    /// `(dPsi/dI1, d2Psi/dI1^2)`.
    pub fn derivs(&self, i1bar: f64) -> (f64, f64) {
        yeoh_energy_derivs(i1bar, self.0[0], self.0[1], self.0[2])
    }
}

pub fn yeoh_energy_derivs(i1bar: f64, c1: f64, c2: f64, c3: f64) -> (f64, f64) {
    debug_assert!(
        i1bar >= 3.0 - 1e-9,
        "I1bar below attainable minimum: {i1bar}"
    );
    let x = i1bar - 3.0;
    (
        c1 + 2.0 * c2 * x + 3.0 * c3 * x * x,
        2.0 * c2 + 6.0 * c3 * x,
    )
}

/// Uniaxial incompressible Yeoh stress with the c3 term exactly as tabulated
/// in the fitting section (linear rather than squared).
pub fn yeoh_uniaxial_oracle(lambda: f64, c1: f64, c2: f64, c3: f64) -> f64 {
    let x = lambda * lambda + 2.0 / lambda - 3.0;
    2.0 * (lambda * lambda - 1.0 / lambda) * (c1 + 2.0 * c2 * x + 3.0 * c3 * x)
}

/// Energy-consistent incompressible uniaxial Yeoh stress.
pub fn yeoh_uniaxial(lambda: f64, c1: f64, c2: f64, c3: f64) -> f64 {
    let i1 = lambda * lambda + 2.0 / lambda;
    2.0 * (lambda * lambda - 1.0 / lambda) * yeoh_energy_derivs(i1, c1, c2, c3).0
}

pub fn mix_bulk_modulus(
    alpha: f64,
    beta: f64,
    kappa_ecm: f64,
    kappa_cell: f64,
    kappa_fat: f64,
) -> f64 {
    (1.0 - beta) * (alpha * kappa_ecm + (1.0 - alpha) * kappa_cell) + beta * kappa_fat
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FibreCurve {
    None,
    Muscle,
    ApoTen {
        variant: ApoVariant,
        regularized: bool,
    },
}

/// Pointwise material description for one tissue.
///
/// Every tissue uses the same base-material mixture
/// `(1 - beta) (alpha Psi_ecm + (1 - alpha) Psi_cell) + beta Psi_fat`;
/// connective tissues set `alpha = beta = 0` with their own Yeoh set in
/// `yeoh_cell`, pure fat sets `beta = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueParams {
    pub kind: TissueKind,
    pub kappa: f64,
    pub yeoh_ecm: Yeoh,
    pub yeoh_cell: Yeoh,
    pub fat_c1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub epsbar0: f64,
    pub c_sarco: f64,
    pub rho0: f64,
    pub shift_passive: bool,
    pub fibre: FibreCurve,
}

impl TissueParams {
    /// Base-material `(W1, W11)` at `i1bar`.
    pub fn base_derivs(&self, i1bar: f64) -> (f64, f64) {
        let (e1, e2) = self.yeoh_ecm.derivs(i1bar);
        let (c1, c2) = self.yeoh_cell.derivs(i1bar);
        let w = 1.0 - self.beta;
        (
            w * (self.alpha * e1 + (1.0 - self.alpha) * c1) + self.beta * self.fat_c1,
            w * (self.alpha * e2 + (1.0 - self.alpha) * c2),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MyoError::Validation(format!("{}: {m}", self.kind.name())));
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("volume fractions must lie in [0, 1]");
        }
        if !(self.epsbar0 > 0.0) {
            return bad("epsbar0 must be positive");
        }
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.sigma0 >= 0.0) {
            return bad("sigma0 must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum YeohUnit {
    #[default]
    Pa,
    #[serde(rename = "kPa")]
    KPa,
    MPa,
}

impl YeohUnit {
    fn scale(self) -> f64 {
        match self {
            YeohUnit::Pa => 1.0,
            YeohUnit::KPa => 1e3,
            YeohUnit::MPa => 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSection {
    pub alpha: f64,
    pub beta: f64,
    pub c_sarco: f64,
    #[serde(default)]
    pub shift_passive: bool,
    pub sigma0: f64,
    pub epsbar0: f64,
    pub rho0: f64,
    pub kappa_ecm: f64,
    pub kappa_cell: f64,
    #[serde(default)]
    pub yeoh_unit: YeohUnit,
    pub yeoh_ecm: [f64; 3],
    pub yeoh_cell: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FatSection {
    pub kappa: f64,
    pub c1: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectiveSection {
    pub kappa: f64,
    #[serde(default)]
    pub yeoh_unit: YeohUnit,
    pub yeoh: [f64; 3],
    pub sigma0: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    #[serde(default)]
    pub apo_variant: ApoVariant,
    #[serde(default)]
    pub apo_regularized: bool,
}

/// Contents of a material parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialLibrary {
    pub muscle: MuscleSection,
    pub fat: FatSection,
    pub aponeurosis: ConnectiveSection,
    pub tendon: ConnectiveSection,
    #[serde(default)]
    pub curves: CurveSection,
}

impl Default for MaterialLibrary {
    fn default() -> Self {
        Self::parse(DEFAULT_PARAMS).expect("bundled parameter file is valid")
    }
}

impl MaterialLibrary {
    pub fn parse(text: &str) -> Result<Self> {
        let lib: Self = toml::from_str(text).map_err(|e| MyoError::Config(e.to_string()))?;
        for kind in TissueKind::ALL {
            lib.tissue(kind).validate()?;
        }
        Ok(lib)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let lib: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| MyoError::Config(e.to_string()))?;
        for kind in TissueKind::ALL {
            lib.tissue(kind).validate()?;
        }
        Ok(lib)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("material library serializes")
    }

    pub fn muscle_kappa(&self) -> f64 {
        let m = &self.muscle;
        mix_bulk_modulus(m.alpha, m.beta, m.kappa_ecm, m.kappa_cell, self.fat.kappa)
    }

    pub fn tissue(&self, kind: TissueKind) -> TissueParams {
        let m = &self.muscle;
        let common = TissueParams {
            kind,
            kappa: 0.0,
            yeoh_ecm: Yeoh([0.0; 3]),
            yeoh_cell: Yeoh([0.0; 3]),
            fat_c1: self.fat.c1,
            alpha: 0.0,
            beta: 0.0,
            sigma0: 0.0,
            epsbar0: m.epsbar0,
            c_sarco: 0.0,
            rho0: 0.0,
            shift_passive: false,
            fibre: FibreCurve::None,
        };
        let scaled = |c: [f64; 3], u: YeohUnit| Yeoh(c.map(|x| x * u.scale()));
        match kind {
            TissueKind::Muscle => TissueParams {
                kappa: self.muscle_kappa(),
                yeoh_ecm: scaled(m.yeoh_ecm, m.yeoh_unit),
                yeoh_cell: scaled(m.yeoh_cell, m.yeoh_unit),
                alpha: m.alpha,
                beta: m.beta,
                sigma0: m.sigma0,
                c_sarco: m.c_sarco,
                rho0: m.rho0,
                shift_passive: m.shift_passive,
                fibre: FibreCurve::Muscle,
                ..common
            },
            TissueKind::Fat => TissueParams {
                kappa: self.fat.kappa,
                beta: 1.0,
                rho0: self.fat.rho0,
                ..common
            },
            TissueKind::Aponeurosis | TissueKind::Tendon => {
                let s = if kind == TissueKind::Tendon {
                    &self.tendon
                } else {
                    &self.aponeurosis
                };
                let y = scaled(s.yeoh, s.yeoh_unit);
                TissueParams {
                    kappa: s.kappa,
                    yeoh_ecm: y,
                    yeoh_cell: y,
                    sigma0: s.sigma0,
                    rho0: s.rho0,
                    fibre: FibreCurve::ApoTen {
                        variant: self.curves.apo_variant,
                        regularized: self.curves.apo_regularized,
                    },
                    ..common
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bulk_modulus_mixture() {
        assert_eq!(mix_bulk_modulus(1.0, 0.0, 1e6, 1e7, 1e7), 1e6);
        assert_relative_eq!(
            mix_bulk_modulus(0.02, 0.1, 1e6, 1e7, 1e7),
            9.838e6,
            max_relative = 1e-12
        );
        // (1 - 0.2) (0.4e6 + 0.6e7) + 0.2e7
        assert_relative_eq!(
            mix_bulk_modulus(0.4, 0.2, 1e6, 1e7, 1e7),
            7.12e6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn yeoh_derivatives() {
        assert_eq!(yeoh_energy_derivs(3.0, 3703.0, -707.7, 123.2).0, 3703.0);
        let x: f64 = 0.028182;
        let expect = 3703.0 - 2.0 * 707.7 * x + 3.0 * 123.2 * x * x;
        let got = yeoh_energy_derivs(3.028182, 3703.0, -707.7, 123.2).0;
        assert_relative_eq!(got, expect, max_relative = 1e-14);
        assert!((got - 3663.4).abs() < 0.05);
        assert_eq!(Yeoh::neo_hookean(0.13e6).derivs(4.2).0, 0.13e6);
    }

    #[test]
    fn uniaxial_forms() {
        assert_eq!(yeoh_uniaxial_oracle(1.0, 3703.0, -707.7, 123.2), 0.0);
        assert_relative_eq!(
            yeoh_uniaxial_oracle(1.1, 3703.0, -707.7, 123.2),
            2.21e3,
            max_relative = 1e-3
        );
        assert!(yeoh_uniaxial_oracle(0.95, 3703.0, -707.7, 123.2) < 0.0);
        // The two forms differ only through the c3 term.
        assert_eq!(
            yeoh_uniaxial(1.3, 1.0, 2.0, 0.0),
            yeoh_uniaxial_oracle(1.3, 1.0, 2.0, 0.0)
        );
    }

    #[test]
    fn bundled_file_carries_printed_values() {
        let lib = MaterialLibrary::default();
        assert_eq!(lib.muscle.yeoh_cell, [3703.0, -707.7, 123.2]);
        assert_eq!(lib.aponeurosis.yeoh, [4.6896264, -3.455141, 484.92055]);
        assert_eq!(lib.fat.c1, 0.13e6);
        let m = lib.tissue(TissueKind::Muscle);
        assert_relative_eq!(m.kappa, 9.838e6, max_relative = 1e-12);
        let apo = lib.tissue(TissueKind::Aponeurosis);
        assert_eq!(apo.kappa, 1e8);
        assert_relative_eq!(apo.base_derivs(3.0).0, 4.6896264e6, max_relative = 1e-15);
        assert_eq!(lib.tissue(TissueKind::Fat).base_derivs(3.5).0, 0.13e6);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = DEFAULT_PARAMS.replace("sigma0 = 2.0e5\nepsbar0", "sigma00 = 2.0e5\nepsbar0");
        let err = MaterialLibrary::parse(&text).unwrap_err();
        assert!(err.to_string().contains("sigma00"), "{err}");
    }

    #[test]
    fn serialization_round_trip() {
        let lib = MaterialLibrary::default();
        assert_eq!(MaterialLibrary::parse(&lib.to_toml()).unwrap(), lib);
    }
}
