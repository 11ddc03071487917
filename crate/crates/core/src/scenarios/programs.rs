//! Activation schedules and prescribed-displacement programs.

use serde::{Deserialize, Serialize};

use crate::constitutive::TissueKind;
use crate::error::{MyoError, Result};
use crate::mesh::Mesh;
use crate::tensor::Vec3;

/// Excitation `u0(t)` driving the activation ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Excitation {
    Constant {
        level: f64,
    },
    /// `level` for the first `duty` fraction of each period after `delay`.
    SquareWave {
        period: f64,
        duty: f64,
        level: f64,
        #[serde(default)]
        delay: f64,
    },
}

impl Excitation {
    pub fn value(&self, t: f64) -> f64 {
        let u = match *self {
            Excitation::Constant { level } => level,
            Excitation::SquareWave {
                period,
                duty,
                level,
                delay,
            } => {
                if t < delay {
                    0.0
                } else {
                    let phase = ((t - delay) / period).fract();
                    if phase < duty {
                        level
                    } else {
                        0.0
                    }
                }
            }
        };
        u.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActivationProgram {
    #[default]
    None,
    /// Zero before `t_start`, linear to `level` at `t_end`, then held.
    Ramp {
        t_start: f64,
        t_end: f64,
        level: f64,
    },
    Hold {
        level: f64,
    },
    /// `da/dt + (beta + (1 - beta) u0) / tau_act a = u0 / tau_act`, `a(0) = a0`.
    Zajac {
        tau_act: f64,
        beta_deact: f64,
        excitation: Excitation,
        #[serde(default)]
        a0: f64,
    },
}

impl ActivationProgram {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MyoError::Validation(format!("activation: {m}")));
        match *self {
            ActivationProgram::None => Ok(()),
            ActivationProgram::Ramp {
                t_start,
                t_end,
                level,
            } => {
                if !(t_end > t_start) {
                    return bad("ramp needs t_end > t_start");
                }
                if !(0.0..=1.0).contains(&level) {
                    return bad("ramp level must lie in [0, 1]");
                }
                Ok(())
            }
            ActivationProgram::Hold { level } => {
                if !(0.0..=1.0).contains(&level) {
                    return bad("hold level must lie in [0, 1]");
                }
                Ok(())
            }
            ActivationProgram::Zajac {
                tau_act,
                beta_deact,
                excitation,
                a0,
            } => {
                if !(tau_act > 0.0) {
                    return bad("tau_act must be positive");
                }
                if !(beta_deact > 0.0 && beta_deact <= 1.0) {
                    return bad("beta_deact must lie in (0, 1]");
                }
                if !(0.0..=1.0).contains(&a0) {
                    return bad("a0 must lie in [0, 1]");
                }
                if let Excitation::SquareWave { period, duty, .. } = excitation {
                    if !(period > 0.0) || !(0.0..=1.0).contains(&duty) {
                        return bad("square wave needs period > 0 and duty in [0, 1]");
                    }
                }
                Ok(())
            }
        }
    }
}

/// Time-dependent activation level. Closed-form programs are evaluated
/// directly; the ODE is integrated with implicit Euler as time advances.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationState {
    pub program: ActivationProgram,
    pub t: f64,
    pub a: f64,
}

impl ActivationState {
    pub fn new(program: ActivationProgram) -> Self {
        let a = match program {
            ActivationProgram::Zajac { a0, .. } => a0,
            _ => 0.0,
        };
        let mut s = Self { program, t: 0.0, a };
        s.a = s.closed_form(0.0).unwrap_or(s.a);
        s
    }

    fn closed_form(&self, t: f64) -> Option<f64> {
        let v = match self.program {
            ActivationProgram::None => 0.0,
            ActivationProgram::Hold { level } => level,
            ActivationProgram::Ramp {
                t_start,
                t_end,
                level,
            } => {
                if t <= t_start {
                    0.0
                } else if t >= t_end {
                    level
                } else {
                    level * (t - t_start) / (t_end - t_start)
                }
            }
            ActivationProgram::Zajac { .. } => return None,
        };
        Some(v.clamp(0.0, 1.0))
    }

    /// Advances to time `t` and returns the activation there.
    pub fn advance(&mut self, t: f64) -> f64 {
        if let Some(v) = self.closed_form(t) {
            self.a = v;
        } else if let ActivationProgram::Zajac {
            tau_act,
            beta_deact,
            excitation,
            ..
        } = self.program
        {
            let dt = t - self.t;
            if dt > 0.0 {
                let u = excitation.value(t);
                let rate = (beta_deact + (1.0 - beta_deact) * u) / tau_act;
                self.a = ((self.a + dt * u / tau_act) / (1.0 + dt * rate)).clamp(0.0, 1.0);
            }
        }
        self.t = t;
        self.a
    }
}

/// Cells receiving activation: tissue regions and an optional box on the
/// cell centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivationMask {
    pub regions: Vec<TissueKind>,
    /// `[[xmin, ymin, zmin], [xmax, ymax, zmax]]` in metres.
    pub bounds: Option<[[f64; 3]; 2]>,
}

impl Default for ActivationMask {
    fn default() -> Self {
        Self {
            regions: vec![TissueKind::Muscle],
            bounds: None,
        }
    }
}

impl ActivationMask {
    pub fn cells(&self, mesh: &Mesh) -> Vec<bool> {
        (0..mesh.n_cells())
            .map(|c| {
                if !self.regions.contains(&mesh.regions[c]) {
                    return false;
                }
                match self.bounds {
                    None => true,
                    Some([lo, hi]) => {
                        let x = mesh.cell_coords(c);
                        let centre = x.iter().fold(Vec3::zeros(), |a, b| a + b) / x.len() as f64;
                        (0..3).all(|i| centre[i] >= lo[i] && centre[i] <= hi[i])
                    }
                }
            })
            .collect()
    }
}

/// Prescribed displacement component as a function of time (m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisplacementProgram {
    Fixed,
    Hold {
        value: f64,
    },
    /// Zero until `t_start`, then `rate (t - t_start)` until `t_end`, then held.
    Ramp {
        t_start: f64,
        t_end: f64,
        rate: f64,
    },
    Sinusoid {
        amplitude: f64,
        frequency: f64,
    },
    /// `offset` until `t_start`, then moving at `velocity` (m/s).
    ConstantVelocity {
        velocity: f64,
        #[serde(default)]
        t_start: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Linear interpolation through `(times, values)`, held beyond the ends.
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DisplacementProgram {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            DisplacementProgram::Fixed => 0.0,
            DisplacementProgram::Hold { value } => *value,
            DisplacementProgram::Ramp {
                t_start,
                t_end,
                rate,
            } => rate * (t.clamp(*t_start, *t_end) - t_start),
            DisplacementProgram::Sinusoid {
                amplitude,
                frequency,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            DisplacementProgram::ConstantVelocity {
                velocity,
                t_start,
                offset,
            } => offset + velocity * (t - t_start).max(0.0),
            DisplacementProgram::PiecewiseLinear { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last];
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + s * (values[k + 1] - values[k])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MyoError::Validation(format!("boundary program: {m}")));
        match self {
            DisplacementProgram::Ramp { t_start, t_end, .. } if !(t_end > t_start) => {
                bad("ramp needs t_end > t_start")
            }
            DisplacementProgram::Sinusoid { frequency, .. } if !(*frequency > 0.0) => {
                bad("frequency must be positive")
            }
            DisplacementProgram::PiecewiseLinear { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return bad("piecewise-linear needs matching, non-empty times and values");
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("piecewise-linear times must increase strictly");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Prescribed displacement on the listed components of a node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceConstraint {
    /// Face or node set name, e.g. "-x".
    pub set: String,
    /// Components (0 = x, 1 = y, 2 = z) receiving the program value.
    pub components: Vec<usize>,
    pub program: DisplacementProgram,
}

/// Constrained dofs with the program that drives each one.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConstraints {
    /// Sorted global dof indices.
    pub dofs: Vec<usize>,
    /// Index into the constraint list, per dof.
    pub source: Vec<usize>,
    pub programs: Vec<DisplacementProgram>,
}

impl ResolvedConstraints {
    /// Later entries take precedence where sets overlap.
    pub fn new(mesh: &Mesh, constraints: &[FaceConstraint]) -> Result<Self> {
        let mut owner = std::collections::BTreeMap::new();
        for (k, fc) in constraints.iter().enumerate() {
            fc.program.validate()?;
            let nodes = mesh.set_nodes(&fc.set).ok_or_else(|| {
                MyoError::Validation(format!("unknown face or node set {:?}", fc.set))
            })?;
            if fc.components.is_empty() || fc.components.iter().any(|&c| c > 2) {
                return Err(MyoError::Validation(format!(
                    "constraint on {:?}: components must be a non-empty subset of 0, 1, 2",
                    fc.set
                )));
            }
            for n in nodes {
                for &c in &fc.components {
                    owner.insert(3 * n + c, k);
                }
            }
        }
        let (dofs, source) = owner.into_iter().unzip();
        Ok(Self {
            dofs,
            source,
            programs: constraints.iter().map(|c| c.program.clone()).collect(),
        })
    }

    pub fn targets(&self, t: f64) -> Vec<f64> {
        let values: Vec<f64> = self.programs.iter().map(|p| p.value(t)).collect();
        self.source.iter().map(|&k| values[k]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ramp_activation() {
        let mut s = ActivationState::new(ActivationProgram::Ramp {
            t_start: 0.1,
            t_end: 0.2,
            level: 1.0,
        });
        assert_eq!(s.advance(0.05), 0.0);
        assert_relative_eq!(s.advance(0.15), 0.5, max_relative = 1e-12);
        assert_eq!(s.advance(0.3), 1.0);
    }

    fn zajac(u: f64, beta: f64, a0: f64) -> ActivationState {
        ActivationState::new(ActivationProgram::Zajac {
            tau_act: 0.02,
            beta_deact: beta,
            excitation: Excitation::Constant { level: u },
            a0,
        })
    }

    #[test]
    fn zajac_full_excitation_approaches_exponential() {
        let tau = 0.02;
        let t_end = 0.1;
        let mut errs = Vec::new();
        for n in [200usize, 400] {
            let mut s = zajac(1.0, 0.3, 0.0);
            let dt = t_end / n as f64;
            let mut prev = 0.0;
            for k in 1..=n {
                let a = s.advance(k as f64 * dt);
                assert!(a > prev && a < 1.0);
                prev = a;
            }
            errs.push((s.a - (1.0 - (-t_end / tau).exp())).abs());
        }
        assert!(errs[1] < 2e-3);
        // First-order convergence of implicit Euler.
        assert_relative_eq!(errs[0] / errs[1], 2.0, max_relative = 0.05);
    }

    #[test]
    fn zajac_decay() {
        let (tau, beta, a0) = (0.02, 0.4, 0.8);
        let mut s = zajac(0.0, beta, a0);
        let n = 2000;
        let t_end = 0.05;
        for k in 1..=n {
            s.advance(k as f64 * t_end / n as f64);
        }
        let exact = a0 * (-beta * t_end / tau).exp();
        assert_relative_eq!(s.a, exact, max_relative = 2e-3);
    }

    #[test]
    fn activation_stays_in_unit_interval() {
        let mut s = ActivationState::new(ActivationProgram::Zajac {
            tau_act: 1e-3,
            beta_deact: 1.0,
            excitation: Excitation::Constant { level: 7.0 },
            a0: 0.0,
        });
        for k in 1..100 {
            let a = s.advance(k as f64 * 0.1);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn square_wave() {
        let e = Excitation::SquareWave {
            period: 0.5,
            duty: 0.4,
            level: 1.0,
            delay: 0.1,
        };
        assert_eq!(e.value(0.05), 0.0);
        assert_eq!(e.value(0.2), 1.0);
        assert_eq!(e.value(0.45), 0.0);
        assert_eq!(e.value(0.65), 1.0);
    }

    #[test]
    fn displacement_programs() {
        let l = 52.0008e-3;
        let ramp = DisplacementProgram::Ramp {
            t_start: 0.05,
            t_end: 0.15,
            rate: 0.1 * l,
        };
        assert_relative_eq!(ramp.value(0.1), 0.05 * 0.1 * l, max_relative = 1e-12);
        assert_relative_eq!(ramp.value(0.1), 0.2600e-3, max_relative = 1e-4);
        assert_eq!(ramp.value(0.0), 0.0);
        assert_relative_eq!(ramp.value(1.0), 0.01 * l, max_relative = 1e-12);
        // Continuity at both corners.
        for t in [0.05, 0.15] {
            assert!((ramp.value(t + 1e-12) - ramp.value(t - 1e-12)).abs() < 1e-12);
        }

        let f = 2.5;
        let sine = DisplacementProgram::Sinusoid {
            amplitude: 3e-3,
            frequency: f,
        };
        assert_relative_eq!(sine.value(1.0 / (4.0 * f)), 3e-3, max_relative = 1e-15);

        let cv = DisplacementProgram::ConstantVelocity {
            velocity: -0.2,
            t_start: 1.0,
            offset: 0.01,
        };
        assert_eq!(cv.value(0.5), 0.01);
        assert_relative_eq!(cv.value(1.5), -0.09, max_relative = 1e-12);

        let pl = DisplacementProgram::PiecewiseLinear {
            times: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 2.0, 2.0],
        };
        assert_eq!(pl.value(0.5), 1.0);
        assert_eq!(pl.value(5.0), 2.0);
        assert!(DisplacementProgram::PiecewiseLinear {
            times: vec![0.0, 0.0],
            values: vec![0.0, 1.0]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn constraint_resolution_with_precedence() {
        use crate::elements::ElementType;
        use crate::mesh::{generate_block, BlockSpec, Divisions};
        let mesh = generate_block(
            &BlockSpec::default(),
            Divisions::new(2, 1, 1),
            ElementType::Q1P0,
        )
        .unwrap();
        let rc = ResolvedConstraints::new(
            &mesh,
            &[
                FaceConstraint {
                    set: "-x".into(),
                    components: vec![0, 1, 2],
                    program: DisplacementProgram::Fixed,
                },
                FaceConstraint {
                    set: "-z".into(),
                    components: vec![2],
                    program: DisplacementProgram::Hold { value: 1e-3 },
                },
            ],
        )
        .unwrap();
        // 4 nodes on -x (12 dofs) plus 6 z-dofs on -z, 2 of them shared.
        assert_eq!(rc.dofs.len(), 12 + 4);
        let t = rc.targets(0.0);
        for (k, &d) in rc.dofs.iter().enumerate() {
            let on_bottom = mesh.nodes[d / 3].z == 0.0 && d % 3 == 2;
            assert_eq!(t[k], if on_bottom { 1e-3 } else { 0.0 });
        }
        assert!(ResolvedConstraints::new(
            &mesh,
            &[FaceConstraint {
                set: "nope".into(),
                components: vec![0],
                program: DisplacementProgram::Fixed
            }]
        )
        .is_err());
    }
}
