//! Canned studies: each builds its meshes and programs, runs one or more
//! simulations and reports probe series plus scalar metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    effective_force_decomposition, ActivationMask, ActivationProgram, DisplacementProgram,
    Excitation, FaceConstraint, FieldQuantity, ProbeSeries, ProbeSpec, RunSummary, Scenario,
    Simulation,
};
use crate::constitutive::{MaterialLibrary, TissueKind};
use crate::dynamics::{Checkpoint, TimeConfig, TimeMode};
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::mesh::{generate_block, generate_gastroc, BlockSpec, Divisions, GastrocSpec, Mesh};
use crate::solver::NewtonConfig;

/// Called with the run name after setup and after every step.
pub type Observer<'a> = dyn FnMut(&str, &Simulation) -> Result<()> + 'a;

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub name: String,
    pub mesh: Mesh,
    pub series: ProbeSeries,
    pub summary: RunSummary,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, Default)]
pub struct StudyOutput {
    pub runs: Vec<RunArtifacts>,
    pub metrics: BTreeMap<String, f64>,
}

impl StudyOutput {
    pub fn run(&self, name: &str) -> Option<&RunArtifacts> {
        self.runs.iter().find(|r| r.name == name)
    }

    fn series(&self, name: &str) -> Result<&ProbeSeries> {
        self.run(name)
            .map(|r| &r.series)
            .ok_or_else(|| MyoError::Validation(format!("no run named {name:?}")))
    }
}

/// Runs `sim` to its end time and files its artifacts, also on failure.
pub fn drive(
    name: &str,
    mut sim: Simulation,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    observer(name, &sim)?;
    let result = sim.run(|s| observer(name, s));
    let summary = match &result {
        Ok(s) => s.clone(),
        Err(e) => sim.summary(Some(e.to_string())),
    };
    out.runs.push(RunArtifacts {
        name: name.to_string(),
        checkpoint: sim.checkpoint(),
        mesh: sim.model.mesh.clone(),
        series: sim.series.clone(),
        summary,
    });
    result.map(|_| ())
}

fn clamp(set: &str) -> FaceConstraint {
    FaceConstraint {
        set: set.into(),
        components: vec![0, 1, 2],
        program: DisplacementProgram::Fixed,
    }
}

fn drive_x(set: &str, program: DisplacementProgram) -> [FaceConstraint; 2] {
    [
        FaceConstraint {
            set: set.into(),
            components: vec![1, 2],
            program: DisplacementProgram::Fixed,
        },
        FaceConstraint {
            set: set.into(),
            components: vec![0],
            program,
        },
    ]
}

fn reaction(set: &str, direction: [f64; 3], name: &str) -> ProbeSpec {
    ProbeSpec::ReactionForce {
        set: set.into(),
        direction,
        name: Some(name.into()),
    }
}

/// Tension on a +x support is reported positive.
const TENSION_X: [f64; 3] = [-1.0, 0.0, 0.0];

fn summary_probe(quantity: FieldQuantity) -> ProbeSpec {
    ProbeSpec::FieldSummary {
        quantity,
        name: None,
    }
}

/// Linear interpolation of `y(x)` on samples sorted in either direction.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    xs.windows(2).zip(ys.windows(2)).find_map(|(w, v)| {
        let (lo, hi) = if w[0] <= w[1] {
            (w[0], w[1])
        } else {
            (w[1], w[0])
        };
        if x < lo || x > hi {
            return None;
        }
        if w[1] == w[0] {
            return Some(v[0]);
        }
        let s = (x - w[0]) / (w[1] - w[0]);
        Some(v[0] + s * (v[1] - v[0]))
    })
}

// ---------------------------------------------------------------------------
// Pull of a clamped block: the wave-propagation experiment.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PullStudy {
    pub block: BlockSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    /// Time the +x face starts moving (s).
    pub t_start: f64,
    /// Time the +x face stops moving (s).
    pub t_stop: f64,
    /// Face speed as a fraction of the block length per second.
    pub rate: f64,
    pub t_end: f64,
    /// `[t_from, dt]` pairs; the first entry's step also applies before it.
    pub dt_schedule: Vec<[f64; 2]>,
    pub c_max: f64,
    /// Mode of the single run in the dynamic-pull study.
    pub mode: TimeMode,
    /// Probe positions along the centreline as fractions of the length.
    pub probes: Vec<(String, f64)>,
}

impl Default for PullStudy {
    fn default() -> Self {
        Self {
            block: BlockSpec::default(),
            divisions: Divisions::new(8, 2, 1),
            element: ElementType::Q2P1,
            t_start: 0.05,
            t_stop: 0.15,
            rate: 0.1,
            t_end: 0.7,
            dt_schedule: vec![[0.0, 1e-3], [0.05, 1e-5], [0.0505, 1e-4], [0.15, 2e-3]],
            c_max: 0.5,
            mode: TimeMode::Dynamic,
            probes: vec![
                ("x_L".into(), 1.0),
                ("x_1".into(), 0.9),
                ("x_mid".into(), 0.5),
                ("x_2".into(), 0.1),
            ],
        }
    }
}

impl PullStudy {
    pub fn end_displacement(&self, t: f64) -> f64 {
        self.program().value(t)
    }

    fn program(&self) -> DisplacementProgram {
        DisplacementProgram::Ramp {
            t_start: self.t_start,
            t_end: self.t_stop,
            rate: self.rate * self.block.length,
        }
    }

    pub fn simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
        mode: TimeMode,
    ) -> Result<Simulation> {
        let mesh = generate_block(&self.block, self.divisions, self.element)?;
        let b = &self.block;
        let mut probes: Vec<ProbeSpec> = self
            .probes
            .iter()
            .map(|(name, f)| ProbeSpec::PointDisplacement {
                point: [f * b.length, 0.5 * b.width, 0.5 * b.height],
                component: 0,
                name: Some(name.clone()),
            })
            .collect();
        probes.push(reaction("+x", TENSION_X, "force"));
        let mut boundary = vec![clamp("-x")];
        boundary.extend(drive_x("+x", self.program()));
        let scenario = Scenario {
            boundary,
            probes,
            ..Default::default()
        };
        let time = TimeConfig {
            dt: self.dt_schedule.first().map_or(1e-4, |e| e[1]),
            t_end: self.t_end,
            c_max: self.c_max,
            mode,
            dt_schedule: self.dt_schedule.clone(),
            ..Default::default()
        };
        Simulation::new(mesh, materials, &scenario, time, newton.clone())
    }
}

/// Single pull in the configured mode.
pub fn dynamic_pull(
    study: &PullStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    let name = match study.mode {
        TimeMode::Dynamic => "dynamic",
        TimeMode::QuasiStatic => "quasi-static",
    };
    drive(
        name,
        study.simulation(materials, newton, study.mode)?,
        out,
        observer,
    )?;
    Ok(())
}

/// The same pull in both modes, with wave-arrival and final-state metrics
/// for the probe nearest the clamped face (the last configured probe).
pub fn quasi_vs_dynamic(
    study: &PullStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    let dynamic = study.simulation(materials, newton, TimeMode::Dynamic)?;
    let (near_name, near_x) = {
        let (name, f) = study.probes.last().ok_or_else(|| {
            MyoError::Validation("quasi-vs-dynamic needs at least one probe".into())
        })?;
        let m = &dynamic.model.mesh;
        let b = &study.block;
        let node = m.nearest_node(&crate::tensor::Vec3::new(
            f * b.length,
            0.5 * b.width,
            0.5 * b.height,
        ));
        (name.clone(), m.nodes[node].x)
    };
    let muscle = materials.tissue(TissueKind::Muscle);
    let c = (muscle.kappa / muscle.rho0).sqrt();
    let distance = study.block.length - near_x;
    drive("dynamic", dynamic, out, observer)?;
    let quasi = study.simulation(materials, newton, TimeMode::QuasiStatic)?;
    drive("quasi-static", quasi, out, observer)?;

    let onset = |series: &ProbeSeries| -> Result<(f64, f64)> {
        let u = series
            .column(&near_name)
            .ok_or_else(|| MyoError::Validation(format!("missing probe {near_name}")))?;
        let mut first_ratio = f64::NAN;
        let mut onset = f64::INFINITY;
        for (&t, &v) in series.t.iter().zip(&u) {
            let d = study.end_displacement(t);
            if t <= study.t_start || d == 0.0 {
                continue;
            }
            let ratio = (v / d).abs();
            if first_ratio.is_nan() {
                first_ratio = ratio;
            }
            if ratio >= 0.01 && onset.is_infinite() {
                onset = t;
            }
        }
        Ok((first_ratio, onset))
    };
    let (dyn_first, dyn_onset) = onset(out.series("dynamic")?)?;
    let (qs_first, qs_onset) = onset(out.series("quasi-static")?)?;

    let mut final_diff = 0.0_f64;
    for (name, _) in &study.probes {
        let d = *out
            .series("dynamic")?
            .column(name)
            .unwrap_or_default()
            .last()
            .unwrap_or(&f64::NAN);
        let q = *out
            .series("quasi-static")?
            .column(name)
            .unwrap_or_default()
            .last()
            .unwrap_or(&f64::NAN);
        final_diff = final_diff.max((d - q).abs() / q.abs().max(f64::MIN_POSITIVE));
    }
    let m = &mut out.metrics;
    m.insert("wave_speed".into(), c);
    m.insert("probe_distance".into(), distance);
    m.insert(
        "onset_bound_time".into(),
        study.t_start + 0.5 * distance / c,
    );
    m.insert("dynamic_onset_time".into(), dyn_onset);
    m.insert("dynamic_first_step_ratio".into(), dyn_first);
    m.insert("quasi_static_onset_time".into(), qs_onset);
    m.insert("quasi_static_first_step_ratio".into(), qs_first);
    m.insert("final_relative_difference".into(), final_diff);
    Ok(())
}

// ---------------------------------------------------------------------------
// Isokinetic shortening of a parallel-fibre block.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsokineticStudy {
    pub block: BlockSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    /// Fat fraction of the muscle (the block has no fat).
    pub beta: f64,
    /// Lengthening speed, fraction of the length per second.
    pub lengthen_rate: f64,
    pub stretch: f64,
    pub settle_steps: usize,
    pub activation_time: f64,
    pub active_settle_steps: usize,
    /// Shortening speeds, fraction of the length per second (negative).
    pub speeds: Vec<f64>,
    /// Final stretch after shortening.
    pub final_stretch: f64,
    /// Stretch where the velocity family is compared.
    pub matched_stretch: f64,
    pub dt: f64,
    pub c_max: f64,
}

impl Default for IsokineticStudy {
    fn default() -> Self {
        Self {
            block: BlockSpec {
                length: 0.208,
                width: 0.055,
                height: 0.022,
            },
            // The lagged fibre rate acts as an explicit viscosity of about
            // 1.2 a sigma0 s, stable only for dt of order rho h^2 / eta along
            // the fibres; two cells along x keep that affordable.
            divisions: Divisions::new(2, 1, 1),
            element: ElementType::Q1P0,
            beta: 0.0,
            lengthen_rate: 1.0,
            stretch: 1.1,
            settle_steps: 5,
            activation_time: 0.25,
            active_settle_steps: 15,
            speeds: vec![-1.0, -2.0, -4.0],
            final_stretch: 0.6,
            matched_stretch: 0.9,
            dt: 2.5e-6,
            c_max: 0.5,
        }
    }
}

/// Phase boundaries of the isokinetic protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsokineticPhases {
    pub lengthened: f64,
    pub activation_start: f64,
    pub activation_end: f64,
    pub shortening_start: f64,
    pub end: f64,
}

impl IsokineticStudy {
    pub fn phases(&self, speed: f64) -> IsokineticPhases {
        let lengthened = (self.stretch - 1.0) / self.lengthen_rate;
        let activation_start = lengthened + self.settle_steps as f64 * self.dt;
        let activation_end = activation_start + self.activation_time;
        let shortening_start = activation_end + self.active_settle_steps as f64 * self.dt;
        let end = shortening_start + (self.final_stretch - self.stretch) / speed;
        IsokineticPhases {
            lengthened,
            activation_start,
            activation_end,
            shortening_start,
            end,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MyoError::Validation(format!("isokinetic: {m}")));
        if self.speeds.iter().any(|&s| !(s < 0.0)) {
            return bad("shortening speeds must be negative");
        }
        if !(self.lengthen_rate > 0.0 && self.stretch > 1.0 && self.final_stretch < self.stretch) {
            return bad("need lengthen_rate > 0, stretch > 1 and final_stretch < stretch");
        }
        Ok(())
    }

    pub fn simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
        speed: f64,
        active: bool,
    ) -> Result<Simulation> {
        self.validate()?;
        let mut lib = materials.clone();
        lib.muscle.beta = self.beta;
        let l = self.block.length;
        let ph = self.phases(speed);
        let program = DisplacementProgram::PiecewiseLinear {
            times: vec![0.0, ph.lengthened, ph.shortening_start, ph.end],
            values: vec![
                0.0,
                (self.stretch - 1.0) * l,
                (self.stretch - 1.0) * l,
                (self.final_stretch - 1.0) * l,
            ],
        };
        let mut boundary = vec![clamp("-x")];
        boundary.extend(drive_x("+x", program));
        let activation = if active {
            ActivationProgram::Ramp {
                t_start: ph.activation_start,
                t_end: ph.activation_end,
                level: 1.0,
            }
        } else {
            ActivationProgram::None
        };
        let scenario = Scenario {
            boundary,
            activation,
            probes: vec![
                reaction("+x", TENSION_X, "force"),
                ProbeSpec::SetDisplacement {
                    set: "+x".into(),
                    component: 0,
                    name: Some("end".into()),
                },
                ProbeSpec::Activation { name: None },
            ],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: self.dt,
            t_end: ph.end,
            c_max: self.c_max,
            mode: TimeMode::Dynamic,
            ..Default::default()
        };
        let mesh = generate_block(&self.block, self.divisions, self.element)?;
        Simulation::new(mesh, &lib, &scenario, time, newton.clone())
    }
}

/// Effective force traces of one speed: `(stretch, total, passive, active)`.
pub type ForceTrace = Vec<(f64, f64, f64, f64)>;

pub fn isokinetic(
    study: &IsokineticStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    let l = study.block.length;
    for &speed in &study.speeds {
        let tag = format!("{speed:+}");
        let active_name = format!("active{tag}");
        let passive_name = format!("passive{tag}");
        drive(
            &active_name,
            study.simulation(materials, newton, speed, true)?,
            out,
            observer,
        )?;
        drive(
            &passive_name,
            study.simulation(materials, newton, speed, false)?,
            out,
            observer,
        )?;
        let split = effective_force_decomposition(
            out.series(&active_name)?,
            out.series(&passive_name)?,
            "force",
        )?;
        let end = out.series(&active_name)?.column("end").unwrap_or_default();
        let ph = study.phases(speed);
        // Isometric value at the end of the active hold.
        let iso = split
            .iter()
            .filter(|s| s.t <= ph.shortening_start * (1.0 + 1e-9))
            .next_back()
            .map_or(f64::NAN, |s| s.active);
        // Shortening branch only, as a function of stretch.
        let (stretch, active): (Vec<f64>, Vec<f64>) = split
            .iter()
            .zip(&end)
            .filter(|(s, _)| s.t >= ph.shortening_start)
            .map(|(s, e)| (1.0 + e / l, s.active))
            .unzip();
        let matched = interpolate(&stretch, &active, study.matched_stretch).unwrap_or(f64::NAN);
        out.metrics
            .insert(format!("isometric_active_force{tag}"), iso);
        out.metrics
            .insert(format!("matched_active_force{tag}"), matched);
    }
    let muscle = materials.tissue(TissueKind::Muscle);
    let a0 = study.block.width * study.block.height;
    out.metrics.insert(
        "isometric_reference_force".into(),
        muscle.sigma0
            * crate::constitutive::curves::active_force_length(study.stretch, muscle.c_sarco)
            * a0
            / study.stretch,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Force-length tests with typical and CP material on a pennate geometry.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleVariant {
    pub alpha: f64,
    pub beta: f64,
    pub c_sarco: f64,
}

impl MuscleVariant {
    fn apply(&self, lib: &MaterialLibrary) -> MaterialLibrary {
        let mut lib = lib.clone();
        lib.muscle.alpha = self.alpha;
        lib.muscle.beta = self.beta;
        lib.muscle.c_sarco = self.c_sarco;
        lib
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpStudy {
    pub gastroc: GastrocSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    pub typical: MuscleVariant,
    pub cp: MuscleVariant,
    /// Area factor of the reduced physiological cross-section.
    pub pcsa_factor: f64,
    /// Unit stretches (whole-unit length over rest length) to test.
    pub stretches: Vec<f64>,
    pub pull_steps: usize,
    pub activation_steps: usize,
    /// Passive sweep over ECM fractions on a fibre-aligned block.
    pub passive_block: BlockSpec,
    pub passive_divisions: Divisions,
    pub passive_stretch: f64,
    pub passive_alphas: Vec<f64>,
}

impl Default for CpStudy {
    fn default() -> Self {
        Self {
            gastroc: GastrocSpec::default(),
            divisions: Divisions {
                nx: 4,
                ny: 1,
                nz: 2,
                n_apo: 1,
            },
            element: ElementType::Q2P1,
            typical: MuscleVariant {
                alpha: 0.02,
                beta: 0.1,
                c_sarco: 0.0,
            },
            cp: MuscleVariant {
                alpha: 0.4,
                beta: 0.2,
                c_sarco: 0.0,
            },
            pcsa_factor: 0.7,
            stretches: vec![1.0],
            pull_steps: 4,
            activation_steps: 5,
            passive_block: BlockSpec::default(),
            passive_divisions: Divisions::new(4, 1, 1),
            passive_stretch: 1.3,
            passive_alphas: vec![0.02, 0.1, 0.2, 0.4],
        }
    }
}

impl CpStudy {
    /// Pull in pseudo-time `[0, 1]`, then ramp the activation over `[1, 2]`.
    pub fn pennate_simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
        variant: MuscleVariant,
        reduced: bool,
        stretch: f64,
    ) -> Result<Simulation> {
        let mut spec = self.gastroc;
        if reduced {
            // The physiological cross-section of the pennate prism scales
            // with its width alone.
            spec.w_mus *= self.pcsa_factor;
        }
        let mesh = generate_gastroc(&spec, self.divisions, self.element)?;
        let (lo, hi) = mesh.bounding_box();
        let length = hi.x - lo.x;
        let pull = (stretch - 1.0) * length;
        let mut boundary = vec![clamp("-x-apo")];
        boundary.extend(drive_x(
            "+x-apo",
            DisplacementProgram::Ramp {
                t_start: 0.0,
                t_end: 1.0,
                rate: pull,
            },
        ));
        let scenario = Scenario {
            boundary,
            activation: ActivationProgram::Ramp {
                t_start: 1.0,
                t_end: 2.0,
                level: 1.0,
            },
            probes: vec![reaction("+x-apo", TENSION_X, "force")],
            ..Default::default()
        };
        let n = self.pull_steps.max(1);
        let m = self.activation_steps.max(1);
        let time = TimeConfig {
            dt: 1.0 / n as f64,
            t_end: 2.0,
            mode: TimeMode::QuasiStatic,
            dt_schedule: vec![[0.0, 1.0 / n as f64], [1.0, 1.0 / m as f64]],
            ..Default::default()
        };
        Simulation::new(
            mesh,
            &variant.apply(materials),
            &scenario,
            time,
            newton.clone(),
        )
    }

    pub fn passive_simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
        alpha: f64,
    ) -> Result<Simulation> {
        let variant = MuscleVariant {
            alpha,
            ..self.typical
        };
        let mesh = generate_block(&self.passive_block, self.passive_divisions, self.element)?;
        let mut boundary = vec![clamp("-x")];
        boundary.extend(drive_x(
            "+x",
            DisplacementProgram::Ramp {
                t_start: 0.0,
                t_end: 1.0,
                rate: (self.passive_stretch - 1.0) * self.passive_block.length,
            },
        ));
        let scenario = Scenario {
            boundary,
            probes: vec![reaction("+x", TENSION_X, "force")],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 1.0 / self.pull_steps.max(1) as f64,
            t_end: 1.0,
            mode: TimeMode::QuasiStatic,
            ..Default::default()
        };
        Simulation::new(
            mesh,
            &variant.apply(materials),
            &scenario,
            time,
            newton.clone(),
        )
    }
}

pub fn cp_force_length(
    study: &CpStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    for &stretch in &study.stretches {
        let mut active = BTreeMap::new();
        for (label, variant) in [("td", study.typical), ("cp", study.cp)] {
            for (size, reduced) in [("full", false), ("reduced", true)] {
                let name = format!("{label}-{size}-{stretch}");
                let sim = study.pennate_simulation(materials, newton, variant, reduced, stretch)?;
                drive(&name, sim, out, observer)?;
                let series = out.series(&name)?;
                let force = series.column("force").unwrap_or_default();
                let passive = interpolate(&series.t, &force, 1.0).unwrap_or(f64::NAN);
                let total = *force.last().unwrap_or(&f64::NAN);
                out.metrics.insert(format!("{name}/passive_force"), passive);
                out.metrics.insert(format!("{name}/total_force"), total);
                out.metrics
                    .insert(format!("{name}/active_force"), total - passive);
                active.insert((label, size), total - passive);
            }
        }
        for label in ["td", "cp"] {
            out.metrics.insert(
                format!("{label}-{stretch}/pcsa_force_ratio"),
                active[&(label, "reduced")] / active[&(label, "full")],
            );
        }
    }
    for &alpha in &study.passive_alphas {
        let name = format!("passive-alpha-{alpha}");
        drive(
            &name,
            study.passive_simulation(materials, newton, alpha)?,
            out,
            observer,
        )?;
        let force = *out
            .series(&name)?
            .column("force")
            .unwrap_or_default()
            .last()
            .unwrap_or(&f64::NAN);
        out.metrics.insert(format!("{name}/force"), force);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cyclic length change with an excitation-driven activation.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CyclicStudy {
    pub block: BlockSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    /// Amplitude as a fraction of the length.
    pub amplitude: f64,
    pub frequency: f64,
    pub tau_act: f64,
    pub beta_deact: f64,
    pub excitation: Excitation,
    pub t_end: f64,
    pub dt: f64,
    pub mode: TimeMode,
}

impl Default for CyclicStudy {
    fn default() -> Self {
        Self {
            block: BlockSpec::default(),
            divisions: Divisions::new(4, 1, 1),
            element: ElementType::Q2P1,
            amplitude: 0.05,
            frequency: 2.0,
            tau_act: 0.05,
            beta_deact: 0.5,
            excitation: Excitation::SquareWave {
                period: 0.5,
                duty: 0.5,
                level: 1.0,
                delay: 0.0,
            },
            t_end: 1.0,
            dt: 2e-3,
            mode: TimeMode::Dynamic,
        }
    }
}

impl CyclicStudy {
    pub fn simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
    ) -> Result<Simulation> {
        let mesh = generate_block(&self.block, self.divisions, self.element)?;
        let mut boundary = vec![clamp("-x")];
        boundary.extend(drive_x(
            "+x",
            DisplacementProgram::Sinusoid {
                amplitude: self.amplitude * self.block.length,
                frequency: self.frequency,
            },
        ));
        let scenario = Scenario {
            boundary,
            activation: ActivationProgram::Zajac {
                tau_act: self.tau_act,
                beta_deact: self.beta_deact,
                excitation: self.excitation,
                a0: 0.0,
            },
            probes: vec![
                reaction("+x", TENSION_X, "force"),
                ProbeSpec::SetDisplacement {
                    set: "+x".into(),
                    component: 0,
                    name: Some("end".into()),
                },
                ProbeSpec::Activation { name: None },
            ],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: self.dt,
            t_end: self.t_end,
            mode: self.mode,
            ..Default::default()
        };
        Simulation::new(mesh, materials, &scenario, time, newton.clone())
    }
}

pub fn cyclic(
    study: &CyclicStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    drive(
        "cyclic",
        study.simulation(materials, newton)?,
        out,
        observer,
    )?;
    let s = out.series("cyclic")?;
    let force = s.column("force").unwrap_or_default();
    let end = s.column("end").unwrap_or_default();
    // Work done on the muscle by the moving end over the run.
    let work: f64 = end
        .windows(2)
        .zip(force.windows(2))
        .map(|(x, f)| -0.5 * (f[0] + f[1]) * (x[1] - x[0]))
        .sum();
    out.metrics.insert("net_work_on_muscle".into(), work);
    out.metrics.insert(
        "peak_force".into(),
        force.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Isometric activation of the pennate unit.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GastrocStudy {
    pub gastroc: GastrocSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    pub level: f64,
    pub activation_time: f64,
    pub t_end: f64,
    pub dt: f64,
    pub mode: TimeMode,
}

impl Default for GastrocStudy {
    fn default() -> Self {
        Self {
            gastroc: GastrocSpec::default(),
            divisions: Divisions {
                nx: 8,
                ny: 2,
                nz: 2,
                n_apo: 1,
            },
            element: ElementType::Q2P1,
            level: 1.0,
            activation_time: 0.1,
            t_end: 0.15,
            dt: 5e-3,
            mode: TimeMode::QuasiStatic,
        }
    }
}

impl GastrocStudy {
    pub fn simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
    ) -> Result<Simulation> {
        let mesh = generate_gastroc(&self.gastroc, self.divisions, self.element)?;
        let (lo, hi) = mesh.bounding_box();
        let centre = 0.5 * (lo + hi);
        let scenario = Scenario {
            boundary: vec![clamp("-x-apo"), clamp("+x-apo")],
            activation: ActivationProgram::Ramp {
                t_start: 0.0,
                t_end: self.activation_time,
                level: self.level,
            },
            activation_mask: ActivationMask::default(),
            probes: vec![
                reaction("+x-apo", TENSION_X, "force"),
                ProbeSpec::PointDisplacement {
                    point: centre.into(),
                    component: 2,
                    name: Some("uz_centre".into()),
                },
                summary_probe(FieldQuantity::MaxJMinusOne),
                ProbeSpec::Activation { name: None },
            ],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: self.dt,
            t_end: self.t_end,
            mode: self.mode,
            ..Default::default()
        };
        Simulation::new(mesh, materials, &scenario, time, newton.clone())
    }
}

pub fn gastroc_activate(
    study: &GastrocStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    drive(
        "gastroc",
        study.simulation(materials, newton)?,
        out,
        observer,
    )?;
    let s = out.series("gastroc")?;
    let last = |name: &str| {
        *s.column(name)
            .unwrap_or_default()
            .last()
            .unwrap_or(&f64::NAN)
    };
    let (force, uz) = (last("force"), last("uz_centre"));
    out.metrics.insert("final_force".into(), force);
    out.metrics.insert("final_uz_centre".into(), uz);
    Ok(())
}

// ---------------------------------------------------------------------------
// Transverse stretch of a fibre-free block under roller supports.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransverseStudy {
    pub block: BlockSpec,
    pub divisions: Divisions,
    pub element: ElementType,
    pub stretch: f64,
    pub steps: usize,
}

impl Default for TransverseStudy {
    fn default() -> Self {
        Self {
            block: BlockSpec::default(),
            divisions: Divisions::new(8, 2, 2),
            element: ElementType::Q2P1,
            stretch: 1.1,
            steps: 5,
        }
    }
}

impl TransverseStudy {
    /// Rollers on -x, -y and -z; the +y face moves along y in pseudo-time `[0, 1]`.
    pub fn simulation(
        &self,
        materials: &MaterialLibrary,
        newton: &NewtonConfig,
    ) -> Result<Simulation> {
        let mesh = generate_block(&self.block, self.divisions, self.element)?;
        let roller = |set: &str, c: usize| FaceConstraint {
            set: set.into(),
            components: vec![c],
            program: DisplacementProgram::Fixed,
        };
        let scenario = Scenario {
            boundary: vec![
                roller("-x", 0),
                roller("-y", 1),
                roller("-z", 2),
                FaceConstraint {
                    set: "+y".into(),
                    components: vec![1],
                    program: DisplacementProgram::Ramp {
                        t_start: 0.0,
                        t_end: 1.0,
                        rate: (self.stretch - 1.0) * self.block.width,
                    },
                },
            ],
            probes: vec![
                reaction("+y", [0.0, -1.0, 0.0], "force"),
                summary_probe(FieldQuantity::MaxJMinusOne),
                summary_probe(FieldQuantity::Volume),
                summary_probe(FieldQuantity::MeanPressure),
                summary_probe(FieldQuantity::MeanStress),
            ],
            fibres: false,
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 1.0 / self.steps.max(1) as f64,
            t_end: 1.0,
            mode: TimeMode::QuasiStatic,
            ..Default::default()
        };
        Simulation::new(mesh, materials, &scenario, time, newton.clone())
    }
}

pub fn transverse_stretch(
    study: &TransverseStudy,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    drive(
        "transverse",
        study.simulation(materials, newton)?,
        out,
        observer,
    )?;
    let s = out.series("transverse")?;
    let force = *s
        .column("force")
        .unwrap_or_default()
        .last()
        .unwrap_or(&f64::NAN);
    let area = study.block.length * study.block.height / study.stretch;
    out.metrics.insert("cauchy_stress".into(), force / area);
    Ok(())
}

// ---------------------------------------------------------------------------

/// A named study with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Study {
    DynamicPull(PullStudy),
    QuasiVsDynamic(PullStudy),
    Isokinetic(IsokineticStudy),
    CpForceLength(CpStudy),
    Cyclic(CyclicStudy),
    GastrocActivate(GastrocStudy),
    TransverseStretch(TransverseStudy),
}

impl Study {
    pub const NAMES: [&'static str; 7] = [
        "dynamic-pull",
        "quasi-vs-dynamic",
        "isokinetic",
        "cp-force-length",
        "cyclic",
        "gastroc-activate",
        "transverse-stretch",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::DynamicPull(_) => "dynamic-pull",
            Study::QuasiVsDynamic(_) => "quasi-vs-dynamic",
            Study::Isokinetic(_) => "isokinetic",
            Study::CpForceLength(_) => "cp-force-length",
            Study::Cyclic(_) => "cyclic",
            Study::GastrocActivate(_) => "gastroc-activate",
            Study::TransverseStretch(_) => "transverse-stretch",
        }
    }

    /// Default parameters of a named study.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "dynamic-pull" => Study::DynamicPull(PullStudy::default()),
            "quasi-vs-dynamic" => Study::QuasiVsDynamic(PullStudy::default()),
            "isokinetic" => Study::Isokinetic(IsokineticStudy::default()),
            "cp-force-length" => Study::CpForceLength(CpStudy::default()),
            "cyclic" => Study::Cyclic(CyclicStudy::default()),
            "gastroc-activate" => Study::GastrocActivate(GastrocStudy::default()),
            "transverse-stretch" => Study::TransverseStretch(TransverseStudy::default()),
            _ => return None,
        })
    }
}

pub fn run_study(
    study: &Study,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    observer: &mut Observer,
) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    run_study_into(study, materials, newton, &mut out, observer)?;
    Ok(out)
}

/// Like [`run_study`], but artifacts of runs finished (or failed) before an
/// error stay in `out`.
pub fn run_study_into(
    study: &Study,
    materials: &MaterialLibrary,
    newton: &NewtonConfig,
    out: &mut StudyOutput,
    observer: &mut Observer,
) -> Result<()> {
    newton.validate()?;
    match study {
        Study::DynamicPull(s) => dynamic_pull(s, materials, newton, out, observer),
        Study::QuasiVsDynamic(s) => quasi_vs_dynamic(s, materials, newton, out, observer),
        Study::Isokinetic(s) => isokinetic(s, materials, newton, out, observer),
        Study::CpForceLength(s) => cp_force_length(s, materials, newton, out, observer),
        Study::Cyclic(s) => cyclic(s, materials, newton, out, observer),
        Study::GastrocActivate(s) => gastroc_activate(s, materials, newton, out, observer),
        Study::TransverseStretch(s) => transverse_stretch(s, materials, newton, out, observer),
    }
}
