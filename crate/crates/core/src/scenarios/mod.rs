//! Experiment programs: boundary and activation schedules, probes, the
//! time-stepping driver and the canned studies.

pub mod programs;
pub mod studies;

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use programs::{
    ActivationMask, ActivationProgram, ActivationState, DisplacementProgram, Excitation,
    FaceConstraint, ResolvedConstraints,
};

use crate::assembly::{assemble_residual, Mode, Model, StepData, SystemState};
use crate::constitutive::{evaluate_stress, MaterialLibrary, StressOptions};
use crate::dynamics::{
    cfl_dt, step_dynamic, step_quasistatic, Checkpoint, StepInput, TimeConfig, TimeMode,
};
use crate::error::{MyoError, Result};
use crate::kinematics::{fibre_measures, from_f, RatePoint};
use crate::mesh::Mesh;
use crate::solver::{LinearSolver, NewtonConfig, SolveStats};
use crate::tensor::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldQuantity {
    /// Largest `|J - 1|` over the quadrature points.
    MaxJMinusOne,
    /// Current volume.
    Volume,
    /// Volume average of the pressure field.
    MeanPressure,
    /// Volume average of `tr(sigma) / 3`.
    MeanStress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProbeSpec {
    /// Force exerted by the body on the constraints of a set, along `direction`.
    ReactionForce {
        set: String,
        direction: [f64; 3],
        #[serde(default)]
        name: Option<String>,
    },
    /// Displacement component at the node nearest to `point` (m).
    PointDisplacement {
        point: [f64; 3],
        component: usize,
        #[serde(default)]
        name: Option<String>,
    },
    /// Mean displacement component over the nodes of a set.
    SetDisplacement {
        set: String,
        component: usize,
        #[serde(default)]
        name: Option<String>,
    },
    FieldSummary {
        quantity: FieldQuantity,
        #[serde(default)]
        name: Option<String>,
    },
    Activation {
        #[serde(default)]
        name: Option<String>,
    },
}

const AXES: [&str; 3] = ["x", "y", "z"];

impl ProbeSpec {
    pub fn name(&self) -> String {
        match self {
            ProbeSpec::ReactionForce { set, name, .. } => {
                name.clone().unwrap_or_else(|| format!("reaction({set})"))
            }
            ProbeSpec::PointDisplacement {
                point,
                component,
                name,
            } => name.clone().unwrap_or_else(|| {
                format!(
                    "u{}({:.6},{:.6},{:.6})",
                    AXES[(*component).min(2)],
                    point[0],
                    point[1],
                    point[2]
                )
            }),
            ProbeSpec::SetDisplacement {
                set,
                component,
                name,
            } => name
                .clone()
                .unwrap_or_else(|| format!("u{}({set})", AXES[(*component).min(2)])),
            ProbeSpec::FieldSummary { quantity, name } => name.clone().unwrap_or_else(|| {
                match quantity {
                    FieldQuantity::MaxJMinusOne => "max_abs_j_minus_1",
                    FieldQuantity::Volume => "volume",
                    FieldQuantity::MeanPressure => "mean_pressure",
                    FieldQuantity::MeanStress => "mean_stress",
                }
                .to_string()
            }),
            ProbeSpec::Activation { name } => {
                name.clone().unwrap_or_else(|| "activation".to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ResolvedProbe {
    Reaction { dofs: Vec<usize>, dir: Vec3 },
    Node { dof: usize },
    Set { dofs: Vec<usize> },
    Field(FieldQuantity),
    Activation,
}

fn resolve_probe(spec: &ProbeSpec, mesh: &Mesh, constrained: &[usize]) -> Result<ResolvedProbe> {
    let comp = |c: usize| {
        if c > 2 {
            Err(MyoError::Validation(format!(
                "probe {}: component must be 0, 1 or 2",
                spec.name()
            )))
        } else {
            Ok(c)
        }
    };
    let set = |s: &str| {
        mesh.set_nodes(s).ok_or_else(|| {
            MyoError::Validation(format!("probe {}: unknown set {s:?}", spec.name()))
        })
    };
    Ok(match spec {
        ProbeSpec::ReactionForce {
            set: s, direction, ..
        } => {
            let nodes = set(s)?;
            let dofs: Vec<usize> = nodes
                .iter()
                .flat_map(|n| (0..3).map(move |c| 3 * n + c))
                .filter(|d| constrained.binary_search(d).is_ok())
                .collect();
            if dofs.is_empty() {
                return Err(MyoError::Validation(format!(
                    "probe {}: set {s:?} is not constrained",
                    spec.name()
                )));
            }
            let dir = Vec3::from(*direction);
            if !(dir.norm() > 0.0) {
                return Err(MyoError::Validation(format!(
                    "probe {}: zero direction",
                    spec.name()
                )));
            }
            ResolvedProbe::Reaction { dofs, dir }
        }
        ProbeSpec::PointDisplacement {
            point, component, ..
        } => {
            let n = mesh.nearest_node(&Vec3::from(*point));
            ResolvedProbe::Node {
                dof: 3 * n + comp(*component)?,
            }
        }
        ProbeSpec::SetDisplacement {
            set: s, component, ..
        } => {
            let c = comp(*component)?;
            ResolvedProbe::Set {
                dofs: set(s)?.iter().map(|n| 3 * n + c).collect(),
            }
        }
        ProbeSpec::FieldSummary { quantity, .. } => ResolvedProbe::Field(*quantity),
        ProbeSpec::Activation { .. } => ResolvedProbe::Activation,
    })
}

/// Force exerted by the body on the constrained dofs listed, along `dir`:
/// the negated constrained residual projected on `dir`.
pub fn reaction_force(residual: &DVector<f64>, dofs: &[usize], dir: &Vec3) -> f64 {
    -dofs.iter().map(|&d| residual[d] * dir[d % 3]).sum::<f64>()
}

/// Time series of named probe values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSeries {
    pub names: Vec<String>,
    pub t: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl ProbeSeries {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            t: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) {
        self.t.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// CSV with a header row and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in &self.names {
            out.push(',');
            if n.contains(',') || n.contains('"') {
                let _ = write!(out, "\"{}\"", n.replace('"', "\"\""));
            } else {
                out.push_str(n);
            }
        }
        out.push('\n');
        for (t, row) in self.t.iter().zip(&self.rows) {
            let _ = write!(out, "{t:.16e}");
            for v in row {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Effective total, passive and active force at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceSample {
    pub t: f64,
    pub total: f64,
    pub passive: f64,
    pub active: f64,
}

/// `active = total - passive` per sample of a force column shared by an
/// activated run and its passive twin.
pub fn effective_force_decomposition(
    active_run: &ProbeSeries,
    passive_run: &ProbeSeries,
    column: &str,
) -> Result<Vec<ForceSample>> {
    let grid_ok = active_run.t.len() == passive_run.t.len()
        && active_run
            .t
            .iter()
            .zip(&passive_run.t)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12));
    if !grid_ok {
        return Err(MyoError::GridMismatch(format!(
            "{} samples vs {} samples",
            active_run.t.len(),
            passive_run.t.len()
        )));
    }
    let missing =
        |w: &str| MyoError::GridMismatch(format!("column {column:?} missing from {w} run"));
    let total = active_run.column(column).ok_or_else(|| missing("active"))?;
    let passive = passive_run
        .column(column)
        .ok_or_else(|| missing("passive"))?;
    Ok(active_run
        .t
        .iter()
        .zip(total.iter().zip(&passive))
        .map(|(&t, (&tot, &pas))| ForceSample {
            t,
            total: tot,
            passive: pas,
            active: tot - pas,
        })
        .collect())
}

/// Boundary and activation programs with the probe set of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub boundary: Vec<FaceConstraint>,
    pub activation: ActivationProgram,
    pub activation_mask: ActivationMask,
    pub probes: Vec<ProbeSpec>,
    /// Reference body force density (N/m^3).
    pub body_force: [f64; 3],
    /// Include along-fibre stresses.
    pub fibres: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            boundary: Vec::new(),
            activation: ActivationProgram::None,
            activation_mask: ActivationMask::default(),
            probes: Vec::new(),
            body_force: [0.0; 3],
            fibres: true,
        }
    }
}

/// Record of one completed time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub quadratic_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub newton_iterations: usize,
    pub max_newton_iterations: usize,
    /// Nondimensional residual norm at the final state.
    pub final_residual: f64,
    pub max_abs_j_minus_1: f64,
    pub wall_time_s: f64,
    pub completed: bool,
    pub error: Option<String>,
}

/// One run: model, programs, state and accumulated probe series.
pub struct Simulation {
    pub model: Model,
    pub constraints: ResolvedConstraints,
    pub time: TimeConfig,
    pub newton: NewtonConfig,
    pub state: SystemState,
    pub activation: ActivationState,
    pub mask: Vec<bool>,
    pub series: ProbeSeries,
    pub records: Vec<StepRecord>,
    /// Full residual at the current state, constrained rows included.
    pub residual: DVector<f64>,
    probes: Vec<ResolvedProbe>,
    solver: LinearSolver,
    started: Instant,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("t", &self.state.t)
            .field("steps", &self.records.len())
            .finish_non_exhaustive()
    }
}

impl Simulation {
    pub fn new(
        mesh: Mesh,
        materials: &MaterialLibrary,
        scenario: &Scenario,
        time: TimeConfig,
        newton: NewtonConfig,
    ) -> Result<Self> {
        let params = mesh.regions.iter().map(|&r| materials.tissue(r)).collect();
        Self::with_params(mesh, params, scenario, time, newton)
    }

    /// As [`Simulation::new`] with explicit per-cell materials.
    pub fn with_params(
        mesh: Mesh,
        params: Vec<crate::constitutive::TissueParams>,
        scenario: &Scenario,
        time: TimeConfig,
        newton: NewtonConfig,
    ) -> Result<Self> {
        time.validate()?;
        newton.validate()?;
        scenario.activation.validate()?;
        for p in &params {
            p.validate()?;
        }
        let constraints = ResolvedConstraints::new(&mesh, &scenario.boundary)?;
        let mask = scenario.activation_mask.cells(&mesh);
        let mut model = Model::new(mesh, params, &constraints.dofs)?;
        model.fibre_on = scenario.fibres;
        model.body_force = Vec3::from(scenario.body_force);
        let probes = scenario
            .probes
            .iter()
            .map(|p| resolve_probe(p, &model.mesh, &constraints.dofs))
            .collect::<Result<Vec<_>>>()?;
        let state = SystemState::rest(&model.dofs);
        let activation = ActivationState::new(scenario.activation);
        let names = scenario.probes.iter().map(ProbeSpec::name).collect();
        let mut sim = Self {
            residual: DVector::zeros(model.dofs.n_total),
            model,
            constraints,
            time,
            newton,
            state,
            activation,
            mask,
            series: ProbeSeries::new(names),
            records: Vec::new(),
            probes,
            solver: LinearSolver::new(),
            started: Instant::now(),
        };
        // Initial conditions are taken as given; the residual there is
        // recorded, not solved for.
        let prev = sim.state.clone();
        sim.residual = sim.residual_at(&prev, Mode::QuasiStatic)?;
        sim.record()?;
        Ok(sim)
    }

    pub fn mode(&self) -> TimeMode {
        self.time.mode
    }

    pub fn cell_activation(&self) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&on| if on { self.activation.a } else { 0.0 })
            .collect()
    }

    fn residual_at(&self, prev: &SystemState, mode: Mode) -> Result<DVector<f64>> {
        let epsbar = match mode {
            Mode::Dynamic { .. } => self.model.fibre_rates(prev),
            Mode::QuasiStatic => vec![0.0; self.model.mesh.n_cells() * self.model.n_qp()],
        };
        let act = self.cell_activation();
        let step = StepData {
            prev,
            mode,
            activation: &act,
            epsbar: &epsbar,
        };
        assemble_residual(&self.model, &self.state, &step)
    }

    /// Whether the run has reached `t_end`.
    pub fn finished(&self) -> bool {
        self.state.t >= self.time.t_end - 1e-12 * self.time.t_end.max(1.0)
    }

    fn next_dt(&self) -> f64 {
        let t = self.state.t;
        let dt = match self.time.mode {
            TimeMode::Dynamic => cfl_dt(
                &self.model.mesh,
                &self.state.v,
                self.time.dt_at(t),
                self.time.c_max,
            ),
            TimeMode::QuasiStatic => self.time.quasi_static_dt(t),
        };
        let remaining = self.time.t_end - t;
        // Avoid a sliver step at the end.
        if remaining <= dt * (1.0 + 1e-9) {
            remaining
        } else {
            dt
        }
    }

    /// Advances one step; on failure the state stays at the last converged step.
    pub fn step(&mut self) -> Result<SolveStats> {
        let dt = self.next_dt();
        let t_new = if self.time.t_end - (self.state.t + dt) <= 1e-12 * self.time.t_end.max(1.0) {
            self.time.t_end
        } else {
            self.state.t + dt
        };
        let prev_activation = self.activation.clone();
        self.activation.advance(t_new);
        let act = self.cell_activation();
        let targets = self.constraints.targets(t_new);
        let input = StepInput {
            activation: &act,
            targets: &targets,
        };
        let result = match self.time.mode {
            TimeMode::Dynamic => step_dynamic(
                &self.model,
                &self.state,
                dt,
                input,
                &self.newton,
                &mut self.solver,
            ),
            TimeMode::QuasiStatic => step_quasistatic(
                &self.model,
                &self.state,
                t_new,
                input,
                &self.newton,
                &mut self.solver,
            ),
        };
        let (mut next, stats) = match result {
            Ok(r) => r,
            Err(e) => {
                self.activation = prev_activation;
                return Err(e);
            }
        };
        next.t = t_new;
        let prev = std::mem::replace(&mut self.state, next);
        let mode = match self.time.mode {
            TimeMode::Dynamic => Mode::Dynamic { dt },
            TimeMode::QuasiStatic => Mode::QuasiStatic,
        };
        self.residual = self.residual_at(&prev, mode)?;
        self.records.push(StepRecord {
            t: t_new,
            dt,
            iterations: stats.iterations,
            final_residual: stats.final_residual(),
            quadratic_tail: stats.quadratic_tail(1e3, 3, self.newton.abs_tol),
        });
        self.record()?;
        Ok(stats)
    }

    fn record(&mut self) -> Result<()> {
        let mut row = Vec::with_capacity(self.probes.len());
        for p in &self.probes {
            row.push(match p {
                ResolvedProbe::Reaction { dofs, dir } => reaction_force(&self.residual, dofs, dir),
                ResolvedProbe::Node { dof } => self.state.u[*dof],
                ResolvedProbe::Set { dofs } => {
                    dofs.iter().map(|&d| self.state.u[d]).sum::<f64>() / dofs.len() as f64
                }
                ResolvedProbe::Field(q) => self.field_summary(*q)?,
                ResolvedProbe::Activation => self.activation.a,
            });
        }
        self.series.push(self.state.t, row);
        Ok(())
    }

    /// Volume integrals over the current state.
    pub fn field_summary(&self, q: FieldQuantity) -> Result<f64> {
        let m = &self.model;
        let act = self.cell_activation();
        let opts = StressOptions {
            fibre_on: m.fibre_on,
            quasi_static: self.time.mode == TimeMode::QuasiStatic,
        };
        let mut vol = 0.0;
        let mut max_dev = 0.0_f64;
        let mut p_int = 0.0;
        let mut s_int = 0.0;
        for c in 0..m.mesh.n_cells() {
            for qp in 0..m.n_qp() {
                let f = m.deformation(&self.state, c, qp);
                let dp = from_f(f).map_err(|e| e.with_cell(c))?;
                let dv = m.qp_volume(c, qp) * dp.j;
                vol += dv;
                max_dev = max_dev.max((dp.j - 1.0).abs());
                let (p, _) = m.p_d(&self.state, c, qp);
                p_int += p * dv;
                if q == FieldQuantity::MeanStress {
                    let dp = fibre_measures(&dp, &m.mesh.fibre(c, qp));
                    let sp =
                        evaluate_stress(&dp, &RatePoint::at_rest(), p, act[c], &m.params[c], opts)?;
                    s_int += sp.tau.trace() / (3.0 * dp.j) * dv;
                }
            }
        }
        Ok(match q {
            FieldQuantity::MaxJMinusOne => max_dev,
            FieldQuantity::Volume => vol,
            FieldQuantity::MeanPressure => p_int / vol,
            FieldQuantity::MeanStress => s_int / vol,
        })
    }

    /// Reaction on a set along a direction at the current state.
    pub fn reaction(&self, set: &str, dir: Vec3) -> Result<f64> {
        let nodes = self
            .model
            .mesh
            .set_nodes(set)
            .ok_or_else(|| MyoError::Validation(format!("unknown set {set:?}")))?;
        let dofs: Vec<usize> = nodes
            .iter()
            .flat_map(|n| (0..3).map(move |c| 3 * n + c))
            .filter(|d| self.constraints.dofs.binary_search(d).is_ok())
            .collect();
        Ok(reaction_force(&self.residual, &dofs, &dir))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model.mesh, &self.state, &self.cell_activation())
    }

    /// Steps to `t_end`, calling `observer` after every step.
    pub fn run(
        &mut self,
        mut observer: impl FnMut(&Simulation) -> Result<()>,
    ) -> Result<RunSummary> {
        self.started = Instant::now();
        let mut error = None;
        while !self.finished() {
            if let Err(e) = self.step() {
                error = Some(e);
                break;
            }
            observer(self)?;
        }
        let summary = self.summary(error.as_ref().map(|e| e.to_string()));
        match error {
            Some(e) => Err(e),
            None => Ok(summary),
        }
    }

    pub fn summary(&self, error: Option<String>) -> RunSummary {
        let scale = crate::solver::ResidualScale::for_model(&self.model);
        RunSummary {
            steps: self.records.len(),
            t_final: self.state.t,
            newton_iterations: self.records.iter().map(|r| r.iterations).sum(),
            max_newton_iterations: self.records.iter().map(|r| r.iterations).max().unwrap_or(0),
            final_residual: scale.norm(&self.model, &self.residual),
            max_abs_j_minus_1: self
                .field_summary(FieldQuantity::MaxJMinusOne)
                .unwrap_or(f64::NAN),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            completed: error.is_none() && self.finished(),
            error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::ElementType;
    use crate::mesh::{generate_block, BlockSpec, Divisions};
    use approx::assert_relative_eq;

    fn clamp(set: &str) -> FaceConstraint {
        FaceConstraint {
            set: set.into(),
            components: vec![0, 1, 2],
            program: DisplacementProgram::Fixed,
        }
    }

    fn small_block() -> Mesh {
        let spec = BlockSpec {
            length: 0.02,
            width: 0.005,
            height: 0.005,
        };
        generate_block(&spec, Divisions::new(2, 1, 1), ElementType::Q2P1).unwrap()
    }

    #[test]
    fn csv_format() {
        let mut s = ProbeSeries::new(vec!["a".into(), "b,c".into()]);
        s.push(0.1, vec![1.0 / 3.0, -2.0]);
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,a,\"b,c\"");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1], "3.3333333333333331e-1");
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn decomposition_checks_grid() {
        let mut a = ProbeSeries::new(vec!["f".into()]);
        let mut p = ProbeSeries::new(vec!["f".into()]);
        for k in 0..3 {
            a.push(k as f64, vec![k as f64 * 2.0]);
            p.push(k as f64, vec![k as f64]);
        }
        let d = effective_force_decomposition(&a, &p, "f").unwrap();
        assert_eq!(d[2].active, 2.0);
        let same = effective_force_decomposition(&p, &p, "f").unwrap();
        assert!(same.iter().all(|s| s.active == 0.0));
        p.push(3.0, vec![0.0]);
        assert!(matches!(
            effective_force_decomposition(&a, &p, "f"),
            Err(MyoError::GridMismatch(_))
        ));
    }

    #[test]
    fn rest_run_reports_zero() {
        let scenario = Scenario {
            boundary: vec![clamp("-x")],
            probes: vec![ProbeSpec::ReactionForce {
                set: "-x".into(),
                direction: [1.0, 0.0, 0.0],
                name: None,
            }],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 1e-3,
            t_end: 3e-3,
            ..Default::default()
        };
        let mut sim = Simulation::new(
            small_block(),
            &MaterialLibrary::default(),
            &scenario,
            time,
            NewtonConfig::default(),
        )
        .unwrap();
        let summary = sim.run(|_| Ok(())).unwrap();
        assert_eq!(summary.steps, 3);
        assert!(summary.completed);
        assert!(summary.final_residual < 1e-12);
        assert!(sim
            .series
            .column("reaction(-x)")
            .unwrap()
            .iter()
            .all(|f| f.abs() < 1e-12));
        assert_relative_eq!(sim.state.t, 3e-3, max_relative = 1e-15);
    }

    #[test]
    fn clamped_activation_balances_end_forces() {
        let scenario = Scenario {
            boundary: vec![clamp("-x"), clamp("+x")],
            activation: ActivationProgram::Ramp {
                t_start: 0.0,
                t_end: 0.02,
                level: 1.0,
            },
            probes: vec![
                ProbeSpec::ReactionForce {
                    set: "-x".into(),
                    direction: [1.0, 0.0, 0.0],
                    name: Some("left".into()),
                },
                ProbeSpec::ReactionForce {
                    set: "+x".into(),
                    direction: [1.0, 0.0, 0.0],
                    name: Some("right".into()),
                },
            ],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 5e-3,
            t_end: 0.02,
            mode: TimeMode::QuasiStatic,
            ..Default::default()
        };
        let mut sim = Simulation::new(
            small_block(),
            &MaterialLibrary::default(),
            &scenario,
            time,
            NewtonConfig::default(),
        )
        .unwrap();
        sim.run(|_| Ok(())).unwrap();
        let l = sim.series.column("left").unwrap();
        let r = sim.series.column("right").unwrap();
        let last = l.len() - 1;
        // Contraction pulls both supports inward.
        assert!(l[last] > 0.0 && r[last] < 0.0);
        assert_relative_eq!(l[last], -r[last], max_relative = 1e-9);
        // Active force grows along the ramp.
        assert!(l.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ramp_pull_end_velocity_is_exact() {
        let length = 0.02;
        let rate = 0.1 * length;
        let scenario = Scenario {
            boundary: vec![
                clamp("-x"),
                FaceConstraint {
                    set: "+x".into(),
                    components: vec![0],
                    program: DisplacementProgram::Ramp {
                        t_start: 0.0,
                        t_end: 0.1,
                        rate,
                    },
                },
            ],
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 1e-3,
            t_end: 5e-3,
            ..Default::default()
        };
        let mut sim = Simulation::new(
            small_block(),
            &MaterialLibrary::default(),
            &scenario,
            time,
            NewtonConfig::default(),
        )
        .unwrap();
        sim.run(|_| Ok(())).unwrap();
        for n in sim.model.mesh.set_nodes("+x").unwrap() {
            assert_relative_eq!(sim.state.v[3 * n], rate, max_relative = 1e-9);
        }
    }

    #[test]
    fn impulse_balance() {
        // With no body force, the constraint reactions balance the discrete
        // momentum change of the whole body.
        let scenario = Scenario {
            boundary: vec![
                clamp("-x"),
                FaceConstraint {
                    set: "+x".into(),
                    components: vec![0],
                    program: DisplacementProgram::ConstantVelocity {
                        velocity: 0.05,
                        t_start: 0.0,
                        offset: 0.0,
                    },
                },
            ],
            activation: ActivationProgram::Hold { level: 0.5 },
            ..Default::default()
        };
        let time = TimeConfig {
            dt: 2e-4,
            t_end: 6e-4,
            ..Default::default()
        };
        let mut sim = Simulation::new(
            small_block(),
            &MaterialLibrary::default(),
            &scenario,
            time,
            NewtonConfig::default(),
        )
        .unwrap();
        let rho = sim.model.params[0].rho0;
        // Lumped row sums of the consistent mass are the nodal masses.
        let mass = nodal_masses(&sim.model, rho);
        let mut prev_v = sim.state.v.clone();
        while !sim.finished() {
            sim.step().unwrap();
            let dt = sim.records.last().unwrap().dt;
            let scale = sim.reaction("-x", Vec3::x()).unwrap().abs().max(1e-12);
            for i in 0..3 {
                let dp: f64 = (0..sim.model.mesh.n_nodes())
                    .map(|n| mass[n] * (sim.state.v[3 * n + i] - prev_v[3 * n + i]))
                    .sum::<f64>()
                    / dt;
                let mut dir = Vec3::zeros();
                dir[i] = 1.0;
                let supports =
                    -(sim.reaction("-x", dir).unwrap() + sim.reaction("+x", dir).unwrap());
                assert!(
                    (supports - dp).abs() <= 1e-6 * scale,
                    "{i}: {supports} vs {dp}"
                );
            }
            prev_v = sim.state.v.clone();
        }
    }

    fn nodal_masses(m: &Model, rho: f64) -> Vec<f64> {
        let mut out = vec![0.0; m.mesh.n_nodes()];
        for c in 0..m.mesh.n_cells() {
            for q in 0..m.n_qp() {
                let dv = m.qp_volume(c, q);
                for (a, &n) in m.mesh.cell(c).iter().enumerate() {
                    out[n] += rho * m.tab.u_vals[q][a] * dv;
                }
            }
        }
        out
    }

    #[test]
    fn unknown_probe_set_rejected() {
        let scenario = Scenario {
            probes: vec![ProbeSpec::SetDisplacement {
                set: "nowhere".into(),
                component: 0,
                name: None,
            }],
            ..Default::default()
        };
        let err = Simulation::new(
            small_block(),
            &MaterialLibrary::default(),
            &scenario,
            TimeConfig::default(),
            NewtonConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("nowhere"));
    }
}
