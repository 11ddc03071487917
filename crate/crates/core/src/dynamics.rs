//! Time marching: the semi-implicit dynamic step with explicit velocity
//! update, the quasi-static step, CFL step control and checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{Mode, Model, StepData, SystemState};
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::mesh::Mesh;
use crate::solver::{newton_solve, LinearSolver, NewtonConfig, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    #[default]
    Dynamic,
    QuasiStatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Requested step (s).
    pub dt: f64,
    pub t_end: f64,
    /// Courant number in (0, 1].
    pub c_max: f64,
    pub mode: TimeMode,
    /// Write a field snapshot every this many steps (0: final state only).
    pub output_every: usize,
    /// Pseudo-time steps for quasi-static runs (0: use `dt`).
    pub n_steps: usize,
    /// `[t_from, dt]` pairs overriding `dt` from `t_from` on.
    pub dt_schedule: Vec<[f64; 2]>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            t_end: 0.2,
            c_max: 0.5,
            mode: TimeMode::Dynamic,
            output_every: 0,
            n_steps: 0,
            dt_schedule: Vec::new(),
        }
    }
}

impl TimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(MyoError::Validation(format!(
                "time.dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(MyoError::Validation(
                "time.t_end must be non-negative".into(),
            ));
        }
        if !(self.c_max > 0.0 && self.c_max <= 1.0) {
            return Err(MyoError::Validation(format!(
                "time.c_max must lie in (0, 1], got {}",
                self.c_max
            )));
        }
        if self.dt_schedule.iter().any(|[_, dt]| !(*dt > 0.0)) {
            return Err(MyoError::Validation(
                "time.dt_schedule steps must be positive".into(),
            ));
        }
        if self.dt_schedule.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(MyoError::Validation(
                "time.dt_schedule times must increase".into(),
            ));
        }
        Ok(())
    }

    /// Requested step at time `t`.
    pub fn dt_at(&self, t: f64) -> f64 {
        let mut dt = self.dt;
        for &[from, d] in &self.dt_schedule {
            if t >= from - 1e-12 * from.abs().max(1.0) {
                dt = d;
            }
        }
        dt
    }

    /// Pseudo-time step for quasi-static runs at time `t`.
    pub fn quasi_static_dt(&self, t: f64) -> f64 {
        if self.n_steps > 0 {
            self.t_end / self.n_steps as f64
        } else {
            self.dt_at(t)
        }
    }
}

/// Largest nodal speed.
pub fn max_speed(v: &DVector<f64>) -> f64 {
    v.as_slice()
        .chunks_exact(3)
        .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
        .fold(0.0, f64::max)
}

/// `min(dt_in, c_max h_min / |v|_inf)`, or `dt_in` when the mesh is at rest.
pub fn cfl_dt_with(h_min: f64, v_max: f64, dt_in: f64, c_max: f64) -> f64 {
    if v_max > 0.0 {
        dt_in.min(c_max * h_min / v_max)
    } else {
        dt_in
    }
}

pub fn cfl_dt(mesh: &Mesh, v: &DVector<f64>, dt_in: f64, c_max: f64) -> f64 {
    cfl_dt_with(mesh.h_min(), max_speed(v), dt_in, c_max)
}

/// Per-step inputs from the scenario.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    /// Activation per cell at the new time level.
    pub activation: &'a [f64],
    /// Prescribed values of the constrained dofs at the new time level.
    pub targets: &'a [f64],
}

/// One step of the semi-implicit scheme: implicit in `u`, `p`, `D` with the
/// stress rate lagged at `v^{n-1}`, then `v^n = (u^n - u^{n-1}) / dt`.
pub fn step_dynamic(
    model: &Model,
    prev: &SystemState,
    dt: f64,
    input: StepInput,
    cfg: &NewtonConfig,
    solver: &mut LinearSolver,
) -> Result<(SystemState, SolveStats)> {
    let epsbar = model.fibre_rates(prev);
    let step = StepData {
        prev,
        mode: Mode::Dynamic { dt },
        activation: input.activation,
        epsbar: &epsbar,
    };
    let (mut next, stats) = newton_solve(model, prev.clone(), &step, input.targets, cfg, solver)?;
    next.v = (&next.u - &prev.u) / dt;
    next.t = prev.t + dt;
    Ok((next, stats))
}

/// Equilibrium at the new pseudo-time `t` with no inertia and the
/// force-velocity factor fixed at one. Velocity is reported as zero.
pub fn step_quasistatic(
    model: &Model,
    prev: &SystemState,
    t: f64,
    input: StepInput,
    cfg: &NewtonConfig,
    solver: &mut LinearSolver,
) -> Result<(SystemState, SolveStats)> {
    let epsbar = vec![0.0; model.mesh.n_cells() * model.n_qp()];
    let step = StepData {
        prev,
        mode: Mode::QuasiStatic,
        activation: input.activation,
        epsbar: &epsbar,
    };
    let (mut next, stats) = newton_solve(model, prev.clone(), &step, input.targets, cfg, solver)?;
    next.v.fill(0.0);
    next.t = t;
    Ok((next, stats))
}

/// Saved state with the per-cell activation in force at that time.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub element: ElementType,
    pub n_nodes: usize,
    pub n_cells: usize,
    pub state: SystemState,
    pub activation: Vec<f64>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_block(out: &mut String, name: &str, data: &[f64], per_line: usize) {
    let _ = writeln!(out, "{name} {}", data.len());
    for chunk in data.chunks(per_line.max(1)) {
        let line: Vec<String> = chunk.iter().map(|v| fmt(*v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Native text checkpoint (`MYOSTATE 1`).
pub fn write_checkpoint(cp: &Checkpoint) -> String {
    let mut out = String::from("MYOSTATE 1\n");
    let _ = writeln!(out, "ELEMENT {}", cp.element.name());
    let _ = writeln!(out, "NODES {}", cp.n_nodes);
    let _ = writeln!(out, "CELLS {}", cp.n_cells);
    let _ = writeln!(out, "TIME {}", fmt(cp.state.t));
    let np = cp.element.pressure().n_dofs();
    write_block(&mut out, "U", cp.state.u.as_slice(), 3);
    write_block(&mut out, "V", cp.state.v.as_slice(), 3);
    write_block(&mut out, "P", cp.state.p.as_slice(), np);
    write_block(&mut out, "D", cp.state.d.as_slice(), np);
    write_block(&mut out, "ACTIVATION", &cp.activation, 1);
    out.push_str("END\n");
    out
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.it.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let t = l.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, m: impl Into<String>) -> MyoError {
        MyoError::Parse {
            line: self.line,
            message: m.into(),
        }
    }

    fn keyword(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            _ => Err(self.err(format!("expected {key}, found {l:?}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.keyword(key)?;
        v.parse()
            .map_err(|_| self.err(format!("bad {key} count {v:?}")))
    }

    fn block(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let n = self.count(key)?;
        if n != expected {
            return Err(self.err(format!("{key} has {n} values, expected {expected}")));
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let l = self.next()?;
            for tok in l.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.err(format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(self.err("non-finite value"));
                }
                out.push(v);
            }
        }
        if out.len() != n {
            return Err(self.err(format!("{key} has extra values")));
        }
        Ok(out)
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut r = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    let header = r.next()?;
    if header != "MYOSTATE 1" {
        return Err(r.err(format!("expected header MYOSTATE 1, found {header:?}")));
    }
    let el = r.keyword("ELEMENT")?;
    let element = match el {
        "Q1-P0" => ElementType::Q1P0,
        "Q2-P1" => ElementType::Q2P1,
        _ => return Err(r.err(format!("unknown element {el:?}"))),
    };
    let n_nodes = r.count("NODES")?;
    let n_cells = r.count("CELLS")?;
    let t_str = r.keyword("TIME")?;
    let t: f64 = t_str
        .parse()
        .map_err(|_| r.err(format!("bad time {t_str:?}")))?;
    let np = element.pressure().n_dofs() * n_cells;
    let u = r.block("U", 3 * n_nodes)?;
    let v = r.block("V", 3 * n_nodes)?;
    let p = r.block("P", np)?;
    let d = r.block("D", np)?;
    let activation = r.block("ACTIVATION", n_cells)?;
    if r.next()? != "END" {
        return Err(r.err("expected END"));
    }
    let stride = element.pressure().n_dofs();
    if let Some(c) = d.iter().step_by(stride).position(|&x| x <= 0.0) {
        return Err(MyoError::Validation(format!(
            "cell {c} has non-positive dilation"
        )));
    }
    Ok(Checkpoint {
        element,
        n_nodes,
        n_cells,
        state: SystemState {
            u: DVector::from_vec(u),
            p: DVector::from_vec(p),
            d: DVector::from_vec(d),
            v: DVector::from_vec(v),
            t,
        },
        activation,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MyoError::Io(format!("{}: {e}", path.display())))?;
    parse_checkpoint(&text)
}

impl Checkpoint {
    pub fn new(mesh: &Mesh, state: &SystemState, activation: &[f64]) -> Self {
        Self {
            element: mesh.element,
            n_nodes: mesh.n_nodes(),
            n_cells: mesh.n_cells(),
            state: state.clone(),
            activation: activation.to_vec(),
        }
    }

    pub fn matches(&self, mesh: &Mesh) -> Result<()> {
        if self.element != mesh.element
            || self.n_nodes != mesh.n_nodes()
            || self.n_cells != mesh.n_cells()
        {
            return Err(MyoError::Validation(format!(
                "checkpoint ({}, {} nodes, {} cells) does not match mesh ({}, {} nodes, {} cells)",
                self.element.name(),
                self.n_nodes,
                self.n_cells,
                mesh.element.name(),
                mesh.n_nodes(),
                mesh.n_cells()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_tangent;
    use crate::constitutive::{MaterialLibrary, TissueKind};
    use crate::mesh::{generate_block, BlockSpec, Divisions};
    use approx::assert_relative_eq;

    #[test]
    fn cfl_formula() {
        assert_eq!(cfl_dt_with(1e-3, 0.0, 0.7, 0.5), 0.7);
        assert_relative_eq!(cfl_dt_with(1e-3, 0.5, 1.0, 0.5), 1e-3, max_relative = 1e-15);
        let a = cfl_dt_with(1e-3, 0.5, 1.0, 0.25);
        let b = cfl_dt_with(1e-3, 0.5, 1.0, 0.5);
        assert_eq!(b, 2.0 * a);
        // Nodal speed is the Euclidean norm of the nodal vector.
        let v = DVector::from_vec(vec![0.0, 3.0, 4.0, 1.0, 0.0, 0.0]);
        assert_eq!(max_speed(&v), 5.0);
    }

    #[test]
    fn dt_schedule() {
        let tc = TimeConfig {
            dt: 1e-3,
            dt_schedule: vec![[0.05, 1e-5], [0.06, 1e-4]],
            ..Default::default()
        };
        tc.validate().unwrap();
        assert_eq!(tc.dt_at(0.0), 1e-3);
        assert_eq!(tc.dt_at(0.05), 1e-5);
        assert_eq!(tc.dt_at(0.2), 1e-4);
        let bad = TimeConfig {
            dt_schedule: vec![[0.1, 1e-5], [0.05, 1e-4]],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn model(cons_sets: &[(&str, &[usize])]) -> Model {
        let spec = BlockSpec {
            length: 0.01,
            width: 0.01,
            height: 0.01,
        };
        let mesh = generate_block(&spec, Divisions::new(1, 1, 1), ElementType::Q1P0).unwrap();
        let mut cons = Vec::new();
        for (set, comps) in cons_sets {
            for n in mesh.set_nodes(set).unwrap() {
                cons.extend(comps.iter().map(|c| 3 * n + c));
            }
        }
        cons.sort_unstable();
        cons.dedup();
        let mut p = MaterialLibrary::default().tissue(TissueKind::Muscle);
        p.kappa = 1e5;
        let mut m = Model::new(mesh.clone(), vec![p; 1], &cons).unwrap();
        m.fibre_on = false;
        m
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let m = model(&[("-x", &[0, 1, 2])]);
        let mut s = SystemState::rest(&m.dofs);
        let targets = vec![0.0; m.dofs.cons.len()];
        let mut ls = LinearSolver::new();
        for _ in 0..3 {
            let (n, _) = step_dynamic(
                &m,
                &s,
                1e-3,
                StepInput {
                    activation: &[0.0],
                    targets: &targets,
                },
                &NewtonConfig::default(),
                &mut ls,
            )
            .unwrap();
            s = n;
        }
        assert!(s.u.amax() < 1e-15);
        assert!(s.v.amax() < 1e-12);
        assert_relative_eq!(s.t, 3e-3, max_relative = 1e-14);
    }

    #[test]
    fn single_mode_matches_scalar_recurrence() {
        // Clamp the -x face and the transverse motion of the +x face; by
        // symmetry the four +x x-dofs move together as one oscillator.
        let m = model(&[("-x", &[0, 1, 2]), ("+x", &[1, 2])]);
        let rest = SystemState::rest(&m.dofs);
        let dt = 2e-4;
        let zeros = vec![0.0; m.n_qp()];
        let quasi = StepData {
            prev: &rest,
            mode: Mode::QuasiStatic,
            activation: &[0.0],
            epsbar: &zeros,
        };
        let dynamic = StepData {
            mode: Mode::Dynamic { dt },
            ..quasi
        };
        let k = assemble_tangent(&m, &rest, &quasi).unwrap().to_dense();
        let kd = assemble_tangent(&m, &rest, &dynamic).unwrap().to_dense();
        let free = &m.dofs.free;
        let phi_dofs: Vec<usize> = m
            .mesh
            .set_nodes("+x")
            .unwrap()
            .iter()
            .map(|n| 3 * n)
            .collect();
        let kf = k.select_rows(free).select_columns(free);
        let mut phi = DVector::zeros(free.len());
        for (i, g) in free.iter().enumerate() {
            if phi_dofs.contains(g) {
                phi[i] = 1.0;
            }
        }
        // Condensed stiffness along phi via one solve of the mixed system.
        let y = kf.clone().lu().solve(&phi).unwrap();
        let pp = phi.dot(&phi);
        let k_eff = pp * pp / phi.dot(&y);
        let mass = (kd - k) * dt * dt;
        let m_eff: f64 = phi_dofs
            .iter()
            .flat_map(|&a| phi_dofs.iter().map(move |&b| (a, b)))
            .map(|(a, b)| mass[(a, b)])
            .sum();
        let w2dt2 = k_eff / m_eff * dt * dt;

        let v0 = 1e-6;
        let mut s = rest.clone();
        for &d in &phi_dofs {
            s.v[d] = v0;
        }
        let (mut u_ref, mut v_ref) = (0.0, v0);
        let targets = vec![0.0; m.dofs.cons.len()];
        let mut ls = LinearSolver::new();
        let cfg = NewtonConfig {
            abs_tol: 1e-14,
            ..Default::default()
        };
        for _ in 0..25 {
            let (n, _) = step_dynamic(
                &m,
                &s,
                dt,
                StepInput {
                    activation: &[0.0],
                    targets: &targets,
                },
                &cfg,
                &mut ls,
            )
            .unwrap();
            s = n;
            let u_new = (u_ref + dt * v_ref) / (1.0 + w2dt2);
            v_ref = (u_new - u_ref) / dt;
            u_ref = u_new;
            for &d in &phi_dofs {
                assert_relative_eq!(s.u[d], u_ref, max_relative = 1e-4);
            }
        }
        // Dissipative amplification: |eigenvalues| < 1.
        assert!(1.0 / (1.0 + w2dt2).sqrt() < 1.0);
    }

    #[test]
    fn quasistatic_clamped_stays_clamped() {
        let m = model(&[("-x", &[0, 1, 2]), ("+x", &[0, 1, 2])]);
        let mut m = m;
        m.fibre_on = true;
        let mut s = SystemState::rest(&m.dofs);
        let targets = vec![0.0; m.dofs.cons.len()];
        let mut ls = LinearSolver::new();
        for k in 1..=4 {
            let a = [k as f64 / 4.0];
            let (n, _) = step_quasistatic(
                &m,
                &s,
                k as f64 * 0.1,
                StepInput {
                    activation: &a,
                    targets: &targets,
                },
                &NewtonConfig::default(),
                &mut ls,
            )
            .unwrap();
            s = n;
            for &c in &m.dofs.cons {
                assert_eq!(s.u[c], 0.0);
            }
        }
        assert_eq!(s.v.amax(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(&[]);
        let mut s = SystemState::rest(&m.dofs);
        for (i, v) in s.u.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 1e-3;
        }
        s.v[4] = -0.125;
        s.p[0] = 1234.5678;
        s.t = 0.0123;
        let cp = Checkpoint::new(&m.mesh, &s, &[0.25]);
        let text = write_checkpoint(&cp);
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back, cp);
        assert_eq!(write_checkpoint(&back), text);
        back.matches(&m.mesh).unwrap();

        let bad = text.replace("CELLS 1", "CELLS 2");
        assert!(parse_checkpoint(&bad).is_err());
        let bad = text.replace("MYOSTATE 1", "MYOSTATE 2");
        assert!(matches!(
            parse_checkpoint(&bad),
            Err(MyoError::Parse { line: 1, .. })
        ));
    }
}
