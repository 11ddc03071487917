//! Newton iteration with backtracking line search and the linear
//! saddle-point solve.

use std::sync::Arc;
use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, Model, StepData, SystemState};
use crate::error::{MyoError, Result};
use crate::sparse::{SparseMatrix, SparsePattern};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LinearSolverKind {
    /// Sparse LU with partial pivoting.
    Direct,
    /// MINRES with a positive diagonal preconditioner.
    Minres { tol: f64, max_iters: usize },
}

impl Default for LinearSolverKind {
    fn default() -> Self {
        LinearSolverKind::Direct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearch {
    pub sufficient_decrease: f64,
    pub max_halvings: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            sufficient_decrease: 1e-4,
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Tolerance on the nondimensional residual norm.
    pub abs_tol: f64,
    /// Tolerance relative to the largest norm seen in the solve.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub line_search: LineSearch,
    pub linear: LinearSolverKind,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_iters: 25,
            line_search: LineSearch::default(),
            linear: LinearSolverKind::Direct,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(MyoError::Validation(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(MyoError::Validation(
                "solver max_iters must be at least 1".into(),
            ));
        }
        if let LinearSolverKind::Minres { tol, max_iters } = self.linear {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(MyoError::Validation("invalid MINRES settings".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    /// Newton updates taken.
    pub iterations: usize,
    /// Nondimensional residual norm before each update and at the end.
    pub history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    /// Halvings taken by the line search at each update.
    pub halvings: Vec<usize>,
    /// Whether each update moved constrained dofs toward their targets.
    pub lifted: Vec<bool>,
    pub converged: bool,
    #[serde(serialize_with = "ser_secs")]
    pub wall_time: Duration,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SolveStats {
    pub fn final_residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }

    /// `r[k+1] <= c r[k]^2` over the final `n` updates. Lifting updates
    /// change the problem rather than iterate on it and are skipped, as are
    /// pairs whose new norm is already below `floor` (round-off).
    pub fn quadratic_tail(&self, c: f64, n: usize, floor: f64) -> bool {
        let h = &self.history;
        let start = h.len().saturating_sub(n + 1);
        (start..h.len().saturating_sub(1)).all(|k| {
            self.lifted.get(k).copied().unwrap_or(false)
                || h[k + 1] <= floor
                || h[k + 1] <= c * h[k] * h[k]
        })
    }
}

/// Per-field scales that make the residual norm dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualScale {
    pub force: f64,
    pub volume: f64,
    pub energy: f64,
}

impl ResidualScale {
    /// Force `sigma0 l^2`, volume `l^3`, energy `sigma0 l^3` with
    /// `l = V^(1/3)` and `sigma0` the largest reference stress in the model.
    pub fn for_model(model: &Model) -> Self {
        let sigma0 = model.params.iter().map(|p| p.sigma0).fold(0.0, f64::max);
        let sigma0 = if sigma0 > 0.0 { sigma0 } else { 1.0 };
        let vol = model.mesh.volume();
        let l = vol.cbrt();
        Self {
            force: sigma0 * l * l,
            volume: vol,
            energy: sigma0 * vol,
        }
    }

    pub fn norm(&self, model: &Model, r: &DVector<f64>) -> f64 {
        let dofs = &model.dofs;
        let d0 = dofs.d(0, 0);
        let mut s = 0.0;
        for &i in &dofs.free {
            let scale = if i < dofs.n_u {
                self.force
            } else if i < d0 {
                self.volume
            } else {
                self.energy
            };
            let v = r[i] / scale;
            s += v * v;
        }
        s.sqrt()
    }
}

/// Linear solver with a cached symbolic factorization.
#[derive(Default)]
pub struct LinearSolver {
    symbolic: Option<(Arc<SparsePattern>, SymbolicLu<usize>)>,
    restriction: Option<(Arc<SparsePattern>, Arc<SparsePattern>, Vec<usize>)>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver").finish_non_exhaustive()
    }
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restriction of `a` to the rows and columns in `free`, cached per pattern.
    fn restrict(&mut self, a: &SparseMatrix, free: &[usize]) -> SparseMatrix {
        let hit = matches!(&self.restriction, Some((full, _, _)) if Arc::ptr_eq(full, &a.pattern));
        if !hit {
            let (sub, src) = a.pattern.restrict(free);
            self.restriction = Some((a.pattern.clone(), Arc::new(sub), src));
        }
        let (_, sub, src) = self.restriction.as_ref().expect("set above");
        a.restrict(sub, src)
    }

    /// Solves `a x = b`; returns the solution and the iteration count
    /// (1 for the direct path).
    pub fn solve(
        &mut self,
        a: &SparseMatrix,
        b: &DVector<f64>,
        kind: LinearSolverKind,
    ) -> Result<(DVector<f64>, usize)> {
        match kind {
            LinearSolverKind::Direct => self.direct(a, b).map(|x| (x, 1)),
            LinearSolverKind::Minres { tol, max_iters } => minres(a, b, tol, max_iters),
        }
    }

    fn direct(&mut self, a: &SparseMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = a.n();
        if n == 0 {
            return Ok(DVector::zeros(0));
        }
        let p = &a.pattern;
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &p.col_ptr, None, &p.row_idx);
        let hit = matches!(&self.symbolic, Some((cached, _)) if Arc::ptr_eq(cached, p) || **cached == **p);
        if !hit {
            let s = SymbolicLu::try_new(sym)
                .map_err(|e| MyoError::LinearSolveFailure(e.to_string()))?;
            self.symbolic = Some((p.clone(), s));
        }
        let symbolic = self.symbolic.as_ref().expect("set above").1.clone();
        let mat = SparseColMatRef::new(sym, &a.vals);
        let lu = Lu::try_new_with_symbolic(symbolic, mat).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                MyoError::SingularMatrix(format!("structurally singular at pivot {index}"))
            }
            other => MyoError::LinearSolveFailure(other.to_string()),
        })?;
        let apply = |rhs: &DVector<f64>| {
            let mut m = faer::Mat::from_fn(n, 1, |i, _| rhs[i]);
            lu.solve_in_place(m.as_mut());
            DVector::from_fn(n, |i, _| m[(i, 0)])
        };
        let bn = b.norm();
        if bn == 0.0 {
            return Ok(DVector::zeros(n));
        }
        let mut x = apply(b);
        let mut res = b - a.matvec(&x);
        // One refinement step recovers accuracy lost to small pivots.
        if res.norm() > 1e-12 * bn {
            x += apply(&res);
            res = b - a.matvec(&x);
        }
        let rel = res.norm() / bn;
        if !x.iter().all(|v| v.is_finite()) || !(rel <= 1e-8) {
            return Err(MyoError::SingularMatrix(format!(
                "relative residual {rel:e} after refinement; check that rigid motions are constrained"
            )));
        }
        Ok(x)
    }
}

/// Positive diagonal preconditioner. Rows with a zero diagonal (the pressure
/// rows) use the Schur-like estimate `sum_j a_ij^2 / |a_jj|`.
fn diag_preconditioner(a: &SparseMatrix) -> DVector<f64> {
    let d = a.diagonal();
    let p = &a.pattern;
    let mut m = d.abs();
    for j in 0..p.n {
        for pos in p.col_ptr[j]..p.col_ptr[j + 1] {
            let i = p.row_idx[pos];
            if d[i] == 0.0 && i != j && d[j] != 0.0 {
                m[i] += a.vals[pos] * a.vals[pos] / d[j].abs();
            }
        }
    }
    let fallback = m.max().max(1.0);
    m.map(|v| if v > 0.0 { v } else { fallback })
}

/// Preconditioned MINRES for symmetric, possibly indefinite systems.
pub fn minres(
    a: &SparseMatrix,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(DVector<f64>, usize)> {
    let n = a.n();
    let minv = diag_preconditioner(a).map(|v| 1.0 / v);
    let mut x = DVector::zeros(n);
    let bn = b.norm();
    if bn == 0.0 {
        return Ok((x, 0));
    }
    let mut r1 = b.clone();
    let mut y = r1.component_mul(&minv);
    let mut beta1 = r1.dot(&y);
    if beta1 <= 0.0 {
        return Err(MyoError::LinearSolveFailure(
            "indefinite preconditioner".into(),
        ));
    }
    beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln) = (0.0, 0.0);
    let (mut phibar, mut cs, mut sn) = (beta1, -1.0, 0.0);
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);
    for it in 1..=max_iters {
        let s = 1.0 / beta;
        let v = &y * s;
        let mut yy = a.matvec(&v);
        if it >= 2 {
            yy -= &r1 * (beta / oldb);
        }
        let alfa = v.dot(&yy);
        yy -= &r2 * (alfa / beta);
        r1 = r2;
        r2 = yy;
        y = r2.component_mul(&minv);
        oldb = beta;
        let b2 = r2.dot(&y);
        if b2 < 0.0 {
            return Err(MyoError::LinearSolveFailure(
                "indefinite preconditioner".into(),
            ));
        }
        beta = b2.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = w2;
        w2 = w;
        w = (v - &w1 * oldeps - &w2 * delta) / gamma;
        x += &w * phi;

        if it % 10 == 0 || phibar < tol * beta1 {
            let true_res = (b - a.matvec(&x)).norm();
            if true_res <= tol * bn {
                return Ok((x, it));
            }
        }
        if beta == 0.0 {
            break;
        }
    }
    Err(MyoError::LinearSolveFailure(format!(
        "MINRES did not reach {tol:e} in {max_iters} iterations"
    )))
}

fn constrained_gap(model: &Model, x: &DVector<f64>, targets: &[f64]) -> DVector<f64> {
    let mut dc = DVector::zeros(model.dofs.n_total);
    for (k, &i) in model.dofs.cons.iter().enumerate() {
        dc[i] = targets[k] - x[i];
    }
    dc
}

fn constrained_reached(model: &Model, x: &DVector<f64>, targets: &[f64]) -> bool {
    model
        .dofs
        .cons
        .iter()
        .zip(targets)
        .all(|(&i, &t)| x[i] == t)
}

/// Newton iteration on `R(x) = 0` with Dirichlet lifting: the constrained
/// displacements move from their warm-start values to `targets` (listed in
/// `model.dofs.cons` order) in the first update and stay fixed afterwards.
///
/// Returns the best state seen and the statistics; `stats.converged`
/// tells whether the tolerance was met. Errors only when no evaluable
/// state can be produced or the linear solve fails.
pub fn newton_iterate(
    model: &Model,
    guess: SystemState,
    step: &StepData,
    targets: &[f64],
    cfg: &NewtonConfig,
    solver: &mut LinearSolver,
) -> Result<(SystemState, SolveStats)> {
    let start = Instant::now();
    let dofs = &model.dofs;
    if targets.len() != dofs.cons.len() {
        return Err(MyoError::Validation(
            "one target per constrained dof required".into(),
        ));
    }
    let scale = ResidualScale::for_model(model);
    let mut state = guess;
    let mut x = state.pack();
    let mut stats = SolveStats::default();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut reference = 0.0_f64;

    for iter in 0..=cfg.max_iters {
        let need_matrix = iter < cfg.max_iters;
        let asm = assemble(model, &state, step, need_matrix)?;
        let norm = scale.norm(model, &asm.residual);
        stats.history.push(norm);
        reference = reference.max(norm);
        let reached = constrained_reached(model, &x, targets);
        if reached && best.as_ref().is_none_or(|(b, _)| norm < *b) {
            best = Some((norm, x.clone()));
        }
        if reached && norm <= cfg.abs_tol.max(cfg.rel_tol * reference) {
            stats.converged = true;
            break;
        }
        if !need_matrix {
            break;
        }
        let k_full = asm.matrix.expect("matrix requested");
        let dc = constrained_gap(model, &x, targets);
        let lifting = dc.amax() > 0.0;
        let mut rhs_full = -&asm.residual;
        if lifting {
            rhs_full -= k_full.matvec(&dc);
        }
        let rhs = DVector::from_iterator(dofs.free.len(), dofs.free.iter().map(|&i| rhs_full[i]));
        let k_free = solver.restrict(&k_full, &dofs.free);
        let (dx_free, lin_its) = solver.solve(&k_free, &rhs, cfg.linear)?;
        stats.linear_iterations.push(lin_its);
        let mut dx = dc;
        for (k, &i) in dofs.free.iter().enumerate() {
            dx[i] = dx_free[k];
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut last_evaluable = None;
        let mut halvings = 0;
        loop {
            let trial_x = &x + &dx * alpha;
            let mut trial = state.clone();
            trial.unpack(&trial_x);
            if lifting && alpha == 1.0 {
                // Hit prescribed values exactly despite round-off.
                for (k, &i) in dofs.cons.iter().enumerate() {
                    trial.u[i] = targets[k];
                }
            }
            let d_ok = trial.d.iter().step_by(dofs.np.max(1)).all(|&d| d > 0.0);
            let eval = if d_ok {
                assemble(model, &trial, step, false).ok()
            } else {
                None
            };
            if let Some(a) = eval {
                let tn = scale.norm(model, &a.residual);
                if lifting || tn <= (1.0 - cfg.line_search.sufficient_decrease * alpha) * norm {
                    accepted = Some(trial);
                    break;
                }
                last_evaluable = Some(trial);
            }
            if halvings == cfg.line_search.max_halvings {
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
        stats.halvings.push(halvings);
        stats.lifted.push(lifting);
        stats.iterations += 1;
        match accepted.or(last_evaluable) {
            Some(s) => {
                state = s;
                x = state.pack();
            }
            None => {
                return Err(MyoError::NonConvergence {
                    iterations: stats.iterations,
                    residual: norm,
                });
            }
        }
    }
    if let Some((_, bx)) = best {
        if !stats.converged {
            state.unpack(&bx);
        }
    }
    stats.wall_time = start.elapsed();
    Ok((state, stats))
}

/// As [`newton_iterate`], failing with `NonConvergence` when the tolerance
/// is not met.
pub fn newton_solve(
    model: &Model,
    guess: SystemState,
    step: &StepData,
    targets: &[f64],
    cfg: &NewtonConfig,
    solver: &mut LinearSolver,
) -> Result<(SystemState, SolveStats)> {
    let (state, stats) = newton_iterate(model, guess, step, targets, cfg, solver)?;
    if !stats.converged {
        return Err(MyoError::NonConvergence {
            iterations: stats.iterations,
            residual: stats.final_residual(),
        });
    }
    Ok((state, stats))
}

/// Solves `a x = b` with the configured method.
pub fn linear_solve(
    a: &SparseMatrix,
    b: &DVector<f64>,
    kind: LinearSolverKind,
) -> Result<DVector<f64>> {
    LinearSolver::new().solve(a, b, kind).map(|(x, _)| x)
}
