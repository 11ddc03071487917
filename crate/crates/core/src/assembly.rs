//! Total-Lagrangian residual and consistent tangent of the three-field
//! (displacement, pressure, dilation) system.
//!
//! Global dof layout: displacement `3 * node + component`, then the
//! per-cell pressure coefficients, then the per-cell dilation coefficients.
//! The dynamic momentum equation is divided by `dt^2`, so the inertial term
//! reads `rho0 / dt^2 (u - u_prev - dt v_prev)` and every block stays
//! symmetric without rescaling the pressure and dilation equations.

use std::sync::Arc;

use nalgebra::{DVector, SMatrix};
use rayon::prelude::*;

use crate::constitutive::{evaluate_stress, volumetric_response, StressOptions, TissueParams};
use crate::elements::{isoparametric_map, Tabulation};
use crate::error::{MyoError, Result};
use crate::kinematics::{
    fibre_measures, fibre_strain_rate, from_f, spatial_velocity_gradient, RatePoint,
};
use crate::mesh::Mesh;
use crate::sparse::{SparseMatrix, SparsePattern};
use crate::tensor::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Dynamic { dt: f64 },
    QuasiStatic,
}

impl Mode {
    pub fn is_quasi_static(self) -> bool {
        matches!(self, Mode::QuasiStatic)
    }
}

/// Global numbering of displacement, pressure and dilation dofs, and the
/// split into free and constrained displacement dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub n_nodes: usize,
    pub n_cells: usize,
    /// Pressure (and dilation) coefficients per cell.
    pub np: usize,
    pub n_u: usize,
    pub n_total: usize,
    pub constrained: Vec<bool>,
    pub free: Vec<usize>,
    pub cons: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, constrained_dofs: &[usize]) -> Result<Self> {
        let np = mesh.element.pressure().n_dofs();
        let n_u = 3 * mesh.n_nodes();
        let n_total = n_u + 2 * np * mesh.n_cells();
        let mut constrained = vec![false; n_total];
        for &d in constrained_dofs {
            if d >= n_u {
                return Err(MyoError::Validation(format!(
                    "constraint on non-displacement dof {d}"
                )));
            }
            constrained[d] = true;
        }
        let free = (0..n_total).filter(|&i| !constrained[i]).collect();
        let cons = (0..n_total).filter(|&i| constrained[i]).collect();
        Ok(Self {
            n_nodes: mesh.n_nodes(),
            n_cells: mesh.n_cells(),
            np,
            n_u,
            n_total,
            constrained,
            free,
            cons,
        })
    }

    pub fn u(&self, node: usize, comp: usize) -> usize {
        3 * node + comp
    }

    pub fn p(&self, cell: usize, k: usize) -> usize {
        self.n_u + cell * self.np + k
    }

    pub fn d(&self, cell: usize, k: usize) -> usize {
        self.n_u + (self.n_cells + cell) * self.np + k
    }

    /// Global dofs of a cell in local order: displacements, pressure, dilation.
    pub fn cell_dofs(&self, mesh: &Mesh, c: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(3 * mesh.nodes_per_cell() + 2 * self.np);
        for &n in mesh.cell(c) {
            out.extend([3 * n, 3 * n + 1, 3 * n + 2]);
        }
        out.extend((0..self.np).map(|k| self.p(c, k)));
        out.extend((0..self.np).map(|k| self.d(c, k)));
        out
    }
}

/// Global fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub u: DVector<f64>,
    pub p: DVector<f64>,
    pub d: DVector<f64>,
    pub v: DVector<f64>,
    pub t: f64,
}

impl SystemState {
    /// Rest state: `u = 0`, `v = 0`, `p = 0`, `D = 1`.
    pub fn rest(dofs: &DofMap) -> Self {
        let np = dofs.np * dofs.n_cells;
        let mut d = DVector::zeros(np);
        for c in 0..dofs.n_cells {
            // Only the constant mode carries the unit dilation.
            d[c * dofs.np] = 1.0;
        }
        Self {
            u: DVector::zeros(dofs.n_u),
            p: DVector::zeros(np),
            d,
            v: DVector::zeros(dofs.n_u),
            t: 0.0,
        }
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.u.len() + self.p.len() + self.d.len());
        x.rows_mut(0, self.u.len()).copy_from(&self.u);
        x.rows_mut(self.u.len(), self.p.len()).copy_from(&self.p);
        x.rows_mut(self.u.len() + self.p.len(), self.d.len())
            .copy_from(&self.d);
        x
    }

    pub fn unpack(&mut self, x: &DVector<f64>) {
        let (nu, np) = (self.u.len(), self.p.len());
        self.u.copy_from(&x.rows(0, nu));
        self.p.copy_from(&x.rows(nu, np));
        self.d.copy_from(&x.rows(nu + np, self.d.len()));
    }

    pub fn node_u(&self, n: usize) -> Vec3 {
        Vec3::new(self.u[3 * n], self.u[3 * n + 1], self.u[3 * n + 2])
    }

    pub fn node_v(&self, n: usize) -> Vec3 {
        Vec3::new(self.v[3 * n], self.v[3 * n + 1], self.v[3 * n + 2])
    }
}

/// Reference geometry of one quadrature point.
#[derive(Debug, Clone)]
struct QpGeom {
    dv: f64,
    grad0: Vec<Vec3>,
}

/// Mesh, materials and precomputed reference data for assembly.
#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: Mesh,
    pub tab: Tabulation,
    /// Material of each cell.
    pub params: Vec<TissueParams>,
    pub dofs: DofMap,
    pub fibre_on: bool,
    /// Reference body force density (N/m^3).
    pub body_force: Vec3,
    geom: Vec<Vec<QpGeom>>,
    cell_dofs: Vec<Vec<usize>>,
    pattern: Arc<SparsePattern>,
    slots: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(mesh: Mesh, params: Vec<TissueParams>, constrained_dofs: &[usize]) -> Result<Self> {
        if params.len() != mesh.n_cells() {
            return Err(MyoError::Validation(
                "one material per cell required".into(),
            ));
        }
        let tab = Tabulation::new(mesh.element);
        let dofs = DofMap::new(&mesh, constrained_dofs)?;
        let mut geom = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let x = mesh.cell_coords(c);
            let mut g = Vec::with_capacity(tab.rule.len());
            for q in 0..tab.rule.len() {
                let mp = isoparametric_map(&x, &tab.u_vals[q], &tab.u_grads[q]).map_err(
                    |e| match e {
                        MyoError::InvertedCell { det, .. } => {
                            MyoError::InvertedCell { cell: c, det }
                        }
                        other => other,
                    },
                )?;
                g.push(QpGeom {
                    dv: mp.det * tab.rule.weights[q],
                    grad0: mp.grad0,
                });
            }
            geom.push(g);
        }
        let cell_dofs: Vec<Vec<usize>> = (0..mesh.n_cells())
            .map(|c| dofs.cell_dofs(&mesh, c))
            .collect();
        let pattern = Arc::new(SparsePattern::from_elements(dofs.n_total, &cell_dofs));
        let slots = cell_dofs
            .iter()
            .map(|ld| {
                let m = ld.len();
                let mut s = vec![0; m * m];
                for (b, &j) in ld.iter().enumerate() {
                    for (a, &i) in ld.iter().enumerate() {
                        s[b * m + a] = pattern.position(i, j).expect("pattern covers element");
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            mesh,
            tab,
            params,
            dofs,
            fibre_on: true,
            body_force: Vec3::zeros(),
            geom,
            cell_dofs,
            pattern,
            slots,
        })
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn n_qp(&self) -> usize {
        self.tab.rule.len()
    }

    pub fn qp_volume(&self, c: usize, q: usize) -> f64 {
        self.geom[c][q].dv
    }

    fn grad0_field(&self, c: usize, q: usize, field: &DVector<f64>) -> Mat3 {
        let mut g = Mat3::zeros();
        for (a, &n) in self.mesh.cell(c).iter().enumerate() {
            let ua = Vec3::new(field[3 * n], field[3 * n + 1], field[3 * n + 2]);
            g += ua * self.geom[c][q].grad0[a].transpose();
        }
        g
    }

    /// Deformation gradient at a quadrature point.
    pub fn deformation(&self, state: &SystemState, c: usize, q: usize) -> Mat3 {
        Mat3::identity() + self.grad0_field(c, q, &state.u)
    }

    /// Interpolated pressure and dilation at a quadrature point.
    pub fn p_d(&self, state: &SystemState, c: usize, q: usize) -> (f64, f64) {
        let psi = &self.tab.p_vals[q];
        let np = self.dofs.np;
        let mut p = 0.0;
        let mut d = 0.0;
        for k in 0..np {
            p += psi[k] * state.p[c * np + k];
            d += psi[k] * state.d[c * np + k];
        }
        (p, d)
    }

    /// Modified fibre strain rate at every quadrature point, from the lagged
    /// velocity and the previous converged deformation.
    pub fn fibre_rates(&self, prev: &SystemState) -> Vec<f64> {
        let nq = self.n_qp();
        (0..self.mesh.n_cells())
            .into_par_iter()
            .flat_map_iter(|c| {
                (0..nq).map(move |q| {
                    let f = self.deformation(prev, c, q);
                    let Ok(dp) = from_f(f) else { return 0.0 };
                    let dp = fibre_measures(&dp, &self.mesh.fibre(c, q));
                    let l = spatial_velocity_gradient(&self.grad0_field(c, q, &prev.v), &f);
                    fibre_strain_rate(&dp, &l).epsbar
                })
            })
            .collect()
    }
}

/// Inputs that stay fixed over the Newton iterations of one step.
#[derive(Debug, Clone, Copy)]
pub struct StepData<'a> {
    pub prev: &'a SystemState,
    pub mode: Mode,
    /// Activation per cell.
    pub activation: &'a [f64],
    /// Fibre strain rate per quadrature point (cell-major).
    pub epsbar: &'a [f64],
}

type Mat63 = SMatrix<f64, 6, 3>;

fn b_matrix(g: &Vec3) -> Mat63 {
    Mat63::new(
        g.x, 0.0, 0.0, //
        0.0, g.y, 0.0, //
        0.0, 0.0, g.z, //
        g.y, g.x, 0.0, //
        0.0, g.z, g.y, //
        g.z, 0.0, g.x,
    )
}

struct ElementOut {
    re: Vec<f64>,
    ke: Option<Vec<f64>>,
}

fn element(
    model: &Model,
    c: usize,
    state: &SystemState,
    step: &StepData,
    with_matrix: bool,
) -> Result<ElementOut> {
    let mesh = &model.mesh;
    let nodes = mesh.cell(c);
    let nn = nodes.len();
    let np = model.dofs.np;
    let nu = 3 * nn;
    let m = nu + 2 * np;
    let params = &model.params[c];
    let opts = StressOptions {
        fibre_on: model.fibre_on,
        quasi_static: step.mode.is_quasi_static(),
    };
    let act = step.activation[c];
    let nq = model.n_qp();

    let mut re = vec![0.0; m];
    let mut ke = if with_matrix {
        vec![0.0; m * m]
    } else {
        Vec::new()
    };
    let idx = |a: usize, b: usize| b * m + a;

    let ue: Vec<Vec3> = nodes.iter().map(|&n| state.node_u(n)).collect();
    let inertia: Option<(f64, Vec<Vec3>)> = match step.mode {
        Mode::Dynamic { dt } => {
            let w = nodes
                .iter()
                .map(|&n| state.node_u(n) - step.prev.node_u(n) - step.prev.node_v(n) * dt)
                .collect();
            Some((params.rho0 / (dt * dt), w))
        }
        Mode::QuasiStatic => None,
    };

    let mut spatial = vec![Vec3::zeros(); nn];
    let mut cb = vec![Mat63::zeros(); nn];
    for q in 0..nq {
        let qg = &model.geom[c][q];
        let dv = qg.dv;
        let nvals = &model.tab.u_vals[q];
        let psi = &model.tab.p_vals[q];

        let mut grad_u = Mat3::zeros();
        for a in 0..nn {
            grad_u += ue[a] * qg.grad0[a].transpose();
        }
        let f = Mat3::identity() + grad_u;
        let dp = from_f(f).map_err(|e| e.with_cell(c))?;
        let dp = fibre_measures(&dp, &mesh.fibre(c, q));
        let rp = RatePoint::with_epsbar(step.epsbar[c * nq + q]);
        let (p_h, d_h) = model.p_d(state, c, q);
        let sp = evaluate_stress(&dp, &rp, p_h, act, params, opts).map_err(|e| e.with_cell(c))?;
        let (_, p_vol, dp_dd) = volumetric_response(d_h, params.kappa)?;

        let finv_t = f.try_inverse().expect("J > 0").transpose();
        for a in 0..nn {
            spatial[a] = finv_t * qg.grad0[a];
        }

        // Internal force and optional inertia / body force.
        let mut acc = Vec3::zeros();
        if let Some((scale, w)) = &inertia {
            for b in 0..nn {
                acc += w[b] * nvals[b];
            }
            acc *= *scale;
        }
        acc -= model.body_force;
        for a in 0..nn {
            let t = sp.tau * spatial[a] + acc * nvals[a];
            for i in 0..3 {
                re[3 * a + i] += dv * t[i];
            }
        }
        for k in 0..np {
            re[nu + k] += dv * (dp.j - d_h) * psi[k];
            re[nu + np + k] += dv * (p_vol - p_h) * psi[k];
        }

        if !with_matrix {
            continue;
        }
        let c_t = sp.c_tangent;
        for b in 0..nn {
            cb[b] = c_t * b_matrix(&spatial[b]);
        }
        let tau_g: Vec<Vec3> = spatial.iter().map(|g| sp.tau * g).collect();
        let mass = inertia.as_ref().map_or(0.0, |(s, _)| *s);
        for b in 0..nn {
            for a in 0..nn {
                let ba = b_matrix(&spatial[a]);
                let k_ab = ba.transpose() * cb[b];
                let geo = spatial[a].dot(&tau_g[b]) + mass * nvals[a] * nvals[b];
                for j in 0..3 {
                    for i in 0..3 {
                        let extra = if i == j { geo } else { 0.0 };
                        ke[idx(3 * a + i, 3 * b + j)] += dv * (k_ab[(i, j)] + extra);
                    }
                }
            }
        }
        for k in 0..np {
            for a in 0..nn {
                for i in 0..3 {
                    let v = dv * dp.j * spatial[a][i] * psi[k];
                    ke[idx(3 * a + i, nu + k)] += v;
                    ke[idx(nu + k, 3 * a + i)] += v;
                }
            }
            for l in 0..np {
                let mm = dv * psi[k] * psi[l];
                ke[idx(nu + k, nu + np + l)] -= mm;
                ke[idx(nu + np + k, nu + l)] -= mm;
                ke[idx(nu + np + k, nu + np + l)] += dp_dd * mm;
            }
        }
    }
    Ok(ElementOut {
        re,
        ke: with_matrix.then_some(ke),
    })
}

#[derive(Debug, Clone)]
pub struct Assembled {
    /// Residual over all dofs, constrained rows included.
    pub residual: DVector<f64>,
    pub matrix: Option<SparseMatrix>,
}

pub fn assemble(
    model: &Model,
    state: &SystemState,
    step: &StepData,
    with_matrix: bool,
) -> Result<Assembled> {
    if let Mode::Dynamic { dt } = step.mode {
        if !(dt > 0.0) {
            return Err(MyoError::Validation(format!(
                "time step must be positive, got {dt}"
            )));
        }
    }
    let outs: Vec<Result<ElementOut>> = (0..model.mesh.n_cells())
        .into_par_iter()
        .map(|c| element(model, c, state, step, with_matrix))
        .collect();
    let mut residual = DVector::zeros(model.dofs.n_total);
    let mut matrix = with_matrix.then(|| SparseMatrix::zeros(model.pattern.clone()));
    for (c, out) in outs.into_iter().enumerate() {
        let out = out?;
        for (i, &g) in model.cell_dofs[c].iter().enumerate() {
            residual[g] += out.re[i];
        }
        if let (Some(mat), Some(ke)) = (matrix.as_mut(), out.ke) {
            for (s, v) in model.slots[c].iter().zip(ke) {
                mat.vals[*s] += v;
            }
        }
    }
    Ok(Assembled { residual, matrix })
}

pub fn assemble_residual(
    model: &Model,
    state: &SystemState,
    step: &StepData,
) -> Result<DVector<f64>> {
    Ok(assemble(model, state, step, false)?.residual)
}

pub fn assemble_tangent(
    model: &Model,
    state: &SystemState,
    step: &StepData,
) -> Result<SparseMatrix> {
    Ok(assemble(model, state, step, true)?
        .matrix
        .expect("matrix requested"))
}
