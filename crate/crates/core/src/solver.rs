//! Problem assembly and Levenberg–Marquardt refinement of camera poses,
//! camera velocities and lines.
//!
//! Gauge: the poses of the cameras in `fixed_camera_ids` are held constant.
//! Their velocities stay free, since velocities start at zero and carry no
//! gauge freedom. Scale is removed either by keeping the norm of the second
//! camera's translation relative to the first fixed camera (the baseline
//! between their centers) at its initial value, or by freezing the distance
//! parameter `φ` of one line.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{curve_coefficients, RsCamera};
use crate::error::{Error, Result};
use crate::geometry::{OrthonormalLine, PluckerLine};
use crate::jacobians::{apply_camera_update, residual_jacobian, ResidualJacobianRow, CAMERA_DOF, LINE_DOF};
use crate::residuals::{InvalidPolicy, LineObservation, ResidualConfig, RowStatus};
use crate::synth::SceneState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveMode {
    Rs,
    GsFrozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFix {
    FixSecondTranslationNorm,
    FixLineId(usize),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeSpec {
    pub fixed_camera_ids: Vec<usize>,
    pub scale_fix: ScaleFix,
}

impl Default for GaugeSpec {
    fn default() -> Self {
        Self { fixed_camera_ids: vec![0], scale_fix: ScaleFix::FixSecondTranslationNorm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Relative cost decrease below which an accepted step counts as stalled.
    pub function_tol: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub renormalize_every: usize,
    /// Use the Schur complement over line blocks above this many lines.
    pub schur_min_lines: usize,
    /// Escapes attempted when the solver stops with invalid rows.
    pub max_escapes: usize,
    /// Re-solve from re-triangulated lines when the result is collapsed.
    pub collapse_restart: bool,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            function_tol: 1e-15,
            initial_damping: 1e-4,
            damping_increase: 10.0,
            damping_decrease: 0.3,
            renormalize_every: 10,
            schur_min_lines: 32,
            max_escapes: 8,
            collapse_restart: true,
            seed: 0,
        }
    }
}

/// Columns of one parameter block: `local = basis · x`.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    start: usize,
    basis: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaProblem {
    pub cameras: Vec<RsCamera>,
    pub lines: Vec<OrthonormalLine>,
    pub observations: Vec<LineObservation>,
    pub cfg: ResidualConfig,
    pub gauge: GaugeSpec,
    pub mode: SolveMode,
    /// Lines observed fewer than two times.
    pub under_constrained: Vec<usize>,
    scale_norm: f64,
}

pub fn build_problem(
    cameras: &[RsCamera],
    lines: &[PluckerLine],
    observations: &[LineObservation],
    cfg: ResidualConfig,
    gauge: GaugeSpec,
    mode: SolveMode,
) -> Result<BaProblem> {
    cfg.validate()?;
    for c in cameras {
        c.validate()?;
    }
    for o in observations {
        if o.camera_id >= cameras.len() {
            return Err(Error::MissingReference(format!("camera {}", o.camera_id)));
        }
        if o.line_id >= lines.len() {
            return Err(Error::MissingReference(format!("line {}", o.line_id)));
        }
        o.validate(&cameras[o.camera_id])?;
    }
    for &g in &gauge.fixed_camera_ids {
        if g >= cameras.len() {
            return Err(Error::MissingReference(format!("gauge camera {g}")));
        }
    }
    if let ScaleFix::FixLineId(k) = gauge.scale_fix {
        if k >= lines.len() {
            return Err(Error::MissingReference(format!("scale line {k}")));
        }
    }
    if gauge.fixed_camera_ids.is_empty() {
        return Err(Error::InvalidInput("at least one camera must be fixed".into()));
    }
    if !graph_connected(cameras.len(), lines.len(), observations) {
        return Err(Error::DisconnectedGraph);
    }
    let mut counts = vec![0usize; lines.len()];
    for o in observations {
        counts[o.line_id] += 1;
    }
    let under_constrained = (0..lines.len()).filter(|&i| counts[i] < 2).collect();
    let lines = lines
        .iter()
        .map(|l| l.to_orthonormal())
        .collect::<Result<Vec<_>>>()?;
    let mut cameras = cameras.to_vec();
    if mode == SolveMode::GsFrozen {
        for c in cameras.iter_mut() {
            c.omega = Vector3::zeros();
            c.d = Vector3::zeros();
        }
    }
    let scale_norm = match scale_reference(&cameras, &gauge) {
        Some(c) => relative_translation(&cameras[1], &c).norm(),
        None => 0.0,
    };
    Ok(BaProblem {
        cameras,
        lines,
        observations: observations.to_vec(),
        cfg,
        gauge,
        mode,
        under_constrained,
        scale_norm,
    })
}

/// Cameras and observed lines form one connected component.
fn graph_connected(n_cams: usize, n_lines: usize, obs: &[LineObservation]) -> bool {
    if n_cams == 0 {
        return false;
    }
    let n = n_cams + n_lines;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for o in obs {
        let a = find(&mut parent, o.camera_id);
        let b = find(&mut parent, n_cams + o.line_id);
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    let mut observed = vec![false; n_lines];
    for o in obs {
        observed[o.line_id] = true;
    }
    (0..n_cams).all(|c| find(&mut parent, c) == root)
        && (0..n_lines).all(|l| !observed[l] || find(&mut parent, n_cams + l) == root)
}

/// Center of the first fixed camera when the scale is fixed through camera
/// 1's translation and camera 1 is free.
fn scale_reference(cameras: &[RsCamera], gauge: &GaugeSpec) -> Option<Vector3<f64>> {
    if gauge.scale_fix != ScaleFix::FixSecondTranslationNorm || cameras.len() < 2 {
        return None;
    }
    if gauge.fixed_camera_ids.contains(&1) {
        return None;
    }
    gauge.fixed_camera_ids.first().map(|&g| cameras[g].center())
}

/// Translation of `cam` relative to a reference center, `t + R·c`, in
/// `cam`'s frame. Its norm is the baseline `‖C − c‖`.
fn relative_translation(cam: &RsCamera, c: &Vector3<f64>) -> Vector3<f64> {
    cam.t0 + cam.r0 * c
}

/// Orthonormal basis of the plane orthogonal to `t`.
fn tangent_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = t.normalize();
    let mut e = Vector3::zeros();
    e[u.iamin()] = 1.0;
    let b1 = u.cross(&e).normalize();
    let b2 = u.cross(&b1);
    (b1, b2)
}

#[derive(Debug, Clone)]
struct Layout {
    cams: Vec<Option<Block>>,
    lines: Vec<Option<Block>>,
    n_cam_cols: usize,
    n_cols: usize,
}

impl BaProblem {
    pub fn state(&self) -> SceneState {
        SceneState { cameras: self.cameras.clone(), lines: self.lines.iter().map(|l| l.to_plucker()).collect() }
    }

    /// Replace the parameters while keeping observations and settings.
    pub fn with_state(&self, state: &SceneState) -> Result<BaProblem> {
        build_problem(&state.cameras, &state.lines, &self.observations, self.cfg, self.gauge.clone(), self.mode)
    }

    fn layout(&self) -> Layout {
        let vel_free = self.mode == SolveMode::Rs;
        let mut col = 0;
        let mut cams = Vec::with_capacity(self.cameras.len());
        for (i, cam) in self.cameras.iter().enumerate() {
            let pose_fixed = self.gauge.fixed_camera_ids.contains(&i);
            let mut cols: Vec<DVector<f64>> = Vec::new();
            let unit = |k: usize| {
                let mut v = DVector::zeros(CAMERA_DOF);
                v[k] = 1.0;
                v
            };
            let scale_ref = if i == 1 && self.scale_norm > 0.0 { scale_reference(&self.cameras, &self.gauge) } else { None };
            if let (false, Some(c)) = (pose_fixed, scale_ref) {
                // Rotation columns move the translation so that the relative
                // translation stays put to first order.
                let p = cam.r0 * c;
                for k in 0..3 {
                    let mut v = unit(k);
                    let e = Vector3::from_fn(|r, _| if r == k { 1.0 } else { 0.0 });
                    v.rows_mut(3, 3).copy_from(&p.cross(&e));
                    cols.push(v);
                }
                let (b1, b2) = tangent_basis(&relative_translation(cam, &c));
                for b in [b1, b2] {
                    let mut v = DVector::zeros(CAMERA_DOF);
                    v.rows_mut(3, 3).copy_from(&b);
                    cols.push(v);
                }
            } else if !pose_fixed {
                for k in 0..6 {
                    cols.push(unit(k));
                }
            }
            if vel_free {
                for k in 6..12 {
                    cols.push(unit(k));
                }
            }
            if cols.is_empty() {
                cams.push(None);
            } else {
                let basis = DMatrix::from_columns(&cols);
                let start = col;
                col += basis.ncols();
                cams.push(Some(Block { start, basis }));
            }
        }
        let n_cam_cols = col;
        let mut observed = vec![false; self.lines.len()];
        for o in &self.observations {
            observed[o.line_id] = true;
        }
        let mut lines = Vec::with_capacity(self.lines.len());
        for (i, _) in self.lines.iter().enumerate() {
            if !observed[i] {
                lines.push(None);
                continue;
            }
            let keep: Vec<usize> = match self.gauge.scale_fix {
                ScaleFix::FixLineId(k) if k == i => vec![0, 1, 2],
                _ => vec![0, 1, 2, 3],
            };
            let mut basis = DMatrix::zeros(LINE_DOF, keep.len());
            for (c, &k) in keep.iter().enumerate() {
                basis[(k, c)] = 1.0;
            }
            let start = col;
            col += keep.len();
            lines.push(Some(Block { start, basis }));
        }
        Layout { cams, lines, n_cam_cols, n_cols: col }
    }

    /// Number of free parameters.
    pub fn num_parameters(&self) -> usize {
        self.layout().n_cols
    }

    /// Residual rows of every observation with optimization semantics:
    /// invalid rows carry the penalty value and a zero Jacobian.
    fn evaluate(&self) -> Vec<Vec<ResidualJacobianRow>> {
        let cfg = ResidualConfig { invalid_policy: InvalidPolicy::Penalty, ..self.cfg };
        self.observations
            .par_iter()
            .map(|o| residual_jacobian(&self.cameras[o.camera_id], &self.lines[o.line_id], o, &cfg))
            .collect()
    }

    /// Residual values and statuses in observation order.
    pub fn residuals(&self, policy: InvalidPolicy) -> (Vec<f64>, Vec<RowStatus>) {
        let cfg = ResidualConfig { invalid_policy: policy, ..self.cfg };
        let blocks: Vec<_> = self
            .observations
            .par_iter()
            .map(|o| {
                crate::residuals::residual_block(&self.cameras[o.camera_id], &self.lines[o.line_id].to_plucker(), o, &cfg)
            })
            .collect();
        let mut values = Vec::new();
        let mut status = Vec::new();
        for b in blocks {
            values.extend(b.values);
            status.extend(b.status);
        }
        (values, status)
    }

    /// Cost with invalid rows masked out.
    pub fn masked_cost(&self) -> f64 {
        self.residuals(InvalidPolicy::Mask).0.iter().map(|r| r * r).sum()
    }

    /// Cost with invalid rows at the penalty value; the quantity minimized.
    pub fn penalized_cost(&self) -> f64 {
        self.residuals(InvalidPolicy::Penalty).0.iter().map(|r| r * r).sum()
    }

    /// Dense Jacobian over the free parameters (rows in observation order).
    pub fn jacobian(&self) -> (DMatrix<f64>, DVector<f64>, Vec<bool>) {
        let layout = self.layout();
        let rows = self.evaluate();
        let n_rows: usize = rows.iter().map(|r| r.len()).sum();
        let mut j = DMatrix::zeros(n_rows, layout.n_cols);
        let mut r = DVector::zeros(n_rows);
        let mut valid = Vec::with_capacity(n_rows);
        let mut k = 0;
        for (o, block) in self.observations.iter().zip(&rows) {
            for row in block {
                r[k] = row.value;
                valid.push(row.valid);
                if row.valid {
                    let full = row.full();
                    if let Some(b) = &layout.cams[o.camera_id] {
                        let local = full.columns(0, CAMERA_DOF) * &b.basis;
                        j.view_mut((k, b.start), (1, b.basis.ncols())).copy_from(&local);
                    }
                    if let Some(b) = &layout.lines[o.line_id] {
                        let local = full.columns(CAMERA_DOF, LINE_DOF) * &b.basis;
                        j.view_mut((k, b.start), (1, b.basis.ncols())).copy_from(&local);
                    }
                }
                k += 1;
            }
        }
        (j, r, valid)
    }

    /// `JᵀJ`, `Jᵀr` and the total (penalized) cost.
    fn normal_equations(&self, layout: &Layout) -> (DMatrix<f64>, DVector<f64>, f64) {
        let rows = self.evaluate();
        let n = layout.n_cols;
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let mut cost = 0.0;
        for (o, block) in self.observations.iter().zip(&rows) {
            let cb = layout.cams[o.camera_id].as_ref();
            let lb = layout.lines[o.line_id].as_ref();
            let kc = cb.map_or(0, |b| b.basis.ncols());
            let kl = lb.map_or(0, |b| b.basis.ncols());
            let mut jl = DMatrix::zeros(block.len(), kc + kl);
            let mut rl = DVector::zeros(block.len());
            for (i, row) in block.iter().enumerate() {
                cost += row.value * row.value;
                if !row.valid {
                    continue;
                }
                rl[i] = row.value;
                let full = row.full();
                if let Some(b) = cb {
                    jl.view_mut((i, 0), (1, kc)).copy_from(&(full.columns(0, CAMERA_DOF) * &b.basis));
                }
                if let Some(b) = lb {
                    jl.view_mut((i, kc), (1, kl)).copy_from(&(full.columns(CAMERA_DOF, LINE_DOF) * &b.basis));
                }
            }
            let hl = jl.transpose() * &jl;
            let gl = jl.transpose() * &rl;
            let idx: Vec<usize> = cb
                .map(|b| (b.start..b.start + kc).collect::<Vec<_>>())
                .unwrap_or_default()
                .into_iter()
                .chain(lb.map(|b| (b.start..b.start + kl).collect::<Vec<_>>()).unwrap_or_default())
                .collect();
            for (a, &ia) in idx.iter().enumerate() {
                g[ia] += gl[a];
                for (b, &ib) in idx.iter().enumerate() {
                    h[(ia, ib)] += hl[(a, b)];
                }
            }
        }
        (h, g, cost)
    }

    /// Apply a global step to a copy of the parameters.
    fn retract(&self, layout: &Layout, dx: &DVector<f64>) -> BaProblem {
        let mut out = self.clone();
        for (i, b) in layout.cams.iter().enumerate() {
            if let Some(b) = b {
                let local = &b.basis * dx.rows(b.start, b.basis.ncols());
                let mut cam = apply_camera_update(&self.cameras[i], local.as_slice());
                if i == 1 && self.scale_norm > 0.0 {
                    if let Some(c) = scale_reference(&self.cameras, &self.gauge) {
                        let q = relative_translation(&cam, &c);
                        cam.t0 = q * (self.scale_norm / q.norm()) - cam.r0 * c;
                    }
                }
                out.cameras[i] = cam;
            }
        }
        for (i, b) in layout.lines.iter().enumerate() {
            if let Some(b) = b {
                let local = &b.basis * dx.rows(b.start, b.basis.ncols());
                out.lines[i] = self.lines[i].updated(&nalgebra::Vector4::from_column_slice(local.as_slice()));
            }
        }
        out
    }

    fn renormalize(&mut self) {
        for c in self.cameras.iter_mut() {
            c.r0 = Rotation3::from_matrix_eps(c.r0.matrix(), 1e-15, 100, c.r0);
        }
        for l in self.lines.iter_mut() {
            *l = l.renormalized();
        }
    }

    fn translation_scale(&self) -> f64 {
        self.cameras.iter().map(|c| c.t0.norm_squared()).sum::<f64>().sqrt()
    }

    fn solve_damped(&self, layout: &Layout, h: &DMatrix<f64>, g: &DVector<f64>, mu: f64, schur: bool) -> Option<DVector<f64>> {
        let n = h.nrows();
        let max_diag = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut a = h.clone();
        for i in 0..n {
            let d = h[(i, i)].max(1e-12 * max_diag);
            a[(i, i)] += mu * d;
        }
        let rhs = -g;
        if schur {
            schur_solve(&a, &rhs, layout)
        } else {
            a.cholesky().map(|c| c.solve(&rhs))
        }
    }
}

/// Solve `A x = b` by eliminating the block-diagonal line part.
fn schur_solve(a: &DMatrix<f64>, b: &DVector<f64>, layout: &Layout) -> Option<DVector<f64>> {
    let nc = layout.n_cam_cols;
    let n = layout.n_cols;
    let nl = n - nc;
    let acc = a.view((0, 0), (nc, nc));
    let acl = a.view((0, nc), (nc, nl));
    let mut inv_all = DMatrix::zeros(nl, nl);
    for blk in layout.lines.iter().flatten() {
        let s = blk.start - nc;
        let k = blk.basis.ncols();
        let sub = a.view((blk.start, blk.start), (k, k)).into_owned();
        let inv = sub.cholesky()?.inverse();
        inv_all.view_mut((s, s), (k, k)).copy_from(&inv);
    }
    let bc = b.rows(0, nc);
    let bl = b.rows(nc, nl);
    let w = acl * &inv_all;
    let s = acc - &w * acl.transpose();
    let rhs = bc - &w * bl;
    let xc = s.cholesky()?.solve(&rhs);
    let xl = &inv_all * (bl - acl.transpose() * &xc);
    let mut x = DVector::zeros(n);
    x.rows_mut(0, nc).copy_from(&xc);
    x.rows_mut(nc, nl).copy_from(&xl);
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTol,
    StepTol,
    MaxIter,
    Stall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Cost at the start and after every accepted step.
    pub cost_trace: Vec<f64>,
    /// Damping value used at every iteration.
    pub damping_trace: Vec<f64>,
    pub termination: Termination,
    pub final_state: SceneState,
    pub final_cost: f64,
    /// Invalid rows at the final state.
    pub final_invalid_rows: usize,
    /// Escapes taken from states with invalid rows.
    pub escapes: usize,
    /// Collapse-triggered restarts whose result was kept.
    pub restarts: usize,
    pub used_schur: bool,
}

/// Flatness below which a reconstructed structure counts as collapsed.
pub const COLLAPSE_FLATNESS: f64 = 0.01;

/// Levenberg–Marquardt refinement. When the converged structure is
/// collapsed (flatness of the observed lines below [`COLLAPSE_FLATNESS`])
/// and `opts.collapse_restart` is set, the solve is repeated from zero
/// velocities and re-triangulated lines, and the run with the lower final
/// cost is returned.
pub fn levenberg_marquardt(p: &BaProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let first = lm_run(p, opts)?;
    if !opts.collapse_restart || p.mode != SolveMode::Rs || observed_flatness(p, &first.final_state) >= COLLAPSE_FLATNESS {
        return Ok(first);
    }
    let Some(start) = retriangulated(p) else {
        return Ok(first);
    };
    let mut second = lm_run(&start, &SolveOptions { collapse_restart: false, ..*opts })?;
    if second.final_cost < first.final_cost {
        second.iterations += first.iterations;
        second.escapes += first.escapes;
        second.restarts = 1;
        Ok(second)
    } else {
        Ok(first)
    }
}

fn observed_flatness(p: &BaProblem, state: &SceneState) -> f64 {
    let mut observed = vec![false; state.lines.len()];
    for o in &p.observations {
        observed[o.line_id] = true;
    }
    let lines: Vec<PluckerLine> = state.lines.iter().zip(&observed).filter(|(_, o)| **o).map(|(l, _)| *l).collect();
    structure_scores(&lines).1
}

fn lm_run(p: &BaProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let mut cur = p.clone();
    let layout0 = cur.layout();
    let n_lines = layout0.lines.iter().filter(|b| b.is_some()).count();
    let used_schur = n_lines > opts.schur_min_lines && layout0.n_cam_cols > 0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mu = opts.initial_damping;
    let (mut h, mut g, mut cost) = cur.normal_equations(&cur.layout());
    if !cost.is_finite() {
        return Err(Error::NumericalFailure("non-finite initial cost".into()));
    }
    let mut report = SolveReport {
        iterations: 0,
        cost_trace: vec![cost],
        damping_trace: Vec::new(),
        termination: Termination::MaxIter,
        final_state: cur.state(),
        final_cost: cost,
        final_invalid_rows: 0,
        escapes: 0,
        restarts: 0,
        used_schur,
    };
    let mut stalled = 0;
    let mut iter = 0;
    loop {
        let layout = cur.layout();
        let invalid = count_invalid(&cur);
        let grad_small = scaled_gradient_norm(&h, &g) < opts.gradient_tol;
        if grad_small || stalled > 0 {
            if invalid > 0 && report.escapes < opts.max_escapes {
                if let Some((next, next_cost)) = escape(&cur, &layout, cost, &mut rng) {
                    report.escapes += 1;
                    cur = next;
                    cost = next_cost;
                    let ne = cur.normal_equations(&cur.layout());
                    h = ne.0;
                    g = ne.1;
                    report.cost_trace.push(cost);
                    stalled = 0;
                    mu = opts.initial_damping;
                    continue;
                }
            }
            if grad_small {
                report.termination = Termination::GradientTol;
                break;
            }
            report.termination = if stalled == 1 { Termination::StepTol } else { Termination::Stall };
            break;
        }
        if iter >= opts.max_iter {
            report.termination = Termination::MaxIter;
            break;
        }
        iter += 1;
        report.damping_trace.push(mu);
        let Some(dx) = cur.solve_damped(&layout, &h, &g, mu, used_schur) else {
            mu *= opts.damping_increase;
            if mu > 1e16 {
                stalled = 2;
            }
            continue;
        };
        if !dx.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericalFailure("non-finite step".into()));
        }
        let cand = cur.retract(&layout, &dx);
        let (ch, cg, ccost) = cand.normal_equations(&layout);
        if ccost.is_finite() && ccost < cost {
            let rel_decrease = (cost - ccost) / cost.max(1e-300);
            let small_step = dx.norm() < opts.step_tol * (1.0 + cur.translation_scale());
            cur = cand;
            h = ch;
            g = cg;
            cost = ccost;
            report.cost_trace.push(cost);
            mu = (mu * opts.damping_decrease).max(1e-15);
            if opts.renormalize_every > 0 && iter % opts.renormalize_every == 0 {
                cur.renormalize();
            }
            if small_step {
                stalled = 1;
            } else if rel_decrease < opts.function_tol {
                stalled = 2;
            }
        } else {
            if !ccost.is_finite() && mu > 1e16 {
                return Err(Error::NumericalFailure("non-finite cost".into()));
            }
            mu *= opts.damping_increase;
            if mu > 1e16 {
                stalled = 2;
            }
        }
    }
    report.iterations = iter;
    report.final_cost = cost;
    report.final_invalid_rows = count_invalid(&cur);
    report.final_state = cur.state();
    Ok(report)
}

/// `max_i |g_i| / ‖J_i‖`: the gradient in column-normalized parameters,
/// so velocity columns (pixels per rad/row) and pose columns compare.
fn scaled_gradient_norm(h: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    (0..g.len())
        .map(|i| {
            let n = h[(i, i)].sqrt();
            if n > 0.0 { g[i].abs() / n } else { 0.0 }
        })
        .fold(0.0, f64::max)
}

fn count_invalid(p: &BaProblem) -> usize {
    p.residuals(InvalidPolicy::Mask).1.iter().filter(|s| **s == RowStatus::Invalid).count()
}

/// Escape from a state with invalid rows. The first candidate resets all
/// velocities to zero (the standard initialization) and re-triangulates the
/// lines with every pose held fixed; later candidates perturb the current
/// state with seeded random steps of growing magnitude. The first candidate
/// that strictly decreases the penalized cost is taken.
fn escape(p: &BaProblem, layout: &Layout, cost: f64, rng: &mut ChaCha8Rng) -> Option<(BaProblem, f64)> {
    if p.mode == SolveMode::Rs {
        if let Some(cand) = retriangulated(p) {
            let c = cand.penalized_cost();
            if c.is_finite() && c < cost {
                return Some((cand, c));
            }
        }
    }
    for scale in [1e-4, 1e-3, 1e-2, 1e-1] {
        let dx = random_step(p, layout, scale, rng);
        let cand = p.retract(layout, &dx);
        let c = cand.penalized_cost();
        if c.is_finite() && c < cost {
            return Some((cand, c));
        }
    }
    None
}

/// Zero velocities and linearly re-triangulated lines.
fn retriangulated(p: &BaProblem) -> Option<BaProblem> {
    let mut q = p.clone();
    for c in q.cameras.iter_mut() {
        c.omega = Vector3::zeros();
        c.d = Vector3::zeros();
    }
    let lines = triangulate_lines(&q.cameras, &q.observations, q.lines.len());
    for (l, t) in q.lines.iter_mut().zip(lines) {
        if let Some(t) = t {
            *l = t.to_orthonormal().ok()?;
        }
    }
    Some(q)
}

/// Total-least-squares image line through the samples of one observation.
fn fit_image_line(obs: &LineObservation) -> Option<Vector3<f64>> {
    if obs.samples.len() < 2 {
        return None;
    }
    let n = obs.samples.len() as f64;
    let (mu, mv) = obs.samples.iter().fold((0.0, 0.0), |(a, b), s| (a + s.u / n, b + s.v / n));
    let mut cov = nalgebra::Matrix2::zeros();
    for s in &obs.samples {
        let d = nalgebra::Vector2::new(s.u - mu, s.v - mv);
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    Some(Vector3::new(normal.x, normal.y, -(normal.x * mu + normal.y * mv)))
}

/// Linear line triangulation with the row-0 poses (rolling shutter
/// ignored): every observation back-projects its fitted image line to a
/// plane, and the line spans the two-dimensional null space of the stacked
/// planes. `None` for lines with fewer than two observations.
pub fn triangulate_lines(cameras: &[RsCamera], observations: &[LineObservation], n_lines: usize) -> Vec<Option<PluckerLine>> {
    let mut planes: Vec<Vec<nalgebra::Vector4<f64>>> = vec![Vec::new(); n_lines];
    for o in observations {
        let Some(l) = fit_image_line(o) else { continue };
        let cam = &cameras[o.camera_id];
        let (p0, _) = cam.projection_matrices();
        let pi: nalgebra::Vector4<f64> = p0.transpose() * l;
        let scale = pi.fixed_rows::<3>(0).norm();
        if scale > 0.0 && o.line_id < n_lines {
            planes[o.line_id].push(pi / scale);
        }
    }
    planes
        .into_iter()
        .map(|ps| {
            if ps.len() < 2 {
                return None;
            }
            let mut a = DMatrix::zeros(ps.len().max(4), 4);
            for (i, pi) in ps.iter().enumerate() {
                a.set_row(i, &pi.transpose());
            }
            let svd = a.svd(false, true);
            let vt = svd.v_t?;
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
            let x1 = vt.row(order[0]).transpose();
            let x2 = vt.row(order[1]).transpose();
            let (xa, wa) = (Vector3::new(x1[0], x1[1], x1[2]), x1[3]);
            let (xb, wb) = (Vector3::new(x2[0], x2[1], x2[2]), x2[3]);
            let line = PluckerLine::new(-xa.cross(&xb), xa * wb - xb * wa);
            if line.a.norm() < 1e-12 {
                return None;
            }
            Some(line.scaled(1.0 / line.a.norm()))
        })
        .collect()
}

/// Seeded random step over the free parameters with per-kind magnitudes:
/// `scale` radians for rotations and lines, `scale·‖t‖` for translations,
/// and the same divided by the image height for velocities.
fn random_step(p: &BaProblem, layout: &Layout, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut dx = DVector::zeros(layout.n_cols);
    for (i, b) in layout.cams.iter().enumerate() {
        if let Some(b) = b {
            let t = p.cameras[i].t0.norm().max(1.0);
            let h = p.cameras[i].height as f64;
            for c in 0..b.basis.ncols() {
                let k = (0..CAMERA_DOF).find(|&k| b.basis[(k, c)] != 0.0).unwrap_or(0);
                let mag = match k {
                    0..=2 => scale,
                    3..=5 => scale * t,
                    6..=8 => scale / h,
                    _ => scale * t / h,
                };
                dx[b.start + c] = mag * rng.random_range(-1.0..1.0);
            }
        }
    }
    for b in layout.lines.iter().flatten() {
        for c in 0..b.basis.ncols() {
            dx[b.start + c] = scale * rng.random_range(-1.0..1.0);
        }
    }
    dx
}

/// The same pipeline with velocities frozen at zero.
pub fn solve_gs_baseline(p: &BaProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let mut q = p.clone();
    q.mode = SolveMode::GsFrozen;
    for c in q.cameras.iter_mut() {
        c.omega = Vector3::zeros();
        c.d = Vector3::zeros();
    }
    levenberg_marquardt(&q, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    /// Fraction of samples whose curve gradient vanishes.
    pub indeterminate_fraction: f64,
    /// Smallest eigenvalues (ascending, up to 6) of the column-normalized
    /// Gauss–Newton matrix over the free parameters.
    pub smallest_eigenvalues: Vec<f64>,
    pub largest_eigenvalue: f64,
    /// Structure scores over the lines that have observations.
    pub coplanarity_score: f64,
    pub flatness_score: f64,
}

/// Point minimizing the summed squared distance to all lines.
pub fn lines_reference_point(lines: &[PluckerLine]) -> Vector3<f64> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for l in lines {
        let d = l.direction();
        let p = l.closest_point_to_origin();
        let m = Matrix3::identity() - d * d.transpose();
        a += m;
        b += m * p;
    }
    a.try_inverse().map(|inv| inv * b).unwrap_or_else(|| {
        lines.iter().map(|l| l.closest_point_to_origin()).sum::<Vector3<f64>>() / lines.len().max(1) as f64
    })
}

fn spread_ratio(points: &[Vector3<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        cov += (p - mean) * (p - mean).transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let max = ev.max();
    if !(max > 0.0) {
        return 0.0;
    }
    (ev.min().max(0.0) / max).sqrt()
}

/// `(coplanarity, flatness)` of a line set. Flatness is the ratio of the
/// smallest to the largest principal extent of the line anchor points (the
/// point of each line closest to the set's reference point). Coplanarity is
/// the same ratio for the points `anchor ± s·direction`, with `s` the RMS
/// anchor distance from the reference; it is 0 when all lines share a plane.
pub fn structure_scores(lines: &[PluckerLine]) -> (f64, f64) {
    if lines.is_empty() {
        return (0.0, 0.0);
    }
    let r = lines_reference_point(lines);
    let anchors: Vec<Vector3<f64>> = lines
        .iter()
        .map(|l| {
            let d = l.direction();
            let p = l.closest_point_to_origin();
            p + d * d.dot(&(r - p))
        })
        .collect();
    let s = (anchors.iter().map(|a| (a - r).norm_squared()).sum::<f64>() / anchors.len() as f64)
        .sqrt()
        .max(1e-12);
    let mut pts = Vec::with_capacity(2 * lines.len());
    for (a, l) in anchors.iter().zip(lines) {
        pts.push(a + l.direction() * s);
        pts.push(a - l.direction() * s);
    }
    (spread_ratio(&pts), spread_ratio(&anchors))
}

pub fn degeneracy_probe(p: &BaProblem, solution: &SceneState) -> Result<DegeneracyReport> {
    let q = p.with_state(solution)?;
    let mut total = 0usize;
    let mut indeterminate = 0usize;
    for o in &q.observations {
        let line = q.lines[o.line_id].to_plucker();
        let c = curve_coefficients(&q.cameras[o.camera_id], &line);
        for s in &o.samples {
            total += 1;
            match &c {
                Ok(c) => {
                    let g = c.gradient(s.u, s.v);
                    let scale = c.max_abs() * (1.0 + s.u.abs() + s.v.abs()).powi(2);
                    if g.norm() <= 1e-10 * scale {
                        indeterminate += 1;
                    }
                }
                Err(_) => indeterminate += 1,
            }
        }
    }
    let (j, _, _) = q.jacobian();
    let mut jn = j.clone();
    for mut col in jn.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let h = jn.transpose() * jn;
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let largest = ev.last().cloned().unwrap_or(0.0);
    let mut observed = vec![false; solution.lines.len()];
    for o in &q.observations {
        observed[o.line_id] = true;
    }
    let reconstructed: Vec<PluckerLine> =
        solution.lines.iter().zip(&observed).filter(|(_, o)| **o).map(|(l, _)| *l).collect();
    let (cop, flat) = structure_scores(&reconstructed);
    debug_assert_eq!(flat, observed_flatness(&q, solution));
    Ok(DegeneracyReport {
        indeterminate_fraction: if total > 0 { indeterminate as f64 / total as f64 } else { 0.0 },
        smallest_eigenvalues: ev.iter().take(6).cloned().collect(),
        largest_eigenvalue: largest,
        coplanarity_score: cop,
        flatness_score: flat,
    })
}
