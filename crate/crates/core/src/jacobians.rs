//! Analytic derivatives of the residual rows with respect to camera pose,
//! camera velocities and orthonormal line parameters, plus a central
//! finite-difference oracle.
//!
//! Parameter conventions (the finite-difference oracle reproduces them):
//! rotation is perturbed on the left, `R₀ ← Exp(δθ)R₀`; `t₀`, `ω`, `d` are
//! additive; lines use `U ← U·Exp(δψ)`, `W ← W·Rot(δφ)`.
//!
//! The residual chain goes through the row-0 camera-frame line
//! `L_c = (R₀n + t₀×R₀a, R₀a)` and the camera-frame velocity `d' = d − ω×t₀`,
//! where the curve coefficients have the closed form of
//! [`CurveCoeffs::from_camera_line`]. This chain is exact, including the
//! second-order `ωωᵀ` term of the cubic coefficients.

use nalgebra::{DMatrix, DVector, Matrix3, RowSVector, SMatrix, Vector2, Vector3, Vector4};

use crate::camera::{cofactor, curve_coefficients, CurveCoeffs, CurveSample, RsCamera};
use crate::geometry::{skew, OrthonormalLine, PluckerLine};
use crate::residuals::{
    robustify, row_value, InvalidPolicy, LineObservation, ResidualConfig, RowKind, TangentMode, INVALID_PENALTY,
};

pub type Matrix9x6 = SMatrix<f64, 9, 6>;
pub type Matrix9x3 = SMatrix<f64, 9, 3>;
pub type Matrix6x12 = SMatrix<f64, 6, 12>;
pub type Matrix6x4 = SMatrix<f64, 6, 4>;
pub type Matrix9x16 = SMatrix<f64, 9, 16>;
pub type Row9 = RowSVector<f64, 9>;

/// Number of per-camera parameters `[δθ, δt, δω, δd]`.
pub const CAMERA_DOF: usize = 12;
/// Number of per-line parameters `[δψ, δφ]`.
pub const LINE_DOF: usize = 4;

/// Coefficient indices of the virtual-line components for polynomial order
/// 0, 1, 2 in `v`, each ordered `(l1, l2, l3)`.
const ORDER_INDEX: [[usize; 3]; 3] = [[7, 5, 8], [4, 2, 6], [1, 0, 3]];

fn place_order_block<const C: usize>(out: &mut SMatrix<f64, 9, C>, order: usize, block: &SMatrix<f64, 3, C>) {
    for (r, &idx) in ORDER_INDEX[order].iter().enumerate() {
        out.set_row(idx, &block.row(r));
    }
}

/// `∂c/∂(n_c, a_c)` for the row-0 camera-frame line. The map is linear in the
/// line, so the result depends only on `K`, `ω` and `d'`.
pub fn d_curvecoeffs_d_linecam(cam: &RsCamera) -> Matrix9x6 {
    let cof = cofactor(&cam.k);
    let w = cam.omega;
    let dc = cam.camera_frame_velocity();
    let mut out = Matrix9x6::zeros();
    let mut b0 = SMatrix::<f64, 3, 6>::zeros();
    b0.fixed_view_mut::<3, 3>(0, 0).copy_from(&cof);
    let mut b1 = SMatrix::<f64, 3, 6>::zeros();
    b1.fixed_view_mut::<3, 3>(0, 0).copy_from(&(cof * skew(&w)));
    b1.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cof * skew(&dc)));
    let mut b2 = SMatrix::<f64, 3, 6>::zeros();
    b2.fixed_view_mut::<3, 3>(0, 0).copy_from(&(cof * w * w.transpose()));
    b2.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cof * skew(&dc) * skew(&w)));
    place_order_block(&mut out, 0, &b0);
    place_order_block(&mut out, 1, &b1);
    place_order_block(&mut out, 2, &b2);
    out
}

/// `(∂c/∂ω, ∂c/∂d')` with the camera-frame line held fixed.
pub fn d_curvecoeffs_d_motion(cam: &RsCamera, lc: &PluckerLine) -> (Matrix9x3, Matrix9x3) {
    let cof = cofactor(&cam.k);
    let w = cam.omega;
    let dc = cam.camera_frame_velocity();
    let (n, a) = (lc.n, lc.a);
    let mut dw = Matrix9x3::zeros();
    let mut dd = Matrix9x3::zeros();
    place_order_block(&mut dw, 1, &(-cof * skew(&n)));
    place_order_block(
        &mut dw,
        2,
        &(cof * (Matrix3::identity() * w.dot(&n) + w * n.transpose() - skew(&dc) * skew(&a))),
    );
    place_order_block(&mut dd, 1, &(-cof * skew(&a)));
    place_order_block(&mut dd, 2, &(-cof * skew(&w.cross(&a))));
    (dw, dd)
}

/// Row-0 world-to-camera line map `N₀ = [[R₀, [t₀]×R₀], [0, R₀]]`.
pub fn line_to_camera_matrix(cam: &RsCamera) -> SMatrix<f64, 6, 6> {
    let r = cam.r0.matrix();
    let mut n = SMatrix::<f64, 6, 6>::zeros();
    n.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    n.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&cam.t0) * r));
    n.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    n
}

/// `∂L_c(v)/∂[δθ, t, ω, d]` for the line transformed with the pose of row `v`,
/// `M = (I + v[ω]×)(I + [δθ]×)R₀`, `t(v) = t₀ + v·d`.
pub fn d_linecam_d_pose(cam: &RsCamera, lw: &PluckerLine, v: f64) -> Matrix6x12 {
    let r = cam.r0.matrix();
    let (m, tv) = cam.instantaneous_pose(v);
    let b = Matrix3::identity() + skew(&cam.omega) * v;
    let rn = r * lw.n;
    let ra = r * lw.a;
    let ma = m * lw.a;
    let mut out = Matrix6x12::zeros();
    // rotation
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-b * skew(&rn) - skew(&tv) * b * skew(&ra)));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-b * skew(&ra)));
    // translation
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&ma)));
    // angular velocity
    out.fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&(-skew(&rn) * v - skew(&tv) * skew(&ra) * v));
    out.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-skew(&ra) * v));
    // linear velocity
    out.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-skew(&ma) * v));
    out
}

/// `∂L_w/∂[δψ, δφ]` for the right-multiplicative orthonormal update.
pub fn d_linew_d_tau(tau: &OrthonormalLine) -> Matrix6x4 {
    let u = tau.u.matrix();
    let (u1, u2, u3) = (u.column(0), u.column(1), u.column(2));
    let (w1, w2) = (tau.w1(), tau.w2());
    let mut out = Matrix6x4::zeros();
    out.fixed_view_mut::<3, 1>(0, 1).copy_from(&(-u3 * w1));
    out.fixed_view_mut::<3, 1>(0, 2).copy_from(&(u2 * w1));
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-u1 * w2));
    out.fixed_view_mut::<3, 1>(3, 0).copy_from(&(u3 * w2));
    out.fixed_view_mut::<3, 1>(3, 2).copy_from(&(-u1 * w2));
    out.fixed_view_mut::<3, 1>(3, 3).copy_from(&(u2 * w1));
    out
}

/// `∂c/∂[δθ, δt, δω, δd, δψ, δφ]` for one (camera, line) pair.
pub fn d_curvecoeffs_d_params(cam: &RsCamera, tau: &OrthonormalLine) -> Matrix9x16 {
    let lw = tau.to_plucker();
    let r = cam.r0.matrix();
    let lc = lw.transformed(r, &cam.t0);
    let dc_dl = d_curvecoeffs_d_linecam(cam);
    let (dc_dw, dc_dd) = d_curvecoeffs_d_motion(cam, &lc);
    let ra = r * lw.a;
    let rn = r * lw.n;

    let mut dl_dtheta = SMatrix::<f64, 6, 3>::zeros();
    dl_dtheta
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-skew(&rn) - skew(&cam.t0) * skew(&ra)));
    dl_dtheta.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-skew(&ra)));
    let mut dl_dt = SMatrix::<f64, 6, 3>::zeros();
    dl_dt.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&ra)));

    let mut out = Matrix9x16::zeros();
    out.fixed_view_mut::<9, 3>(0, 0).copy_from(&(dc_dl * dl_dtheta));
    out.fixed_view_mut::<9, 3>(0, 3)
        .copy_from(&(dc_dl * dl_dt - dc_dd * skew(&cam.omega)));
    out.fixed_view_mut::<9, 3>(0, 6)
        .copy_from(&(dc_dw + dc_dd * skew(&cam.t0)));
    out.fixed_view_mut::<9, 3>(0, 9).copy_from(&dc_dd);
    out.fixed_view_mut::<9, 4>(0, 12)
        .copy_from(&(dc_dl * line_to_camera_matrix(cam) * d_linew_d_tau(tau)));
    out
}

fn d_normal_d_coeffs(v: f64) -> (Row9, Row9) {
    let v2 = v * v;
    let mut dl1 = Row9::zeros();
    dl1[7] = 1.0;
    dl1[4] = v;
    dl1[1] = v2;
    let mut dl2 = Row9::zeros();
    dl2[5] = 1.0;
    dl2[2] = v;
    dl2[0] = v2;
    (dl1, dl2)
}

fn d_value_d_coeffs(u: f64, v: f64) -> Row9 {
    let v2 = v * v;
    Row9::from_row_slice(&[v2 * v, u * v2, v2, v2, u * v, v, v, u, 1.0])
}

fn d_gradient_d_coeffs(u: f64, v: f64) -> SMatrix<f64, 2, 9> {
    let v2 = v * v;
    let mut g = SMatrix::<f64, 2, 9>::zeros();
    g[(0, 1)] = v2;
    g[(0, 4)] = v;
    g[(0, 7)] = 1.0;
    g[(1, 0)] = 3.0 * v2;
    g[(1, 1)] = 2.0 * u * v;
    g[(1, 2)] = 2.0 * v;
    g[(1, 3)] = 2.0 * v;
    g[(1, 4)] = u;
    g[(1, 5)] = 1.0;
    g[(1, 6)] = 1.0;
    g
}

/// `∂e/∂c` of one unweighted row. The caller must have checked validity;
/// the sign orientation is read off the current value's configuration.
pub fn d_residual_d_coeffs(kind: RowKind, mode: TangentMode, c: &CurveCoeffs, smp: &CurveSample) -> Row9 {
    let (u, v) = (smp.u, smp.v);
    let iota = c.value(u, v);
    let db = d_value_d_coeffs(u, v);
    match kind {
        RowKind::Perpendicular => {
            let l = c.virtual_line(v);
            let rho = l.x.hypot(l.y);
            let sign = orientation_sign(&l.xy(), smp);
            let (dl1, dl2) = d_normal_d_coeffs(v);
            (db / rho - (dl1 * l.x + dl2 * l.y) * (iota / rho.powi(3))) * sign
        }
        RowKind::Horizontal => {
            let l1 = c.virtual_line(v).x;
            let (dl1, _) = d_normal_d_coeffs(v);
            db / l1 - dl1 * (iota / (l1 * l1))
        }
        RowKind::Tangent => {
            let g = c.gradient(u, v);
            let norm = g.norm();
            let gh = g / norm;
            let proj = (nalgebra::Matrix2::identity() - gh * gh.transpose()) / norm;
            let dg = d_gradient_d_coeffs(u, v);
            match mode {
                TangentMode::Sine => {
                    let sign = orientation_sign(&gh, smp);
                    (smp.s.transpose() * proj * dg) * sign
                }
                TangentMode::Literal => {
                    let rot = nalgebra::Matrix2::new(0.0, -1.0, 1.0, 0.0);
                    let t = rot * gh;
                    let sgn = if smp.s.dot(&t) < 0.0 { -1.0 } else { 1.0 };
                    -(smp.s.transpose() * rot * proj * dg) * sgn
                }
            }
        }
    }
}

fn orientation_sign(n: &Vector2<f64>, smp: &CurveSample) -> f64 {
    let d = if smp.has_tangent {
        n.dot(&Vector2::new(smp.s.y, -smp.s.x))
    } else if n.x.abs() >= n.y.abs() {
        n.x
    } else {
        n.y
    };
    if d < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualJacobianRow {
    /// Row value, identical to the matching entry of `residual_block`.
    pub value: f64,
    /// `[δθ, δt]`.
    pub d_pose: RowSVector<f64, 6>,
    /// `[δω, δd]`.
    pub d_velocity: RowSVector<f64, 6>,
    /// `[δψ, δφ]`.
    pub d_line: RowSVector<f64, 4>,
    pub valid: bool,
}

impl ResidualJacobianRow {
    fn invalid(value: f64) -> Self {
        Self {
            value,
            d_pose: RowSVector::zeros(),
            d_velocity: RowSVector::zeros(),
            d_line: RowSVector::zeros(),
            valid: false,
        }
    }

    /// All 16 derivatives in parameter order.
    pub fn full(&self) -> RowSVector<f64, 16> {
        let mut out = RowSVector::<f64, 16>::zeros();
        out.fixed_view_mut::<1, 6>(0, 0).copy_from(&self.d_pose);
        out.fixed_view_mut::<1, 6>(0, 6).copy_from(&self.d_velocity);
        out.fixed_view_mut::<1, 4>(0, 12).copy_from(&self.d_line);
        out
    }
}

/// Rows in the same order as [`crate::residuals::residual_block`], with
/// analytic derivatives.
pub fn residual_jacobian(
    cam: &RsCamera,
    tau: &OrthonormalLine,
    obs: &LineObservation,
    cfg: &ResidualConfig,
) -> Vec<ResidualJacobianRow> {
    let kinds = cfg.variant.row_kinds();
    let penalty = match cfg.invalid_policy {
        InvalidPolicy::Mask => 0.0,
        InvalidPolicy::Penalty => INVALID_PENALTY,
    };
    let mut out = Vec::with_capacity(kinds.len() * obs.samples.len());
    let lw = tau.to_plucker();
    let Ok(c) = curve_coefficients(cam, &lw) else {
        out.resize(kinds.len() * obs.samples.len(), ResidualJacobianRow::invalid(penalty));
        return out;
    };
    let dc = d_curvecoeffs_d_params(cam, tau);
    for smp in &obs.samples {
        for &kind in &kinds {
            if kind == RowKind::Tangent && !smp.has_tangent {
                out.push(ResidualJacobianRow::invalid(0.0));
                continue;
            }
            let Ok(e) = row_value(kind, &c, smp, cfg.tangent_mode) else {
                out.push(ResidualJacobianRow::invalid(penalty));
                continue;
            };
            let w = cfg.row_weight(kind);
            let (value, dr) = robustify(cfg.robust_loss, w * e);
            let de = d_residual_d_coeffs(kind, cfg.tangent_mode, &c, smp) * (dr * w);
            let full = de * dc;
            out.push(ResidualJacobianRow {
                value,
                d_pose: full.fixed_view::<1, 6>(0, 0).into_owned(),
                d_velocity: full.fixed_view::<1, 6>(0, 6).into_owned(),
                d_line: full.fixed_view::<1, 4>(0, 12).into_owned(),
                valid: true,
            });
        }
    }
    out
}

/// Apply the 16-vector `[δθ, δt, δω, δd, δψ, δφ]` to a (camera, line) pair
/// with the conventions used by the analytic Jacobians.
pub fn apply_local_update(cam: &RsCamera, tau: &OrthonormalLine, delta: &[f64]) -> (RsCamera, OrthonormalLine) {
    (
        apply_camera_update(cam, &delta[0..12]),
        tau.updated(&Vector4::new(delta[12], delta[13], delta[14], delta[15])),
    )
}

/// `R₀ ← Exp(δθ)R₀`, `t₀ += δt`, `ω += δω`, `d += δd`.
pub fn apply_camera_update(cam: &RsCamera, delta: &[f64]) -> RsCamera {
    let v = |i: usize| Vector3::new(delta[i], delta[i + 1], delta[i + 2]);
    let mut out = *cam;
    out.r0 = crate::geometry::so3_exp(&v(0)) * cam.r0;
    out.t0 += v(3);
    out.omega += v(6);
    out.d += v(9);
    out
}

/// Central finite-difference oracle.
pub mod fd {
    use super::*;

    /// Step used for a coordinate with current value `x`.
    pub fn step(x: f64) -> f64 {
        1e-6 * x.abs().max(1.0)
    }

    /// Jacobian of `f` at `x0` by central differences with per-coordinate
    /// steps `h[i]`.
    pub fn jacobian<F>(f: F, x0: &DVector<f64>, h: &[f64]) -> DMatrix<f64>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let f0 = f(x0);
        let mut out = DMatrix::zeros(f0.len(), x0.len());
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += h[i];
            xm[i] -= h[i];
            let col = (f(&xp) - f(&xm)) / (2.0 * h[i]);
            out.set_column(i, &col);
        }
        out
    }

    /// Jacobian of `f` at `x0` by the five-point stencil
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`.
    pub fn jacobian5<F>(f: F, x0: &DVector<f64>, h: &[f64]) -> DMatrix<f64>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let f0 = f(x0);
        let mut out = DMatrix::zeros(f0.len(), x0.len());
        for i in 0..x0.len() {
            let at = |k: f64| {
                let mut x = x0.clone();
                x[i] += k * h[i];
                f(&x)
            };
            let col = (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h[i]);
            out.set_column(i, &col);
        }
        out
    }

    /// Relative tolerance of the gradient checks.
    pub const REL_TOL: f64 = 1e-5;
    /// Absolute floor of the gradient checks.
    pub const ABS_TOL: f64 = 1e-8;

    /// Worst-case agreement between an analytic and a finite-difference
    /// matrix. An entry passes when `|A − FD| ≤ max(1e-5·|FD|, 1e-8)`.
    #[derive(Debug, Clone, Copy, PartialEq, Default)]
    pub struct Agreement {
        /// Largest `|A − FD| / |FD|` over entries with `|FD| > 1e-6`.
        pub worst_rel: f64,
        /// Largest `|A − FD|` over all entries.
        pub worst_abs: f64,
        /// Largest `|A − FD| / max(1e-5·|FD|, 1e-8)`; at most 1 when passing.
        pub worst_ratio: f64,
        pub entries: usize,
    }

    impl Agreement {
        pub fn passes(&self) -> bool {
            self.worst_ratio <= 1.0
        }

        pub fn merge(self, other: Self) -> Self {
            Self {
                worst_rel: self.worst_rel.max(other.worst_rel),
                worst_abs: self.worst_abs.max(other.worst_abs),
                worst_ratio: self.worst_ratio.max(other.worst_ratio),
                entries: self.entries + other.entries,
            }
        }
    }

    pub fn compare(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> Agreement {
        assert_eq!(analytic.shape(), numeric.shape());
        let mut out = Agreement::default();
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let err = (a - n).abs();
            if n.abs() > 1e-6 {
                out.worst_rel = out.worst_rel.max(err / n.abs());
            }
            out.worst_abs = out.worst_abs.max(err);
            out.worst_ratio = out.worst_ratio.max(err / (REL_TOL * n.abs()).max(ABS_TOL));
            if !err.is_finite() {
                out.worst_ratio = f64::INFINITY;
            }
            out.entries += 1;
        }
        out
    }
}
