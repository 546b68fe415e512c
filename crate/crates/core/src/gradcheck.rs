//! Randomized finite-difference checks of every analytic Jacobian block.
//!
//! Each block is evaluated on seeded random instances and compared against
//! central differences with [`fd::compare`]. The worst agreement per block is
//! reported. A corruption hook perturbs one analytic entry of a chosen block
//! so callers can confirm that the check detects a wrong derivative.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation2, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::camera::{curve_coefficients, intrinsics, project_line_to_samples, CurveCoeffs, CurveSample, RsCamera};
use crate::geometry::{skew, so3_exp, update_orthonormal, OrthonormalLine, PluckerLine};
use crate::jacobians::fd::{self, compare, Agreement};
use crate::jacobians::{
    apply_camera_update, apply_local_update, d_curvecoeffs_d_linecam, d_curvecoeffs_d_motion, d_curvecoeffs_d_params,
    d_linecam_d_pose, d_linew_d_tau, d_residual_d_coeffs, residual_jacobian,
};
use crate::residuals::{
    residual_block, row_value, LineObservation, ResidualConfig, RobustLoss, RowKind, TangentMode, Variant,
};

/// Jacobian blocks covered by the check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// `∂c/∂(n_c, a_c)`.
    CoeffsLineCam,
    /// `∂c/∂(ω, d')` with the camera-frame line fixed.
    CoeffsMotion,
    /// `∂L_c(v)/∂[δθ, t, ω, d]` at a random row.
    LineCamPose,
    /// `∂L_w/∂[δψ, δφ]`.
    LineWTau,
    /// `∂c/∂[δθ, δt, δω, δd, δψ, δφ]`.
    CoeffsParams,
    /// `∂e/∂c` for every row kind and tangent mode.
    ResidualCoeffs,
    /// Assembled pixel-unit residual rows, including the Huber loss.
    ResidualRows,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::CoeffsLineCam,
        Block::CoeffsMotion,
        Block::LineCamPose,
        Block::LineWTau,
        Block::CoeffsParams,
        Block::ResidualCoeffs,
        Block::ResidualRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::CoeffsLineCam => "coeffs_line_cam",
            Block::CoeffsMotion => "coeffs_motion",
            Block::LineCamPose => "line_cam_pose",
            Block::LineWTau => "line_w_tau",
            Block::CoeffsParams => "coeffs_params",
            Block::ResidualCoeffs => "residual_coeffs",
            Block::ResidualRows => "residual_rows",
        }
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockReport {
    pub block: Block,
    pub instances: usize,
    /// Instances skipped because they sit on a residual sign switch.
    pub skipped: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub blocks: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }
}

/// Check every block on `instances` random instances each.
pub fn run(instances: usize, seed: u64, corrupt: Option<Block>) -> GradcheckReport {
    let blocks = Block::ALL
        .iter()
        .enumerate()
        .map(|(i, &b)| check_block(b, instances, seed.wrapping_add(i as u64), corrupt == Some(b)))
        .collect();
    GradcheckReport { seed, blocks }
}

/// Cap on skipped draws, as a multiple of the requested instance count.
const MAX_SKIPS_PER_INSTANCE: usize = 10;

/// Check one block. With `corrupt`, one analytic entry of every instance is
/// offset by `1e-3·(1 + |entry|)` before comparison.
pub fn check_block(block: Block, instances: usize, seed: u64, corrupt: bool) -> BlockReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agr = Agreement::default();
    let mut skipped = 0;
    let mut done = 0;
    while done < instances && skipped < MAX_SKIPS_PER_INSTANCE * instances.max(1) {
        let pairs = match instance(block, &mut rng) {
            Some(p) => p,
            None => {
                skipped += 1;
                continue;
            }
        };
        for (mut ana, num) in pairs {
            if corrupt {
                let x = ana[(0, 0)];
                ana[(0, 0)] = x + 1e-3 * (1.0 + x.abs());
            }
            agr = agr.merge(compare(&ana, &num));
        }
        done += 1;
    }
    BlockReport {
        block,
        instances: done,
        skipped,
        worst_rel: agr.worst_rel,
        worst_abs: agr.worst_abs,
        worst_ratio: agr.worst_ratio,
        passed: agr.passes() && done == instances,
    }
}

/// One random instance: (analytic, finite-difference) pairs, or `None` when
/// the draw sits on a kink and is skipped.
fn instance(block: Block, rng: &mut ChaCha8Rng) -> Option<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    Some(match block {
        Block::CoeffsLineCam => vec![coeffs_line_cam(rng)],
        Block::CoeffsMotion => vec![coeffs_motion(rng)],
        Block::LineCamPose => vec![line_cam_pose(rng)],
        Block::LineWTau => vec![line_w_tau(rng)],
        Block::CoeffsParams => vec![coeffs_params(rng)],
        Block::ResidualCoeffs => residual_coeffs(rng)?,
        Block::ResidualRows => residual_rows(rng)?,
    })
}

fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-s..s))
}

/// Camera with unit-scale intrinsics so coefficient magnitudes stay O(1).
pub fn random_unit_camera(rng: &mut ChaCha8Rng) -> RsCamera {
    let k = Matrix3::new(
        rng.random_range(0.8..1.2),
        rng.random_range(-0.01..0.01),
        rng.random_range(-0.2..0.2),
        0.0,
        rng.random_range(0.8..1.2),
        rng.random_range(-0.2..0.2),
        0.0,
        0.0,
        1.0,
    );
    RsCamera::new(k, so3_exp(&v3(rng, 1.0)), v3(rng, 2.0), 640, 480).with_velocity(v3(rng, 0.3), v3(rng, 0.5))
}

pub fn random_line(rng: &mut ChaCha8Rng) -> PluckerLine {
    loop {
        if let Ok(l) = PluckerLine::through(&v3(rng, 2.0), &v3(rng, 2.0)) {
            return l;
        }
    }
}

fn coeff_vec(c: &CurveCoeffs) -> DVector<f64> {
    DVector::from_column_slice(&c.c)
}

fn dyn_of<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn coeffs_line_cam(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let cam = random_unit_camera(rng);
    let lc = random_line(rng);
    let dc = cam.camera_frame_velocity();
    let f = |x: &DVector<f64>| {
        let l = PluckerLine::from_vector(&Vector6::from_column_slice(x.as_slice()));
        coeff_vec(&CurveCoeffs::from_camera_line(&cam.k, &cam.omega, &dc, &l))
    };
    let x0 = DVector::from_column_slice(lc.to_vector().as_slice());
    let h: Vec<f64> = x0.iter().map(|x| fd::step(*x)).collect();
    (dyn_of(&d_curvecoeffs_d_linecam(&cam)), fd::jacobian(f, &x0, &h))
}

fn coeffs_motion(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let cam = random_unit_camera(rng);
    let lc = random_line(rng);
    let dc = cam.camera_frame_velocity();
    let f = |x: &DVector<f64>| {
        let w = cam.omega + Vector3::new(x[0], x[1], x[2]);
        let d = dc + Vector3::new(x[3], x[4], x[5]);
        coeff_vec(&CurveCoeffs::from_camera_line(&cam.k, &w, &d, &lc))
    };
    let num = fd::jacobian(f, &DVector::zeros(6), &[1e-6; 6]);
    let (dw, dd) = d_curvecoeffs_d_motion(&cam, &lc);
    let mut ana = DMatrix::zeros(9, 6);
    ana.view_mut((0, 0), (9, 3)).copy_from(&dw);
    ana.view_mut((0, 3), (9, 3)).copy_from(&dd);
    (ana, num)
}

fn line_cam_pose(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let cam = random_unit_camera(rng);
    let lw = random_line(rng);
    let v = rng.random_range(-2.0..2.0);
    let f = |x: &DVector<f64>| {
        let c = apply_camera_update(&cam, x.as_slice());
        // The left perturbation sits between the motion bracket and R₀.
        let m = (Matrix3::identity() + skew(&c.omega) * v) * c.r0.matrix();
        let t = c.t0 + c.d * v;
        DVector::from_column_slice(lw.transformed(&m, &t).to_vector().as_slice())
    };
    let num = fd::jacobian(f, &DVector::zeros(12), &[1e-6; 12]);
    (dyn_of(&d_linecam_d_pose(&cam, &lw, v)), num)
}

fn line_w_tau(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let tau = random_line(rng).to_orthonormal().expect("finite line");
    let f = |x: &DVector<f64>| {
        let t = update_orthonormal(&tau, &Vector4::new(x[0], x[1], x[2], x[3]));
        DVector::from_column_slice(t.to_plucker().to_vector().as_slice())
    };
    let num = fd::jacobian(f, &DVector::zeros(4), &[1e-6; 4]);
    (dyn_of(&d_linew_d_tau(&tau)), num)
}

fn coeffs_params(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let cam = random_unit_camera(rng);
    let tau = random_line(rng).to_orthonormal().expect("finite line");
    let f = |x: &DVector<f64>| {
        let (c, t) = apply_local_update(&cam, &tau, x.as_slice());
        match curve_coefficients(&c, &t.to_plucker()) {
            Ok(cc) => coeff_vec(&cc),
            Err(_) => DVector::from_element(9, f64::NAN),
        }
    };
    let num = fd::jacobian(f, &DVector::zeros(16), &[1e-6; 16]);
    (dyn_of(&d_curvecoeffs_d_params(&cam, &tau)), num)
}

/// Random coefficients with a sample point and unit observed tangent.
pub fn random_coeffs_and_sample(rng: &mut ChaCha8Rng) -> (CurveCoeffs, CurveSample) {
    let c = CurveCoeffs { c: std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
    let (u, v) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let s = Rotation2::new(rng.random_range(0.0..std::f64::consts::TAU)) * nalgebra::Vector2::x();
    (c, CurveSample { u, v, s, has_tangent: true })
}

/// True when the sample sits within ~0.06° of a sign switch of the row,
/// where central differences straddle the kink, or when the horizontal
/// distance is near its pole at a horizontal virtual line.
pub fn near_kink(kind: RowKind, mode: TangentMode, c: &CurveCoeffs, smp: &CurveSample) -> bool {
    let nobs = nalgebra::Vector2::new(smp.s.y, -smp.s.x);
    let g = c.gradient(smp.u, smp.v).normalize();
    let l = c.virtual_line(smp.v).xy().normalize();
    match (kind, mode) {
        (RowKind::Perpendicular, _) => l.dot(&nobs).abs() < 1e-3,
        (RowKind::Horizontal, _) => l.x.abs() < 1e-2,
        (RowKind::Tangent, TangentMode::Sine) => g.dot(&nobs).abs() < 1e-3,
        (RowKind::Tangent, TangentMode::Literal) => g.dot(&smp.s).abs() > 1.0 - 1e-6 || g.dot(&nobs).abs() < 1e-3,
    }
}

/// One draw checked against all three row kinds in both tangent modes.
fn residual_coeffs(rng: &mut ChaCha8Rng) -> Option<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let (c, smp) = random_coeffs_and_sample(rng);
    let mut out = Vec::new();
    for kind in [RowKind::Perpendicular, RowKind::Horizontal, RowKind::Tangent] {
        for mode in [TangentMode::Sine, TangentMode::Literal] {
            if row_value(kind, &c, &smp, mode).is_err() || near_kink(kind, mode, &c, &smp) {
                return None;
            }
            let f = |x: &DVector<f64>| {
                let cc = CurveCoeffs { c: std::array::from_fn(|i| x[i]) };
                DVector::from_element(1, row_value(kind, &cc, &smp, mode).unwrap_or(f64::NAN))
            };
            let num = fd::jacobian(f, &coeff_vec(&c), &[1e-6; 9]);
            let ana = DMatrix::from_row_slice(1, 9, d_residual_d_coeffs(kind, mode, &c, &smp).as_slice());
            out.push((ana, num));
        }
    }
    Some(out)
}

/// Pixel-unit camera, line and a perturbed observation of it.
pub fn pixel_setup(rng: &mut ChaCha8Rng) -> (RsCamera, OrthonormalLine, LineObservation) {
    loop {
        let k = intrinsics(500.0, 320.0, 240.0);
        let cam = RsCamera::new(k, so3_exp(&v3(rng, 0.1)), v3(rng, 0.3), 640, 480)
            .with_velocity(v3(rng, 2e-4), v3(rng, 1e-3));
        let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(4.0..8.0));
        let Ok(l) = PluckerLine::through(&p, &(p + v3(rng, 2.0))) else { continue };
        let rows: Vec<f64> = (0..6).map(|i| 30.0 + 80.0 * i as f64).collect();
        let Ok(s) = project_line_to_samples(&cam, &l, &rows) else { continue };
        if s.samples.len() < 3 {
            continue;
        }
        let samples = s
            .samples
            .into_iter()
            .map(|mut x| {
                x.u += rng.random_range(-1.0..1.0);
                x.v += rng.random_range(-1.0..1.0);
                x.s = Rotation2::new(rng.random_range(-0.05..0.05)) * x.s;
                x
            })
            .collect();
        let Ok(tau) = l.to_orthonormal() else { continue };
        return (cam, tau, LineObservation { camera_id: 0, line_id: 0, samples });
    }
}

/// Largest pixel movement of a row at the outer stencil points.
const ROW_REACH: f64 = 2e-3;
/// Candidate steps of the scaled five-point stencil.
const STEP_LADDER: [f64; 6] = [1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Huber threshold in the middle of the widest gap between consecutive row
/// magnitudes, so that rows fall on both sides of the knee. `None` when the
/// gap is too narrow for the stencil to stay on one side.
fn huber_between_rows(values: &[f64]) -> Option<f64> {
    let mut mags: Vec<f64> = values.iter().map(|r| r.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let (lo, hi) = mags.windows(2).map(|w| (w[0], w[1])).max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))?;
    (hi - lo > 4.0 * ROW_REACH).then_some((lo + hi) / 2.0)
}

/// Five-point differences with a step chosen per entry: the largest step of
/// [`STEP_LADDER`] for which the outer stencil points move the row by at
/// most [`ROW_REACH`] pixels, judged from the magnitude `scale[(i, k)]`.
/// Pixel residuals mix entries of order 1e5 and 1e-2 in one column, so no
/// single step keeps both truncation and round-off below tolerance.
/// Steps never exceed `max_step[k]`, which bounds the parameter change.
fn scaled_jacobian5<F>(f: F, max_step: &[f64], scale: &DMatrix<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = max_step.len();
    let ladder: Vec<DMatrix<f64>> = STEP_LADDER.iter().map(|&h| fd::jacobian5(&f, &DVector::zeros(n), &vec![h; n])).collect();
    DMatrix::from_fn(scale.nrows(), n, |i, k| {
        let j = scale[(i, k)].abs();
        let pick = STEP_LADDER.iter().rposition(|&h| h <= max_step[k] && 2.0 * h * j <= ROW_REACH).unwrap_or(0);
        ladder[pick][(i, k)]
    })
}

/// Assembled rows for three variants and the Huber loss on one setup, with
/// [`scaled_jacobian5`] as the oracle. Draws with a row near a sign switch
/// are skipped.
fn residual_rows(rng: &mut ChaCha8Rng) -> Option<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let (cam, tau, obs) = pixel_setup(rng);
    let c = curve_coefficients(&cam, &tau.to_plucker()).ok()?;
    for smp in &obs.samples {
        for kind in [RowKind::Perpendicular, RowKind::Horizontal, RowKind::Tangent] {
            if near_kink(kind, TangentMode::Sine, &c, smp) {
                return None;
            }
        }
    }
    let plain = residual_block(&cam, &tau.to_plucker(), &obs, &ResidualConfig::default());
    let huber = huber_between_rows(&plain.values)?;
    let configs = [
        ResidualConfig::with_variant(Variant::E1PerpTangent),
        ResidualConfig::with_variant(Variant::E2HorizTangent),
        ResidualConfig::with_variant(Variant::TangentOnly),
        ResidualConfig { robust_loss: RobustLoss::Huber(huber), ..Default::default() },
    ];
    // Velocities act through the row index, so their steps are ~h times
    // smaller than the pose steps.
    let max_step: Vec<f64> = (0..16)
        .map(|k| match k {
            6..9 => 1e-6,
            9..12 => 1e-5,
            _ => 1e-4,
        })
        .collect();
    let pairs = configs
        .iter()
        .map(|cfg| {
            let rows = residual_jacobian(&cam, &tau, &obs, cfg);
            let mut ana = DMatrix::zeros(rows.len(), 16);
            for (i, r) in rows.iter().enumerate() {
                ana.set_row(i, &r.full());
            }
            let f = |x: &DVector<f64>| {
                let (c, t) = apply_local_update(&cam, &tau, x.as_slice());
                DVector::from_vec(residual_block(&c, &t.to_plucker(), &obs, cfg).values)
            };
            let num = scaled_jacobian5(f, &max_step, &ana);
            (ana, num)
        })
        .collect();
    Some(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in Block::ALL {
            assert_eq!(Block::from_name(b.name()), Some(b));
        }
        assert_eq!(Block::from_name("nope"), None);
    }

    #[test]
    fn corruption_is_detected_in_every_block() {
        for b in Block::ALL {
            let r = check_block(b, 3, 1, true);
            assert!(!r.passed, "{b:?} {r:?}");
        }
    }
}
