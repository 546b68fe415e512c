//! Line reprojection errors on the rolling-shutter curve.
//!
//! Each observed sample contributes up to two rows: a distance row
//! (perpendicular or horizontal) and a tangent row scaled by `√λ`. Signs are
//! oriented against the observed tangent so that every row is invariant to the
//! scale (including the sign) of the Plücker vector.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::camera::{curve_coefficients, CurveCoeffs, CurveSample, RsCamera};
use crate::error::{Error, Result};
use crate::geometry::PluckerLine;

/// Value written into rows that hit a degenerate configuration when the
/// penalty policy is active.
pub const INVALID_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    E1PerpTangent,
    E2HorizTangent,
    PerpOnly,
    HorizOnly,
    TangentOnly,
}

impl Variant {
    pub fn distance_kind(self) -> Option<RowKind> {
        match self {
            Variant::E1PerpTangent | Variant::PerpOnly => Some(RowKind::Perpendicular),
            Variant::E2HorizTangent | Variant::HorizOnly => Some(RowKind::Horizontal),
            Variant::TangentOnly => None,
        }
    }

    pub fn has_tangent(self) -> bool {
        matches!(self, Variant::E1PerpTangent | Variant::E2HorizTangent | Variant::TangentOnly)
    }

    /// Row kinds emitted per sample, in order.
    pub fn row_kinds(self) -> Vec<RowKind> {
        let mut rows = Vec::with_capacity(2);
        if let Some(k) = self.distance_kind() {
            rows.push(k);
        }
        if self.has_tangent() {
            rows.push(RowKind::Tangent);
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustLoss {
    None,
    Huber(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentMode {
    /// Sine of the angle between observed and predicted tangents.
    Sine,
    /// `1 - |sᵀs′|`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Invalid rows are zeroed and excluded from the cost and Jacobian.
    Mask,
    /// Invalid rows carry a constant value of [`INVALID_PENALTY`].
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub robust_loss: RobustLoss,
    pub tangent_mode: TangentMode,
    pub invalid_policy: InvalidPolicy,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            variant: Variant::E1PerpTangent,
            lambda: 1.0,
            robust_loss: RobustLoss::None,
            tangent_mode: TangentMode::Sine,
            invalid_policy: InvalidPolicy::Mask,
        }
    }
}

impl ResidualConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if let RobustLoss::Huber(delta) = self.robust_loss {
            if !(delta > 0.0) {
                return Err(Error::InvalidInput("huber delta must be positive".into()));
            }
        }
        Ok(())
    }

    /// Weight applied to a row before the robust loss.
    pub fn row_weight(&self, kind: RowKind) -> f64 {
        match kind {
            RowKind::Tangent => self.lambda.sqrt(),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Perpendicular,
    Horizontal,
    Tangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineObservation {
    pub camera_id: usize,
    pub line_id: usize,
    pub samples: Vec<CurveSample>,
}

impl LineObservation {
    pub fn validate(&self, cam: &RsCamera) -> Result<()> {
        if self.samples.len() < 2 || self.samples.len() > 64 {
            return Err(Error::InvalidInput(format!(
                "observation of line {} in camera {} has {} samples (expected 2..=64)",
                self.line_id,
                self.camera_id,
                self.samples.len()
            )));
        }
        for s in &self.samples {
            if !(s.v >= 0.0 && s.v < cam.height as f64) || !s.u.is_finite() {
                return Err(Error::InvalidInput(format!("sample row {} outside image", s.v)));
            }
            if s.has_tangent && (s.s.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("observed tangent is not unit length".into()));
            }
        }
        Ok(())
    }
}

/// Sum of absolute contributions to `(l1, l2)` at row `v`; the reference
/// magnitude for degeneracy thresholds.
fn normal_scale(c: &CurveCoeffs, v: f64) -> (f64, f64) {
    let c = &c.c;
    let (a, v2) = (v.abs(), v * v);
    let s1 = c[7].abs() + a * c[4].abs() + v2 * c[1].abs();
    let s2 = c[5].abs() + a * c[2].abs() + v2 * c[0].abs();
    (s1, s2)
}

fn gradient_scale(c: &CurveCoeffs, u: f64, v: f64) -> f64 {
    let c = &c.c;
    let (au, av) = (u.abs(), v.abs());
    let su = c[1].abs() * av * av + c[4].abs() * av + c[7].abs();
    let sv = 3.0 * c[0].abs() * av * av
        + 2.0 * c[1].abs() * au * av
        + 2.0 * (c[2].abs() + c[3].abs()) * av
        + c[4].abs() * au
        + c[5].abs()
        + c[6].abs();
    su + sv
}

/// Normal of the observed tangent, used to fix the residual sign.
fn observed_normal(s_obs: Option<&Vector2<f64>>) -> Option<Vector2<f64>> {
    s_obs.map(|s| Vector2::new(s.y, -s.x))
}

/// `±1` so that `sign·n` points along the observed normal; falls back to the
/// dominant component of `n` when no tangent is observed.
fn orientation(n: &Vector2<f64>, reference: Option<Vector2<f64>>) -> f64 {
    let d = match reference {
        Some(r) => n.dot(&r),
        None => {
            if n.x.abs() >= n.y.abs() {
                n.x
            } else {
                n.y
            }
        }
    };
    if d < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Signed perpendicular distance from `(u, v)` to the virtual line of row `v`.
pub fn perpendicular_distance(c: &CurveCoeffs, u: f64, v: f64) -> Result<f64> {
    perpendicular_oriented(c, u, v, None)
}

fn perpendicular_oriented(c: &CurveCoeffs, u: f64, v: f64, s_obs: Option<&Vector2<f64>>) -> Result<f64> {
    let l = c.virtual_line(v);
    let (s1, s2) = normal_scale(c, v);
    let norm = l.x.hypot(l.y);
    if !(norm > 1e-10 * (s1 + s2)) {
        return Err(Error::DegenerateVirtualLine(v));
    }
    let sign = orientation(&l.xy(), observed_normal(s_obs));
    Ok(sign * c.value(u, v) / norm)
}

/// `u - u′` where `u′` solves the virtual line of row `v`.
pub fn horizontal_distance(c: &CurveCoeffs, u: f64, v: f64) -> Result<f64> {
    let l = c.virtual_line(v);
    let (s1, s2) = normal_scale(c, v);
    if !(l.x.abs() > 1e-10 * (s1 + s2)) {
        return Err(Error::VerticalTangent(v));
    }
    Ok(c.value(u, v) / l.x)
}

/// Signed sine of the angle between `s_obs` and the curve tangent at `(u, v)`.
pub fn tangent_residual(c: &CurveCoeffs, u: f64, v: f64, s_obs: &Vector2<f64>, mode: TangentMode) -> Result<f64> {
    let g = c.gradient(u, v);
    let norm = g.norm();
    if !(norm > 1e-10 * gradient_scale(c, u, v)) {
        return Err(Error::TangentIndeterminate);
    }
    let gh = g / norm;
    match mode {
        TangentMode::Sine => {
            let sign = orientation(&gh, observed_normal(Some(s_obs)));
            Ok(sign * s_obs.dot(&gh))
        }
        TangentMode::Literal => {
            let t = Vector2::new(-gh.y, gh.x);
            Ok(1.0 - s_obs.dot(&t).abs())
        }
    }
}

/// Unsigned tangent misalignment `|s_obs × s′|`.
pub fn tangent_error(c: &CurveCoeffs, u: f64, v: f64, s_obs: &Vector2<f64>) -> Result<f64> {
    tangent_residual(c, u, v, s_obs, TangentMode::Sine).map(f64::abs)
}

/// Unweighted value of one row for one sample.
pub fn row_value(kind: RowKind, c: &CurveCoeffs, smp: &CurveSample, mode: TangentMode) -> Result<f64> {
    let s_obs = smp.has_tangent.then_some(&smp.s);
    match kind {
        RowKind::Perpendicular => perpendicular_oriented(c, smp.u, smp.v, s_obs),
        RowKind::Horizontal => horizontal_distance(c, smp.u, smp.v),
        RowKind::Tangent => match s_obs {
            Some(s) => tangent_residual(c, smp.u, smp.v, s, mode),
            None => Err(Error::InvalidInput("sample has no observed tangent".into())),
        },
    }
}

/// Huber reweighting as a transformed residual: returns `(ρ̃(r), dρ̃/dr)` with
/// `ρ̃(r)² = 2·huber(r)`.
pub fn robustify(loss: RobustLoss, r: f64) -> (f64, f64) {
    match loss {
        RobustLoss::None => (r, 1.0),
        RobustLoss::Huber(delta) => {
            let a = r.abs();
            if a <= delta {
                (r, 1.0)
            } else {
                let w = (2.0 * delta * a - delta * delta).sqrt();
                (r.signum() * w, delta / w)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Valid,
    /// Degenerate geometry at this sample.
    Invalid,
    /// No data for this row (sample without tangent).
    Missing,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualBlock {
    pub values: Vec<f64>,
    pub status: Vec<RowStatus>,
}

impl ResidualBlock {
    pub fn cost(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum()
    }

    pub fn invalid_count(&self) -> usize {
        self.status.iter().filter(|s| **s == RowStatus::Invalid).count()
    }
}

/// Residual rows for one observation given precomputed curve coefficients.
pub fn residual_block_from_coeffs(c: &CurveCoeffs, obs: &LineObservation, cfg: &ResidualConfig) -> ResidualBlock {
    let kinds = cfg.variant.row_kinds();
    let mut out = ResidualBlock {
        values: Vec::with_capacity(kinds.len() * obs.samples.len()),
        status: Vec::with_capacity(kinds.len() * obs.samples.len()),
    };
    for smp in &obs.samples {
        for &kind in &kinds {
            if kind == RowKind::Tangent && !smp.has_tangent {
                out.values.push(0.0);
                out.status.push(RowStatus::Missing);
                continue;
            }
            match row_value(kind, c, smp, cfg.tangent_mode) {
                Ok(r) => {
                    out.values.push(robustify(cfg.robust_loss, cfg.row_weight(kind) * r).0);
                    out.status.push(RowStatus::Valid);
                }
                Err(_) => {
                    out.values.push(match cfg.invalid_policy {
                        InvalidPolicy::Mask => 0.0,
                        InvalidPolicy::Penalty => INVALID_PENALTY,
                    });
                    out.status.push(RowStatus::Invalid);
                }
            }
        }
    }
    out
}

/// Residual rows for one observation. A line whose projection degenerates
/// entirely marks every row invalid.
pub fn residual_block(cam: &RsCamera, line: &PluckerLine, obs: &LineObservation, cfg: &ResidualConfig) -> ResidualBlock {
    match curve_coefficients(cam, line) {
        Ok(c) => residual_block_from_coeffs(&c, obs, cfg),
        Err(_) => {
            let n = cfg.variant.row_kinds().len() * obs.samples.len();
            let v = match cfg.invalid_policy {
                InvalidPolicy::Mask => 0.0,
                InvalidPolicy::Penalty => INVALID_PENALTY,
            };
            ResidualBlock {
                values: vec![v; n],
                status: vec![RowStatus::Invalid; n],
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{gs_line_projection, intrinsics, oriented_tangent, project_line_to_samples};
    use crate::geometry::so3_exp;
    use nalgebra::{Rotation2, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-s..s))
    }

    /// Camera looking at a random line in front of it, with visible samples.
    fn random_setup(rng: &mut ChaCha8Rng) -> (RsCamera, PluckerLine, Vec<CurveSample>) {
        random_setup_with_motion(rng, 5e-4, 2e-3)
    }

    fn random_setup_with_motion(rng: &mut ChaCha8Rng, w: f64, d: f64) -> (RsCamera, PluckerLine, Vec<CurveSample>) {
        loop {
            let k = intrinsics(500.0, 320.0, 240.0);
            let cam = RsCamera::new(k, so3_exp(&v3(rng, 0.1)), v3(rng, 0.3), 640, 480)
                .with_velocity(v3(rng, w), v3(rng, d));
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(4.0..8.0));
            let q = p + v3(rng, 2.0);
            let l = PluckerLine::through(&p, &q).unwrap();
            let rows: Vec<f64> = (0..8).map(|i| 10.0 + 60.0 * i as f64).collect();
            if let Ok(s) = project_line_to_samples(&cam, &l, &rows) {
                if s.samples.len() >= 3 {
                    return (cam, l, s.samples);
                }
            }
        }
    }

    #[test]
    fn on_curve_samples_have_zero_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (cam, l, samples) = random_setup(&mut rng);
            let c = curve_coefficients(&cam, &l).unwrap();
            for s in &samples {
                assert!(perpendicular_distance(&c, s.u, s.v).unwrap().abs() < 1e-8);
                if let Ok(h) = horizontal_distance(&c, s.u, s.v) {
                    assert!(h.abs() < 1e-8);
                }
                assert!(tangent_error(&c, s.u, s.v, &s.s).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn gs_perpendicular_matches_point_line_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let (cam, l, _) = random_setup(&mut rng);
            let cam = cam.with_velocity(Vector3::zeros(), Vector3::zeros());
            let c = curve_coefficients(&cam, &l).unwrap();
            let g = gs_line_projection(&cam.r0, &cam.t0, &cam.k, &l).unwrap();
            let (u, v) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let expect = (g.x * u + g.y * v + g.z) / g.xy().norm();
            let got = perpendicular_distance(&c, u, v).unwrap();
            assert!((got.abs() - expect.abs()).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }

    /// Nearest-point distance to the curve by dense sampling over rows.
    fn brute_force_distance(cam: &RsCamera, c: &CurveCoeffs, u: f64, v: f64) -> f64 {
        let mut best = f64::INFINITY;
        let n = 10_000;
        for i in 0..n {
            let vv = v - 10.0 + 20.0 * i as f64 / (n - 1) as f64;
            let l = c.virtual_line(vv);
            let uu = -(l.y * vv + l.z) / l.x;
            let _ = cam;
            best = best.min(((uu - u).powi(2) + (vv - v).powi(2)).sqrt());
        }
        best
    }

    #[test]
    fn perpendicular_close_to_geometric_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut tested = 0;
        while tested < 40 {
            let (cam, l, samples) = random_setup_with_motion(&mut rng, 5e-5, 2e-4);
            let c = curve_coefficients(&cam, &l).unwrap();
            let s = samples[samples.len() / 2];
            let n = Vector2::new(s.s.y, -s.s.x);
            let off = rng.random_range(0.2..2.0);
            let (u, v) = (s.u + n.x * off, s.v + n.y * off);
            let brute = brute_force_distance(&cam, &c, u, v);
            let e = perpendicular_distance(&c, u, v).unwrap().abs();
            assert!((e - brute).abs() <= 0.1 * brute, "e={e} brute={brute}");
            tested += 1;
        }
    }

    #[test]
    fn horizontal_perpendicular_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let c = CurveCoeffs { c: std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
            let (u, v) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let l = c.virtual_line(v);
            let h = horizontal_distance(&c, u, v).unwrap();
            let p = perpendicular_distance(&c, u, v).unwrap();
            let ratio = l.x.hypot(l.y) / l.x.abs();
            assert!((h.abs() - p.abs() * ratio).abs() <= 1e-10 * (1.0 + h.abs()));
        }
    }

    #[test]
    fn horizontal_axis_aligned_case() {
        let k = intrinsics(500.0, 320.0, 240.0);
        let x = (100.0 - 320.0) / 500.0 * 5.0;
        let l = PluckerLine::through(&Vector3::new(x, -1.0, 5.0), &Vector3::new(x, 1.0, 5.0)).unwrap();
        let cam = RsCamera::new(k, Rotation3::identity(), Vector3::zeros(), 640, 480);
        let c = curve_coefficients(&cam, &l).unwrap();
        assert!((horizontal_distance(&c, 103.0, 200.0).unwrap() - 3.0).abs() < 1e-9);
        let scaled = curve_coefficients(&cam, &l.scaled(-2.0)).unwrap();
        assert!((horizontal_distance(&scaled, 103.0, 200.0).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn tangent_right_angle_and_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let (cam, l, samples) = random_setup(&mut rng);
            let c = curve_coefficients(&cam, &l).unwrap();
            for s in &samples {
                let rotated = Rotation2::new(std::f64::consts::FRAC_PI_2) * s.s;
                assert!((tangent_error(&c, s.u, s.v, &rotated).unwrap() - 1.0).abs() < 1e-9);
                let tilted = Rotation2::new(0.1) * s.s;
                let a = tangent_residual(&c, s.u, s.v, &tilted, TangentMode::Sine).unwrap();
                let b = tangent_residual(&c, s.u, s.v, &-tilted, TangentMode::Sine).unwrap();
                assert!((a - b).abs() < 1e-12);
                assert!((a.abs() - 0.1f64.sin()).abs() < 1e-9);
                let lit = tangent_residual(&c, s.u, s.v, &tilted, TangentMode::Literal).unwrap();
                assert!((lit - (1.0 - 0.1f64.cos())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_gradient_is_indeterminate() {
        let c = CurveCoeffs { c: [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, -2.0, 0.0, 0.0] };
        let s = Vector2::new(0.0, 1.0);
        assert_eq!(tangent_error(&c, 10.0, 20.0, &s), Err(Error::TangentIndeterminate));
        assert_eq!(perpendicular_distance(&c, 10.0, 20.0), Ok(0.0));
        assert_eq!(horizontal_distance(&c, 10.0, 20.0), Err(Error::VerticalTangent(20.0)));
        let all_zero = CurveCoeffs { c: [0.0; 9] };
        assert_eq!(perpendicular_distance(&all_zero, 1.0, 1.0), Err(Error::DegenerateVirtualLine(1.0)));
    }

    #[test]
    fn block_layout_and_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (cam, l, samples) = random_setup(&mut rng);
        let obs = LineObservation { camera_id: 0, line_id: 0, samples: samples.clone() };
        let e1 = residual_block(&cam, &l, &obs, &ResidualConfig::default());
        assert_eq!(e1.values.len(), 2 * samples.len());
        assert!(e1.values.iter().all(|r| r.abs() < 1e-8));
        let perp = residual_block(&cam, &l, &obs, &ResidualConfig::with_variant(Variant::PerpOnly));
        assert_eq!(perp.values.len(), samples.len());

        // Shifted observation: PERP_ONLY rows equal the perpendicular distance.
        let mut shifted = obs.clone();
        for s in shifted.samples.iter_mut() {
            s.u += 1.5;
        }
        let perp = residual_block(&cam, &l, &shifted, &ResidualConfig::with_variant(Variant::PerpOnly));
        let c = curve_coefficients(&cam, &l).unwrap();
        for (r, s) in perp.values.iter().zip(&shifted.samples) {
            assert!((r.abs() - perpendicular_distance(&c, s.u, s.v).unwrap().abs()).abs() < 1e-12);
        }

        let degenerate = CurveCoeffs { c: [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, -2.0, 0.0, 0.0] };
        let masked = residual_block_from_coeffs(&degenerate, &obs, &ResidualConfig::default());
        assert_eq!(masked.invalid_count(), samples.len());
        assert_eq!(masked.cost(), 0.0);
        let cfg = ResidualConfig { invalid_policy: InvalidPolicy::Penalty, ..Default::default() };
        let pen = residual_block_from_coeffs(&degenerate, &obs, &cfg);
        assert!(pen.cost() > 1e2);
    }

    #[test]
    fn scale_invariance_of_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let (cam, l, mut samples) = random_setup(&mut rng);
            for s in samples.iter_mut() {
                s.u += rng.random_range(-2.0..2.0);
                s.s = Rotation2::new(rng.random_range(-0.2..0.2)) * s.s;
            }
            let obs = LineObservation { camera_id: 0, line_id: 0, samples };
            for variant in [Variant::E1PerpTangent, Variant::E2HorizTangent] {
                let cfg = ResidualConfig::with_variant(variant);
                let base = residual_block(&cam, &l, &obs, &cfg);
                for scale in [-3.0, -0.2, 0.5, 7.0] {
                    let other = residual_block(&cam, &l.scaled(scale), &obs, &cfg);
                    for (a, b) in base.values.iter().zip(&other.values) {
                        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn huber_matches_loss() {
        let loss = RobustLoss::Huber(1.0);
        for r in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let (w, dw) = robustify(loss, r);
            let huber = if r.abs() <= 1.0 { 0.5 * r * r } else { r.abs() - 0.5 };
            assert!((0.5 * w * w - huber).abs() < 1e-12);
            let h = 1e-6;
            let fd = (robustify(loss, r + h).0 - robustify(loss, r - h).0) / (2.0 * h);
            assert!((dw - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn generated_tangent_orientation() {
        let t = oriented_tangent(&Vector2::new(0.0, 3.0)).unwrap();
        assert_eq!(t, Vector2::new(1.0, 0.0));
        let t = oriented_tangent(&Vector2::new(2.0, 0.0)).unwrap();
        assert_eq!(t, Vector2::new(0.0, 1.0));
    }
}
