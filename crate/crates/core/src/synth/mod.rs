//! Synthetic scenes, trajectories and curve observations.

pub mod degeneracy;

use nalgebra::{Matrix3, Rotation2, Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{curve_coefficients, intrinsics, sample_curve, RsCamera};
use crate::error::{Error, Result};
use crate::geometry::{so3_exp, PluckerLine};
use crate::residuals::LineObservation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
}

impl Segment {
    pub fn line(&self) -> PluckerLine {
        PluckerLine::through(&self.p0, &self.p1).expect("segment endpoints coincide")
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    pub fn point(&self, s: f64) -> Vector3<f64> {
        self.p0 + (self.p1 - self.p0) * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub lines: Vec<Segment>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn plucker_lines(&self) -> Vec<PluckerLine> {
        self.lines.iter().map(Segment::line).collect()
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for s in &self.lines {
            for p in [s.p0, s.p1] {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        (lo, hi)
    }

    /// First `n` lines.
    pub fn truncated(&self, n: usize) -> Scene {
        Scene {
            lines: self.lines[..n.min(self.lines.len())].to_vec(),
            rng_seed: self.rng_seed,
        }
    }
}

/// Axis-aligned cube wireframe. Edges are ordered round-robin over the three
/// directions (x, y, z, x, y, z, ...) so any prefix mixes directions.
pub fn make_cube_scene(side: f64, center: Vector3<f64>, seed: u64) -> Scene {
    assert!(side > 0.0, "cube side must be positive");
    let h = side / 2.0;
    let signs = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut lines = Vec::with_capacity(12);
    for &(s1, s2) in &signs {
        for axis in 0..3 {
            let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut p0 = Vector3::zeros();
            p0[axis] = -h;
            p0[i] = s1 * h;
            p0[j] = s2 * h;
            let mut p1 = p0;
            p1[axis] = h;
            lines.push(Segment { p0: p0 + center, p1: p1 + center });
        }
    }
    Scene { lines, rng_seed: seed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Ring,
    Linear,
    XyTranslation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub n_cameras: usize,
    /// Ring radius, or distance of the path from the target for the other kinds.
    pub radius: f64,
    /// Height of the ring above the target (world `-y` is up).
    pub elevation: f64,
    /// Path length for `linear` and `xy_translation`.
    pub displacement: f64,
    /// Angular velocity magnitude, rad per row.
    pub omega: f64,
    /// Linear velocity magnitude, scene units per row.
    pub d: f64,
    /// Relative random variation of the velocity vectors.
    pub velocity_jitter: f64,
    /// Alternating roll about the optical axis, degrees (camera `i` is rolled
    /// by `±roll_deg`), which puts a roll component into the motion.
    pub roll_deg: f64,
    pub target: [f64; 3],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Ring,
            n_cameras: 8,
            radius: 4.0,
            elevation: 1.5,
            displacement: 4.0,
            omega: 3e-4,
            d: 5e-4,
            velocity_jitter: 0.2,
            roll_deg: 15.0,
            target: [0.0, 0.0, 0.0],
            focal: 500.0,
            width: 640,
            height: 480,
            seed: 0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cameras < 2 {
            return Err(Error::InvalidInput("a trajectory needs at least 2 cameras".into()));
        }
        if self.omega * self.height as f64 > std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidInput("angular velocity exceeds the linearization bound".into()));
        }
        if !(self.radius > 0.0 && self.focal > 0.0) || self.omega < 0.0 || self.d < 0.0 {
            return Err(Error::InvalidInput("trajectory magnitudes must be positive".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        intrinsics(self.focal, self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

/// World-to-camera rotation looking from `c` at `target`, with world `+y`
/// mapped to image-down as closely as possible.
pub fn look_at(c: &Vector3<f64>, target: &Vector3<f64>) -> Rotation3<f64> {
    let z = (target - c).normalize();
    let down = Vector3::y();
    let mut x = down.cross(&z);
    if x.norm() < 1e-9 {
        x = Vector3::x().cross(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]))
}

fn jitter(v: Vector3<f64>, frac: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    if v.norm() == 0.0 || frac == 0.0 {
        return v;
    }
    let n = v.norm();
    let e: [f64; 3] = UnitSphere.sample(rng);
    (v + Vector3::from(e) * (n * frac * rng.random_range(0.0..1.0))).normalize() * n
}

/// Cameras along the requested path. Velocities follow the finite differences
/// of consecutive poses, rescaled to the requested magnitudes.
pub fn make_trajectory(spec: &TrajectorySpec, scene: &Scene) -> Result<Vec<RsCamera>> {
    spec.validate()?;
    let k = spec.intrinsics();
    let target = Vector3::from(spec.target);
    let n = spec.n_cameras;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let f = i as f64 / n as f64;
            match spec.kind {
                TrajectoryKind::Ring => {
                    // Half-step phase offset keeps cameras off the face normals.
                    let th = std::f64::consts::TAU * (f + 0.5 / n as f64);
                    target + Vector3::new(spec.radius * th.sin(), -spec.elevation, -spec.radius * th.cos())
                }
                TrajectoryKind::Linear => {
                    let s = (i as f64 / (n - 1) as f64 - 0.5) * spec.displacement;
                    target + Vector3::new(s, -spec.elevation, -spec.radius)
                }
                TrajectoryKind::XyTranslation => {
                    let s = (i as f64 / (n - 1) as f64 - 0.5) * spec.displacement;
                    let (a, b) = (s, 0.5 * s * ((i % 2) as f64 * 2.0 - 1.0));
                    target + Vector3::new(a, -spec.elevation + b, -spec.radius)
                }
            }
        })
        .collect();
    let rotations: Vec<Rotation3<f64>> = match spec.kind {
        TrajectoryKind::XyTranslation => vec![Rotation3::identity(); n],
        _ => centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), sign * spec.roll_deg.to_radians());
                roll * look_at(c, &target)
            })
            .collect(),
    };
    let (lo, hi) = scene.bounding_box();
    for (i, c) in centers.iter().enumerate() {
        if (0..3).all(|j| c[j] >= lo[j] && c[j] <= hi[j]) {
            return Err(Error::CameraInsideScene(i));
        }
    }
    let mut cams = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
        let r = rotations[i];
        let t0 = -(r * centers[i]);
        let (omega, d) = match spec.kind {
            TrajectoryKind::XyTranslation => {
                let mut dir = centers[b] - centers[a];
                dir.z = 0.0;
                // World and camera axes coincide, so d = -ΔC.
                let d = -dir.normalize() * spec.d;
                (Vector3::zeros(), d)
            }
            _ => {
                let rel = rotations[b] * rotations[a].inverse();
                let w = rel.scaled_axis();
                let omega = if w.norm() > 1e-12 { w.normalize() * spec.omega } else { Vector3::zeros() };
                let ta = -(rotations[a] * centers[a]);
                let tb = -(rotations[b] * centers[b]);
                let dt = tb - ta;
                let d = if dt.norm() > 1e-12 { dt.normalize() * spec.d } else { Vector3::zeros() };
                (jitter(omega, spec.velocity_jitter, &mut rng), jitter(d, spec.velocity_jitter, &mut rng))
            }
        };
        cams.push(RsCamera { k, r0: r, t0, omega, d, height: spec.height, width: spec.width });
    }
    Ok(cams)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Noise on every sample.
    AllSamples,
    /// Noise only on the first and last sample of each observation.
    Endpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSpec {
    pub points_per_line: usize,
    pub noise_px: f64,
    pub tangent_noise_rad: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            points_per_line: 5,
            noise_px: 0.0,
            tangent_noise_rad: 0.0,
            noise_mode: NoiseMode::AllSamples,
            seed: 0,
        }
    }
}

impl ObservationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=64).contains(&self.points_per_line) {
            return Err(Error::InvalidInput(format!(
                "points_per_line must be in 2..=64, got {}",
                self.points_per_line
            )));
        }
        if !(self.noise_px >= 0.0) || !(self.tangent_noise_rad >= 0.0) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// (camera, line) pairs that could not be observed, with the reason.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DroppedReport {
    pub not_visible: Vec<(usize, usize)>,
    pub dropped_rows: usize,
}

/// Visible row span `[v_min, v_max]` of a segment, by dense sampling of its
/// rolling-shutter projection.
pub fn visible_row_span(cam: &RsCamera, seg: &Segment) -> Option<(f64, f64)> {
    const N: usize = 400;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=N {
        let p = seg.point(i as f64 / N as f64);
        if let Some(x) = cam.project_point(&p) {
            if cam.contains(x.x, x.y) {
                lo = lo.min(x.y);
                hi = hi.max(x.y);
            }
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Observations of every visible (camera, line) pair. Rows are spread
/// uniformly over the visible span; `u` comes from the exact curve.
pub fn generate_observations(
    scene: &Scene,
    cameras: &[RsCamera],
    spec: &ObservationSpec,
) -> Result<(Vec<LineObservation>, DroppedReport)> {
    spec.validate()?;
    let per_cam: Vec<(Vec<LineObservation>, DroppedReport)> = cameras
        .par_iter()
        .enumerate()
        .map(|(ci, cam)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(ci as u64 + 1);
            let mut obs = Vec::new();
            let mut rep = DroppedReport::default();
            for (li, seg) in scene.lines.iter().enumerate() {
                match observe_segment(cam, seg, spec, &mut rng) {
                    Some((samples, dropped)) => {
                        rep.dropped_rows += dropped;
                        obs.push(LineObservation { camera_id: ci, line_id: li, samples });
                    }
                    None => rep.not_visible.push((ci, li)),
                }
            }
            (obs, rep)
        })
        .collect();
    let mut all = Vec::new();
    let mut rep = DroppedReport::default();
    for (o, r) in per_cam {
        all.extend(o);
        rep.not_visible.extend(r.not_visible);
        rep.dropped_rows += r.dropped_rows;
    }
    Ok((all, rep))
}

fn observe_segment(
    cam: &RsCamera,
    seg: &Segment,
    spec: &ObservationSpec,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<crate::camera::CurveSample>, usize)> {
    let n = spec.points_per_line;
    let (lo, hi) = visible_row_span(cam, seg)?;
    if hi - lo < n as f64 {
        return None;
    }
    let coeffs = curve_coefficients(cam, &seg.line()).ok()?;
    let rows: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * (hi - lo) / n as f64).collect();
    let out = sample_curve(cam, &coeffs, &rows);
    if out.samples.len() < n {
        return None;
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut samples = out.samples;
    let last = samples.len() - 1;
    for (k, s) in samples.iter_mut().enumerate() {
        let noisy = match spec.noise_mode {
            NoiseMode::AllSamples => true,
            NoiseMode::Endpoints => k == 0 || k == last,
        };
        // Draw unconditionally so the stream does not depend on the mode.
        let (du, dv, da): (f64, f64, f64) = (normal.sample(rng), normal.sample(rng), normal.sample(rng));
        if noisy {
            s.u += spec.noise_px * du;
            s.v = (s.v + spec.noise_px * dv).clamp(0.0, cam.height as f64 - 1e-9);
            s.s = Rotation2::new(spec.tangent_noise_rad * da) * s.s;
        }
    }
    Some((samples, out.dropped.len()))
}

/// Largest distance of a sample from the chord through the first and last
/// sample.
pub fn chord_deviation(samples: &[crate::camera::CurveSample]) -> f64 {
    if samples.len() < 3 {
        return 0.0;
    }
    let p = Vector2::new(samples[0].u, samples[0].v);
    let q = samples.last().map(|s| Vector2::new(s.u, s.v)).unwrap();
    let d = (q - p).normalize();
    samples
        .iter()
        .map(|s| {
            let x = Vector2::new(s.u, s.v) - p;
            (x.x * d.y - x.y * d.x).abs()
        })
        .fold(0.0, f64::max)
}

/// Cameras and lines of one parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub cameras: Vec<RsCamera>,
    pub lines: Vec<PluckerLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSpec {
    pub rot_deg: f64,
    pub trans_frac: f64,
    pub line_angle_deg: f64,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self { rot_deg: 0.5, trans_frac: 0.01, line_angle_deg: 0.5, seed: 0 }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let e: [f64; 3] = UnitSphere.sample(rng);
    Vector3::from(e)
}

fn random_orthogonal_unit(a: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let e = random_unit(rng);
        let o = e - a * (a.dot(&e) / a.norm_squared());
        if o.norm() > 1e-3 {
            return o.normalize();
        }
    }
}

/// Perturbed initialization. Camera 0 (the gauge camera) is left untouched;
/// every other camera gets a rotation of exactly `rot_deg` about a random
/// axis and a translation offset of `trans_frac·‖t₀‖` in a random direction
/// (camera 1 keeps its baseline to camera 0). Lines are rotated by exactly
/// `line_angle_deg` about a random axis orthogonal to their direction through
/// their point closest to the origin. All velocities are zeroed.
pub fn perturb_initialization(truth: &SceneState, spec: &PerturbSpec) -> SceneState {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rot = spec.rot_deg.to_radians();
    let cameras = truth
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let axis = random_unit(&mut rng);
            let dir = random_unit(&mut rng);
            let mut out = *c;
            out.omega = Vector3::zeros();
            out.d = Vector3::zeros();
            if i == 0 {
                return out;
            }
            out.r0 = Rotation3::from_axis_angle(&Unit::new_normalize(axis), rot) * c.r0;
            let norm = c.t0.norm();
            out.t0 = c.t0 + dir * (spec.trans_frac * norm);
            if i == 1 {
                // Keep the baseline to camera 0, which fixes the scale.
                let c0 = truth.cameras[0].center();
                let baseline = (c.t0 + c.r0 * c0).norm();
                let q = out.t0 + out.r0 * c0;
                if q.norm() > 0.0 {
                    out.t0 = q * (baseline / q.norm()) - out.r0 * c0;
                }
            }
            out
        })
        .collect();
    let ang = spec.line_angle_deg.to_radians();
    let lines = truth
        .lines
        .iter()
        .map(|l| {
            let axis = random_orthogonal_unit(&l.a, &mut rng);
            if ang == 0.0 {
                return *l;
            }
            let p = l.closest_point_to_origin();
            let a = so3_exp(&(axis * ang)) * l.a;
            PluckerLine::new(p.cross(&a), a)
        })
        .collect();
    SceneState { cameras, lines }
}

/// Apply `x ↦ sRx + t` to a state. Camera poses and velocities follow so that
/// every projection is unchanged.
pub fn similarity_transform(state: &SceneState, s: f64, r: &Rotation3<f64>, t: &Vector3<f64>) -> SceneState {
    let cameras = state
        .cameras
        .iter()
        .map(|c| {
            // X_c = R_c X + t_c with X = (Y - t)/s Rᵀ  →  scaled camera frame.
            let r0 = c.r0 * r.inverse();
            let t0 = c.t0 * s - r0 * t;
            let d = c.d * s - c.omega.cross(&(r0 * t));
            RsCamera { r0, t0, d, ..*c }
        })
        .collect();
    let lines = state
        .lines
        .iter()
        .map(|l| PluckerLine::new(l.n * s, l.a).transformed(r.matrix(), t))
        .collect();
    SceneState { cameras, lines }
}
