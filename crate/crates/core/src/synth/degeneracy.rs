//! Constructed degenerate parameter sets.
//!
//! Each case pairs a healthy ground truth (with its noiseless observations)
//! with a parameter set that explains the same observations with zero
//! distance residuals.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate_observations, make_cube_scene, ObservationSpec, Scene, SceneState};
use crate::camera::{intrinsics, RsCamera};
use crate::error::{Error, Result};
use crate::geometry::PluckerLine;
use crate::residuals::LineObservation;

#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateCase {
    pub scene: Scene,
    pub truth: SceneState,
    pub degenerate: SceneState,
    pub observations: Vec<LineObservation>,
}

const FOCAL: f64 = 500.0;
const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;

/// Cameras with `R = I` in a row along x, at height `y` and depth `z`,
/// with small seeded velocities (`d_z = 0` when `planar_motion`).
fn row_of_cameras(n: usize, cy: f64, y: f64, z: f64, planar_motion: bool, seed: u64) -> Vec<RsCamera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = intrinsics(FOCAL, WIDTH as f64 / 2.0, cy);
    (0..n)
        .map(|i| {
            let x = (i as f64 / (n - 1) as f64 - 0.5) * 3.0;
            let c = Vector3::new(x, y, z);
            let mut omega = Vector3::from_fn(|_, _| rng.random_range(-2e-4..2e-4));
            let mut d = Vector3::new(5e-4, rng.random_range(-2e-4..2e-4), rng.random_range(-2e-4..2e-4));
            if planar_motion {
                omega = Vector3::zeros();
                d.z = 0.0;
            }
            RsCamera::new(k, Rotation3::identity(), -c, WIDTH, HEIGHT).with_velocity(omega, d)
        })
        .collect()
}

fn truth_and_observations(scene: Scene, cameras: Vec<RsCamera>) -> Result<(SceneState, Vec<LineObservation>)> {
    let (obs, _) = generate_observations(&scene, &cameras, &ObservationSpec::default())?;
    if obs.is_empty() {
        return Err(Error::InvalidInput("degenerate case has no visible lines".into()));
    }
    Ok((SceneState { cameras, lines: scene.plucker_lines() }, obs))
}

/// Plane case. Ground truth: six cameras with `R = I` and the principal
/// point on the top image row (`c_y = 0`), at height y = −1.5 above a cube.
/// Degenerate set: same poses, `ω = (−1/f, 0, 0)`, `d = ω × t₀` (camera
/// centers fixed over the frame), and the lines sheared into the plane
/// y = −1.5 that contains every camera center. Every image row then lies
/// in the plane of every line, so each curve is identically zero.
pub fn plane_case(seed: u64) -> Result<DegenerateCase> {
    let cy_plane = -1.5;
    let scene = make_cube_scene(2.0, Vector3::zeros(), seed);
    let cameras = row_of_cameras(6, 0.0, cy_plane, -6.0, false, seed);
    let (truth, observations) = truth_and_observations(scene.clone(), cameras)?;
    let omega = Vector3::new(-1.0 / FOCAL, 0.0, 0.0);
    let cameras = truth
        .cameras
        .iter()
        .map(|c| {
            let mut c = *c;
            c.omega = omega;
            c.d = omega.cross(&c.t0);
            c
        })
        .collect();
    // Shear chosen so that no squashed line passes through a camera center.
    let (alpha, beta) = (0.35, 0.45);
    let squash = |p: &Vector3<f64>| Vector3::new(p.x + alpha * p.y, cy_plane, p.z + beta * p.y);
    let lines = scene
        .lines
        .iter()
        .map(|s| PluckerLine::through(&squash(&s.p0), &squash(&s.p1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DegenerateCase { scene, truth, degenerate: SceneState { cameras, lines }, observations })
}

/// Collapse depth used by [`xy_case`], as a multiple of the focal length.
pub const XY_COLLAPSE_DY: f64 = 0.012;

/// Point onto which every pixel of column `u` collapses for a camera with
/// `R = I`, `ω = 0`, `d = (0, dy, 0)`: the rays of all rows in that column
/// meet at `C₀ + ((u − c_x)·dy, −c_y·dy, f·dy)`.
pub fn xy_collapse_point(cam: &RsCamera, u: f64) -> Vector3<f64> {
    let dy = cam.d.y;
    let (f, cx, cy) = (cam.k[(0, 0)], cam.k[(0, 2)], cam.k[(1, 2)]);
    cam.center() + Vector3::new((u - cx) * dy, -cy * dy, f * dy)
}

/// Horizontal residual `u − u_proj` of a point projected with the pose of
/// row `v`.
pub fn point_row_residual(cam: &RsCamera, p: &Vector3<f64>, u: f64, v: f64) -> Option<f64> {
    let (r, t) = cam.instantaneous_pose(v);
    let x = cam.k * (r * p + t);
    if x.z.abs() < 1e-12 {
        return None;
    }
    Some(u - x.x / x.z)
}

/// X-Y pure-translation case. Ground truth: six cameras with `R = I` in a
/// row along x, `ω = 0` and `d_z = 0`, in front of a cube. Degenerate set:
/// same poses, `d = (0, dy, 0)` for every camera, and every line replaced by
/// the single x-parallel line through [`xy_collapse_point`], which all
/// cameras share because their centers differ only in x.
pub fn xy_case(seed: u64) -> Result<DegenerateCase> {
    let scene = make_cube_scene(2.0, Vector3::zeros(), seed);
    let cameras = row_of_cameras(6, HEIGHT as f64 / 2.0, -0.5, -6.0, true, seed);
    let (truth, observations) = truth_and_observations(scene.clone(), cameras)?;
    let cameras: Vec<RsCamera> = truth
        .cameras
        .iter()
        .map(|c| {
            let mut c = *c;
            c.omega = Vector3::zeros();
            c.d = Vector3::new(0.0, XY_COLLAPSE_DY, 0.0);
            c
        })
        .collect();
    let p0 = xy_collapse_point(&cameras[0], 0.0);
    let collapsed = PluckerLine::through(&p0, &(p0 + Vector3::x()))?;
    let lines = vec![collapsed; scene.lines.len()];
    Ok(DegenerateCase { scene, truth, degenerate: SceneState { cameras, lines }, observations })
}

/// Two views moving along a straight line with the first at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewCase {
    pub truth: [RsCamera; 2],
    pub degenerate: [RsCamera; 2],
    pub line: PluckerLine,
    pub degenerate_line: PluckerLine,
    pub s: f64,
    pub r: f64,
}

/// Two-view pure translation case. Both views have `R = I`, `ω = 0` and
/// linear velocity `d`; the second view has translation `t2`. The
/// degenerate set scales the velocity by `r` and the line to
/// `(n/s, a/(s·r))`, which leaves the first view's curve unchanged up to
/// the factor `1/s`.
pub fn two_view_case(line: &PluckerLine, d: &Vector3<f64>, t2: &Vector3<f64>, s: f64, r: f64) -> Result<TwoViewCase> {
    if s == 0.0 || r == 0.0 {
        return Err(Error::InvalidInput("s and r must be nonzero".into()));
    }
    let k = intrinsics(FOCAL, WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0);
    let view = |t: &Vector3<f64>, d: &Vector3<f64>| {
        RsCamera::new(k, Rotation3::identity(), *t, WIDTH, HEIGHT).with_velocity(Vector3::zeros(), *d)
    };
    let truth = [view(&Vector3::zeros(), d), view(t2, d)];
    let degenerate = [view(&Vector3::zeros(), &(d * r)), view(t2, &(d * r))];
    let degenerate_line = PluckerLine::new(line.n / s, line.a / (s * r));
    Ok(TwoViewCase { truth, degenerate, line: *line, degenerate_line, s, r })
}

/// Baseline and velocity lying in the plane through the origin and `line`,
/// so both camera centers and the line are coplanar.
pub fn coplanar_motion(line: &PluckerLine) -> (Vector3<f64>, Vector3<f64>) {
    let a = line.a.normalize();
    let m = line.n.cross(&line.a).normalize();
    let t2 = a * 0.3 + m * 0.4;
    (t2, t2.normalize() * 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::curve_coefficients;
    use crate::residuals::perpendicular_distance;
    use crate::solver::structure_scores;

    #[test]
    fn plane_case_zero_distance_and_vanishing_gradient() {
        let case = plane_case(0).unwrap();
        assert!(case.observations.len() >= 30);
        let (_, flat) = structure_scores(&case.degenerate.lines);
        assert!(flat < 0.01);
        for o in &case.observations {
            let cam = &case.degenerate.cameras[o.camera_id];
            let c = curve_coefficients(cam, &case.degenerate.lines[o.line_id]).unwrap();
            for s in &o.samples {
                let d = perpendicular_distance(&c, s.u, s.v).unwrap();
                assert!(d.abs() < 1e-10, "{d}");
                let g = c.gradient(s.u, s.v);
                assert!(g.norm() <= 1e-10 * c.max_abs() * (1.0 + s.u.abs() + s.v.abs()).powi(2));
            }
        }
    }

    #[test]
    fn xy_case_collapses_columns_to_points() {
        let case = xy_case(0).unwrap();
        for c in &case.truth.cameras {
            assert_eq!(c.omega, Vector3::zeros());
            assert_eq!(c.d.z, 0.0);
        }
        for o in &case.observations {
            let cam = &case.degenerate.cameras[o.camera_id];
            for s in &o.samples {
                let p = xy_collapse_point(cam, s.u);
                assert!(point_row_residual(cam, &p, s.u, s.v).unwrap().abs() < 1e-9);
                assert!(case.degenerate.lines[0].klein_residual().abs() < 1e-12);
                let c = curve_coefficients(cam, &case.degenerate.lines[o.line_id]).unwrap();
                assert!(perpendicular_distance(&c, s.u, s.v).unwrap().abs() < 1e-9);
            }
        }
        let (_, flat) = structure_scores(&case.degenerate.lines);
        assert!(flat < 0.01);
    }

    #[test]
    fn two_view_scaling() {
        let line = PluckerLine::through(&Vector3::new(-1.0, 0.5, 4.0), &Vector3::new(1.5, -0.3, 6.0)).unwrap();
        let d = Vector3::new(1e-3, 4e-4, -2e-4);
        let case = two_view_case(&line, &d, &Vector3::new(0.4, -0.1, 0.05), 2.0, 3.0).unwrap();
        let c0 = curve_coefficients(&case.truth[0], &case.line).unwrap();
        let c1 = curve_coefficients(&case.degenerate[0], &case.degenerate_line).unwrap();
        for i in 0..9 {
            assert!((c0.c[i] / case.s - c1.c[i]).abs() <= 1e-10 * c0.max_abs());
        }
    }
}
