//! Rolling-shutter camera and the cubic curve a 3D line traces on its image.
//!
//! Row `v` is measured in pixels from the top scanline; the pose at row `v` is
//! `R(v) = (I + v[ω]×)R₀`, `t(v) = t₀ + v·d`, so `ω` and `d` are per-scanline
//! rates. All curve quantities live in pixel coordinates.

use nalgebra::{Matrix3, Matrix3x4, Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{skew, PluckerLine};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsCamera {
    pub k: Matrix3<f64>,
    pub r0: Rotation3<f64>,
    pub t0: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub d: Vector3<f64>,
    pub height: u32,
    pub width: u32,
}

pub fn intrinsics(f: f64, cx: f64, cy: f64) -> Matrix3<f64> {
    Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
}

impl RsCamera {
    /// Static camera with the given pose.
    pub fn new(k: Matrix3<f64>, r0: Rotation3<f64>, t0: Vector3<f64>, width: u32, height: u32) -> Self {
        Self {
            k,
            r0,
            t0,
            omega: Vector3::zeros(),
            d: Vector3::zeros(),
            height,
            width,
        }
    }

    pub fn with_velocity(mut self, omega: Vector3<f64>, d: Vector3<f64>) -> Self {
        self.omega = omega;
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.k;
        if k[(2, 2)] != 1.0 || k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidInput("intrinsics must be upper triangular with K[2][2] = 1".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidInput("image must be at least 2x2".into()));
        }
        let m = self.r0.matrix();
        if (m.transpose() * m - Matrix3::identity()).amax() > 1e-9 {
            return Err(Error::InvalidInput("R0 is not orthogonal".into()));
        }
        let finite = self
            .t0
            .iter()
            .chain(self.omega.iter())
            .chain(self.d.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite camera parameters".into()));
        }
        Ok(())
    }

    /// `‖ω‖·height < π/2`, the range where the linearized rotation is reasonable.
    pub fn within_velocity_bound(&self) -> bool {
        self.omega.norm() * self.height as f64 <= std::f64::consts::FRAC_PI_2
    }

    /// `(R(v), t(v))`. `R(v)` is not exactly orthogonal for `ω ≠ 0`.
    pub fn instantaneous_pose(&self, v: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let r = (Matrix3::identity() + skew(&self.omega) * v) * self.r0.matrix();
        (r, self.t0 + self.d * v)
    }

    /// `(P₀, Q)` with `P(v) = P₀ + v·Q`.
    pub fn projection_matrices(&self) -> (Matrix3x4<f64>, Matrix3x4<f64>) {
        let mut m0 = Matrix3x4::zeros();
        m0.fixed_view_mut::<3, 3>(0, 0).copy_from(self.r0.matrix());
        m0.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t0);
        let mut m1 = Matrix3x4::zeros();
        m1.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(skew(&self.omega) * self.r0.matrix()));
        m1.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.d);
        (self.k * m0, self.k * m1)
    }

    /// Camera center at row 0.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r0.inverse() * self.t0)
    }

    /// Translational velocity expressed relative to the row-0 camera frame,
    /// `d' = d - ω × t₀`, so that `R(v)X + t(v) = (I + v[ω]×)X_c + v·d'`.
    pub fn camera_frame_velocity(&self) -> Vector3<f64> {
        self.d - self.omega.cross(&self.t0)
    }

    /// Project a world point; solves for the row at which it is exposed.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let (p0, q) = self.projection_matrices();
        let ph = p.push(1.0);
        let x0 = p0 * ph;
        let x1 = q * ph;
        let guess = x0.y / x0.z;
        // x1z v² + (x0z - x1y) v - x0y = 0
        let (a, b, c) = (x1.z, x0.z - x1.y, -x0.y);
        let v = if a.abs() < 1e-14 * (b.abs() + c.abs()).max(1e-300) {
            -c / b
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            let r1 = q / a;
            let r2 = c / q;
            if (r1 - guess).abs() < (r2 - guess).abs() {
                r1
            } else {
                r2
            }
        };
        let x = x0 + x1 * v;
        if !(x.z > 0.0) || !v.is_finite() {
            return None;
        }
        Some(Vector2::new(x.x / x.z, v))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// `cof(K) = det(K)·K⁻ᵀ`, the map taking a normalized-coordinate line to pixels
/// such that `K[m]×Kᵀ = [cof(K) m]×`.
pub fn cofactor(k: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = k.column(1).cross(&k.column(2));
    let c1 = k.column(2).cross(&k.column(0));
    let c2 = k.column(0).cross(&k.column(1));
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Nine coefficients of the projected curve
/// `c1 v³ + c2 uv² + (c3+c4) v² + c5 uv + (c6+c7) v + c8 u + c9 = 0`.
///
/// `c[0]` is `c1`. The virtual line at row `v` is `(l1, l2, l3)` with
/// `l1 = c8 + v c5 + v² c2`, `l2 = c6 + v c3 + v² c1`, `l3 = c9 + v c7 + v² c4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveCoeffs {
    pub c: [f64; 9],
}

impl CurveCoeffs {
    /// Assemble from the three virtual-line vectors of `A₁`, `A₂`, `A₃`
    /// (each `(A³², A¹³, A²¹)`).
    pub fn from_line_polynomial(l_a1: &Vector3<f64>, l_a2: &Vector3<f64>, l_a3: &Vector3<f64>) -> Self {
        Self {
            c: [
                l_a3.y, l_a3.x, l_a2.y, l_a3.z, l_a2.x, l_a1.y, l_a2.z, l_a1.x, l_a1.z,
            ],
        }
    }

    /// Inverse of [`CurveCoeffs::from_line_polynomial`].
    pub fn line_polynomial(&self) -> [Vector3<f64>; 3] {
        let c = &self.c;
        [
            Vector3::new(c[7], c[5], c[8]),
            Vector3::new(c[4], c[2], c[6]),
            Vector3::new(c[1], c[0], c[3]),
        ]
    }

    /// Closed form in the row-0 camera frame: with `L_c = (n, a)`,
    /// `m(v) = n + v(ω×n + d'×a) + v²(ω(ω·n) + d'×(ω×a))` and `l(v) = cof(K) m(v)`.
    pub fn from_camera_line(k: &Matrix3<f64>, omega: &Vector3<f64>, d_cam: &Vector3<f64>, lc: &PluckerLine) -> Self {
        let cof = cofactor(k);
        let (n, a) = (&lc.n, &lc.a);
        let m1 = omega.cross(n) + d_cam.cross(a);
        let m2 = omega * omega.dot(n) + d_cam.cross(&omega.cross(a));
        Self::from_line_polynomial(&(cof * n), &(cof * m1), &(cof * m2))
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { c: self.c.map(|x| x * s) }
    }

    pub fn virtual_line(&self, v: f64) -> Vector3<f64> {
        virtual_line_at_row(self, v)
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        curve_value(self, u, v)
    }

    pub fn gradient(&self, u: f64, v: f64) -> Vector2<f64> {
        curve_gradient(self, u, v)
    }

    /// Derivative of the virtual line with respect to the row.
    pub fn virtual_line_rate(&self, v: f64) -> Vector3<f64> {
        let [_, l_a2, l_a3] = self.line_polynomial();
        l_a2 + l_a3 * (2.0 * v)
    }
}

fn vee_antisymmetric(m: &Matrix3<f64>) -> Vector3<f64> {
    // (A³², A¹³, A²¹) of the antisymmetric part.
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Symmetric remainders of `A₁, A₂, A₃` relative to their magnitude.
pub fn curve_matrices(cam: &RsCamera, line: &PluckerLine) -> [Matrix3<f64>; 3] {
    let (p0, q) = cam.projection_matrices();
    let l = line.matrix();
    let a1 = p0 * l * p0.transpose();
    let a2 = p0 * l * q.transpose() + q * l * p0.transpose();
    let a3 = q * l * q.transpose();
    [a1, a2, a3]
}

/// Curve coefficients from `[l_rs]× = P₀LP₀ᵀ + v(P₀LQᵀ + QLP₀ᵀ) + v²QLQᵀ`.
pub fn curve_coefficients(cam: &RsCamera, line: &PluckerLine) -> Result<CurveCoeffs> {
    let [a1, a2, a3] = curve_matrices(cam, line);
    let c = CurveCoeffs::from_line_polynomial(
        &vee_antisymmetric(&a1),
        &vee_antisymmetric(&a2),
        &vee_antisymmetric(&a3),
    );
    let (p0, q) = cam.projection_matrices();
    let scale = (p0.norm() + q.norm()).powi(2) * line.norm();
    if c.max_abs() <= 1e-12 * scale {
        return Err(Error::DegenerateProjection);
    }
    Ok(c)
}

pub fn virtual_line_at_row(c: &CurveCoeffs, v: f64) -> Vector3<f64> {
    let c = &c.c;
    let v2 = v * v;
    Vector3::new(
        c[7] + v * c[4] + v2 * c[1],
        c[5] + v * c[2] + v2 * c[0],
        c[8] + v * c[6] + v2 * c[3],
    )
}

pub fn curve_value(c: &CurveCoeffs, u: f64, v: f64) -> f64 {
    let c = &c.c;
    let v2 = v * v;
    c[0] * v2 * v + c[1] * u * v2 + (c[2] + c[3]) * v2 + c[4] * u * v + (c[5] + c[6]) * v + c[7] * u + c[8]
}

/// `(∂ι/∂u, ∂ι/∂v)`.
pub fn curve_gradient(c: &CurveCoeffs, u: f64, v: f64) -> Vector2<f64> {
    let c = &c.c;
    let du = c[1] * v * v + c[4] * v + c[7];
    let dv = 3.0 * c[0] * v * v + 2.0 * c[1] * u * v + 2.0 * (c[2] + c[3]) * v + c[4] * u + (c[5] + c[6]);
    Vector2::new(du, dv)
}

/// Unit tangent orthogonal to the gradient, oriented with positive v-component
/// (positive u-component for horizontal tangents).
pub fn oriented_tangent(grad: &Vector2<f64>) -> Option<Vector2<f64>> {
    let norm = grad.norm();
    if !(norm > 0.0) {
        return None;
    }
    let mut t = Vector2::new(-grad.y, grad.x) / norm;
    if t.y < -1e-12 || (t.y.abs() <= 1e-12 && t.x < 0.0) {
        t = -t;
    }
    Some(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub u: f64,
    pub v: f64,
    pub s: Vector2<f64>,
    pub has_tangent: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ProjectedSamples {
    pub samples: Vec<CurveSample>,
    pub dropped: Vec<(f64, Error)>,
}

/// Sample the projected curve at the requested rows, solving `u` from the
/// virtual line of each row.
pub fn project_line_to_samples(cam: &RsCamera, line: &PluckerLine, rows: &[f64]) -> Result<ProjectedSamples> {
    let coeffs = curve_coefficients(cam, line)?;
    Ok(sample_curve(cam, &coeffs, rows))
}

pub fn sample_curve(cam: &RsCamera, coeffs: &CurveCoeffs, rows: &[f64]) -> ProjectedSamples {
    let scale = coeffs.max_abs();
    let mut out = ProjectedSamples::default();
    for &v in rows {
        let l = coeffs.virtual_line(v);
        if l.x.abs() <= 1e-10 * scale {
            out.dropped.push((v, Error::VerticalTangent(v)));
            continue;
        }
        let u = -(l.y * v + l.z) / l.x;
        if !cam.contains(u, v) {
            out.dropped.push((v, Error::RowNotVisible(v)));
            continue;
        }
        let g = coeffs.gradient(u, v);
        let (s, has_tangent) = match oriented_tangent(&g) {
            Some(s) => (s, true),
            None => (Vector2::zeros(), false),
        };
        out.samples.push(CurveSample { u, v, s, has_tangent });
    }
    out
}

/// Global-shutter image line `vee(K[R,t] L [R,t]ᵀ Kᵀ)`.
pub fn gs_line_projection(
    r: &Rotation3<f64>,
    t: &Vector3<f64>,
    k: &Matrix3<f64>,
    line: &PluckerLine,
) -> Result<Vector3<f64>> {
    let lc = line.transformed(r.matrix(), t);
    if lc.n.norm() <= 1e-12 * (line.n.norm() + t.norm() * line.a.norm()) {
        return Err(Error::DegenerateProjection);
    }
    Ok(cofactor(k) * lc.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-s..s))
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> RsCamera {
        let k = Matrix3::new(
            rng.random_range(300.0..700.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(250.0..350.0),
            0.0,
            rng.random_range(300.0..700.0),
            rng.random_range(200.0..280.0),
            0.0,
            0.0,
            1.0,
        );
        RsCamera::new(k, so3_exp(&v3(rng, 1.0)), v3(rng, 2.0), 640, 480)
            .with_velocity(v3(rng, 1e-3), v3(rng, 1e-2))
    }

    fn random_line(rng: &mut ChaCha8Rng) -> PluckerLine {
        PluckerLine::through(&v3(rng, 3.0), &v3(rng, 3.0)).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn instantaneous_pose_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cam = random_camera(&mut rng);
        let (r, t) = cam.instantaneous_pose(0.0);
        assert_eq!(r, *cam.r0.matrix());
        assert_eq!(t, cam.t0);
        let stat = cam.with_velocity(Vector3::zeros(), Vector3::zeros());
        let (r, t) = stat.instantaneous_pose(123.0);
        assert_eq!(r, *cam.r0.matrix());
        assert_eq!(t, cam.t0);
        // First-order agreement with the exact rotation.
        for &v in &[1e-2, 1e-1, 1.0] {
            let (r, _) = cam.instantaneous_pose(v);
            let exact = so3_exp(&(cam.omega * v)) * cam.r0;
            let err = (r - exact.matrix()).amax();
            let w2 = (cam.omega * v).norm_squared();
            assert!(err <= w2, "v={v} err={err} bound={w2}");
        }
    }

    #[test]
    fn projection_matrix_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cam = random_camera(&mut rng);
        let (_, q) = cam.with_velocity(Vector3::zeros(), Vector3::zeros()).projection_matrices();
        assert_eq!(q, Matrix3x4::zeros());

        let unit = RsCamera::new(Matrix3::identity(), Rotation3::identity(), Vector3::zeros(), 10, 10)
            .with_velocity(Vector3::z(), Vector3::zeros());
        let (_, q) = unit.projection_matrices();
        assert_eq!(q.fixed_view::<3, 3>(0, 0), skew(&Vector3::z()));
        assert_eq!(q.column(3), Vector3::zeros());

        for _ in 0..20 {
            let x = v3(&mut rng, 3.0);
            let v = rng.random_range(0.0..480.0);
            let (p0, q) = cam.projection_matrices();
            let lhs = (p0 + q * v) * x.push(1.0);
            let (r, t) = cam.instantaneous_pose(v);
            let rhs = cam.k * (r * x + t);
            assert!((lhs - rhs).amax() <= 1e-9 * rhs.amax());
        }
    }

    #[test]
    fn curve_matrices_are_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            let l = random_line(&mut rng);
            for a in curve_matrices(&cam, &l) {
                let sym = (a + a.transpose()) * 0.5;
                assert!(sym.amax() <= 1e-9 * a.amax().max(1e-300));
            }
        }
    }

    #[test]
    fn closed_form_matches_matrix_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let l = random_line(&mut rng);
            let a = curve_coefficients(&cam, &l).unwrap();
            let lc = l.transformed(cam.r0.matrix(), &cam.t0);
            let b = CurveCoeffs::from_camera_line(&cam.k, &cam.omega, &cam.camera_frame_velocity(), &lc);
            let s = a.max_abs();
            for i in 0..9 {
                assert!((a.c[i] - b.c[i]).abs() <= 1e-10 * s, "coefficient {i}");
            }
        }
    }

    #[test]
    fn static_camera_reduces_to_gs_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let cam = random_camera(&mut rng).with_velocity(Vector3::zeros(), Vector3::zeros());
            let l = random_line(&mut rng);
            let c = curve_coefficients(&cam, &l).unwrap();
            for i in [0, 1, 2, 3, 4, 6] {
                assert_eq!(c.c[i], 0.0);
            }
            let gs = gs_line_projection(&cam.r0, &cam.t0, &cam.k, &l).unwrap();
            let from_curve = Vector3::new(c.c[7], c.c[5], c.c[8]);
            let cross = gs.normalize().cross(&from_curve.normalize());
            assert!(cross.norm() < 1e-10);
            for _ in 0..5 {
                let v = rng.random_range(0.0..480.0);
                assert_eq!(c.virtual_line(v), from_curve);
                assert_eq!(c.gradient(3.0, v), Vector2::new(c.c[7], c.c[5]));
            }
        }
    }

    #[test]
    fn gs_projection_matches_two_point_join() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            let p = v3(&mut rng, 3.0);
            let q = v3(&mut rng, 3.0);
            let l = PluckerLine::through(&p, &q).unwrap();
            let (p0, _) = cam.projection_matrices();
            let join = (p0 * p.push(1.0)).cross(&(p0 * q.push(1.0)));
            let gs = gs_line_projection(&cam.r0, &cam.t0, &cam.k, &l).unwrap();
            assert!(gs.normalize().cross(&join.normalize()).norm() < 1e-9);
        }
        let through_origin = PluckerLine::through(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            gs_line_projection(&Rotation3::identity(), &Vector3::zeros(), &Matrix3::identity(), &through_origin),
            Err(Error::DegenerateProjection)
        );
    }

    #[test]
    fn virtual_line_expands_to_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let c = CurveCoeffs { c: std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
            let u = rng.random_range(-10.0..10.0);
            let v = rng.random_range(-10.0..10.0);
            let l = c.virtual_line(v);
            let lhs = l.x * u + l.y * v + l.z;
            let rhs = c.value(u, v);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 1e3);
        }
        let zero = CurveCoeffs { c: [0.0; 9] };
        assert_eq!(zero.value(3.0, 4.0), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let c = CurveCoeffs { c: std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
            let u = rng.random_range(-3.0..3.0);
            let v = rng.random_range(-3.0..3.0);
            let h = 1e-5;
            let du = (c.value(u + h, v) - c.value(u - h, v)) / (2.0 * h);
            let dv = (c.value(u, v + h) - c.value(u, v - h)) / (2.0 * h);
            let g = c.gradient(u, v);
            assert!(rel(g.x, du) < 1e-6 || (g.x - du).abs() < 1e-9);
            assert!(rel(g.y, dv) < 1e-6 || (g.y - dv).abs() < 1e-9);
        }
    }

    #[test]
    fn samples_lie_on_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 200 {
            let cam = random_camera(&mut rng);
            let l = random_line(&mut rng);
            let Ok(c) = curve_coefficients(&cam, &l) else { continue };
            let rows: Vec<f64> = (0..10).map(|i| 24.0 + 48.0 * i as f64).collect();
            let out = sample_curve(&cam, &c, &rows);
            let s = c.max_abs() * 640f64.powi(3);
            for smp in &out.samples {
                assert!(c.value(smp.u, smp.v).abs() < 1e-8 * s);
                assert!((smp.s.norm() - 1.0).abs() < 1e-12);
                assert!(smp.s.dot(&c.gradient(smp.u, smp.v)).abs() < 1e-9 * c.gradient(smp.u, smp.v).norm());
                checked += 1;
            }
        }
    }

    #[test]
    fn point_projection_lies_on_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let l = random_line(&mut rng);
            let c = curve_coefficients(&cam, &l).unwrap();
            let p = l.closest_point_to_origin() + l.direction() * rng.random_range(-2.0..2.0);
            if let Some(x) = cam.project_point(&p) {
                let (r, t) = cam.instantaneous_pose(x.y);
                let y = cam.k * (r * p + t);
                assert!((y.x / y.z - x.x).abs() < 1e-6 && (y.y / y.z - x.y).abs() < 1e-6);
                let g = c.gradient(x.x, x.y).norm();
                assert!(c.value(x.x, x.y).abs() <= 1e-7 * g.max(1e-300) * (1.0 + x.norm()));
            }
        }
    }

    fn collinearity_residual(samples: &[CurveSample]) -> f64 {
        // Largest distance to the chord through the first and last sample.
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

    #[test]
    fn static_samples_collinear_moving_samples_curved() {
        let k = intrinsics(500.0, 320.0, 240.0);
        let l = PluckerLine::through(&Vector3::new(-1.0, -2.0, 6.0), &Vector3::new(0.5, 2.0, 5.0)).unwrap();
        let rows: Vec<f64> = (0..9).map(|i| 20.0 + 55.0 * i as f64).collect();
        let still = RsCamera::new(k, Rotation3::identity(), Vector3::zeros(), 640, 480);
        let s = project_line_to_samples(&still, &l, &rows).unwrap();
        assert!(s.samples.len() >= 5);
        let r = collinearity_residual(&s.samples);
        assert!(r < 1e-9, "residual {r}");
        let gs = gs_line_projection(&still.r0, &still.t0, &k, &l).unwrap();
        for smp in &s.samples {
            assert!((gs.x * smp.u + gs.y * smp.v + gs.z).abs() / gs.xy().norm() < 1e-9);
        }
        let moving = still.with_velocity(Vector3::new(0.0, 1e-3, 5e-4), Vector3::zeros());
        let m = project_line_to_samples(&moving, &l, &rows).unwrap();
        assert!(m.samples.len() >= 5);
        assert!(collinearity_residual(&m.samples) > 1e-3);
    }

    #[test]
    fn vertical_image_line_samples() {
        // Line projecting to u = 100 for a static identity camera.
        let k = intrinsics(500.0, 320.0, 240.0);
        let x = (100.0 - 320.0) / 500.0 * 5.0;
        let l = PluckerLine::through(&Vector3::new(x, -1.0, 5.0), &Vector3::new(x, 1.0, 5.0)).unwrap();
        let cam = RsCamera::new(k, Rotation3::identity(), Vector3::zeros(), 640, 480);
        let s = project_line_to_samples(&cam, &l, &[0.0, 100.0, 479.0]).unwrap();
        assert_eq!(s.samples.len(), 3);
        for smp in &s.samples {
            assert!((smp.u - 100.0).abs() < 1e-12);
            assert_eq!(smp.s, Vector2::new(0.0, 1.0));
        }
    }

    #[test]
    fn invisible_rows_are_reported() {
        let k = intrinsics(500.0, 320.0, 240.0);
        let l = PluckerLine::through(&Vector3::new(-2.0, -1.0, 5.0), &Vector3::new(2.0, 1.0, 5.0)).unwrap();
        let cam = RsCamera::new(k, Rotation3::identity(), Vector3::zeros(), 640, 480);
        let s = project_line_to_samples(&cam, &l, &[0.0]).unwrap();
        assert!(s.samples.is_empty());
        assert!(matches!(s.dropped[0].1, Error::RowNotVisible(_)));
    }
}
