//! Spatial line representations and rotation utilities.
//!
//! A line is carried as Plücker coordinates `(n, a)` where `a` is the direction
//! and `n = p × a` is the moment for any point `p` on the line. The minimal
//! orthonormal form `(U, W)` is used for unconstrained optimization updates.

use nalgebra::{Matrix3, Matrix4, Rotation2, Rotation3, Vector3, Vector4, Vector6};

use crate::camera::RsCamera;
use crate::error::{Error, Result};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from a rotation vector to a rotation matrix (Rodrigues).
pub fn so3_exp(psi: &Vector3<f64>) -> Rotation3<f64> {
    let theta2 = psi.norm_squared();
    let k = skew(psi);
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation3::from_matrix_unchecked(Matrix3::identity() + k * a + k * k * b)
}

/// Logarithm of a rotation, the inverse of [`so3_exp`] for angles below π.
pub fn so3_log(r: &Rotation3<f64>) -> Vector3<f64> {
    r.scaled_axis()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerLine {
    pub n: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl PluckerLine {
    pub fn new(n: Vector3<f64>, a: Vector3<f64>) -> Self {
        Self { n, a }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            n: v.fixed_rows::<3>(0).into_owned(),
            a: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.n);
        v.fixed_rows_mut::<3>(3).copy_from(&self.a);
        v
    }

    /// Line through two homogeneous points with unit last component.
    ///
    /// Follows `L = Pa Pbᵀ - Pb Paᵀ`: the direction is `Pa - Pb` and the
    /// moment is `Pa × (Pa - Pb)`.
    pub fn from_points(pa: &Vector4<f64>, pb: &Vector4<f64>) -> Result<Self> {
        if !(pa.iter().chain(pb.iter()).all(|x| x.is_finite())) {
            return Err(Error::InvalidInput("non-finite point".into()));
        }
        if (pa.w - 1.0).abs() > 1e-12 || (pb.w - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("points must have unit last component".into()));
        }
        let a = pa.xyz();
        let b = pb.xyz();
        if (a - b).norm() < 1e-12 {
            return Err(Error::CoincidentPoints);
        }
        Ok(Self { n: -a.cross(&b), a: a - b })
    }

    /// Line through two euclidean points.
    pub fn through(p: &Vector3<f64>, q: &Vector3<f64>) -> Result<Self> {
        Self::from_points(&p.push(1.0), &q.push(1.0))
    }

    /// The 4×4 skew Plücker matrix `[[n]×, a; -aᵀ, 0]`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.n));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.a);
        m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-self.a.transpose()));
        m
    }

    /// Plücker matrix entries `(l12, l13, l23, l14, l24, l34)`.
    pub fn matrix_entries(&self) -> [f64; 6] {
        [-self.n.z, self.n.y, -self.n.x, self.a.x, self.a.y, self.a.z]
    }

    pub fn from_matrix_entries(l: &[f64; 6]) -> Self {
        Self {
            n: Vector3::new(-l[2], l[1], -l[0]),
            a: Vector3::new(l[3], l[4], l[5]),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n * s, a: self.a * s }
    }

    pub fn norm(&self) -> f64 {
        (self.n.norm_squared() + self.a.norm_squared()).sqrt()
    }

    /// `n·a` of the unit-normalized 6-vector.
    pub fn klein_residual(&self) -> f64 {
        let s = self.norm_squared_or_one();
        self.n.dot(&self.a) / s
    }

    fn norm_squared_or_one(&self) -> f64 {
        let s = self.n.norm_squared() + self.a.norm_squared();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Unit 6-norm with the first non-negligible direction entry positive
    /// (falling back to the moment for lines at infinity).
    pub fn canonical(&self) -> Self {
        let norm = self.norm();
        if norm == 0.0 {
            return *self;
        }
        let unit = self.scaled(1.0 / norm);
        let pivot = unit
            .a
            .iter()
            .chain(unit.n.iter())
            .copied()
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(1.0);
        if pivot < 0.0 {
            unit.scaled(-1.0)
        } else {
            unit
        }
    }

    /// Distance between the canonical forms of two lines.
    pub fn canonical_distance(&self, other: &Self) -> f64 {
        (self.canonical().to_vector() - other.canonical().to_vector()).norm()
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.a.normalize()
    }

    /// Point of the line closest to the origin, `a × n / |a|²`.
    pub fn closest_point_to_origin(&self) -> Vector3<f64> {
        self.a.cross(&self.n) / self.a.norm_squared()
    }

    /// Transform a line by `x ↦ M x + t` with `(n, a) ↦ (M n + t × M a, M a)`.
    /// Exact for rotations; for the row pose `M = (I + v[ω]×)R` it drops the
    /// `v²ωωᵀ` part of the exact moment map `cof(M)`.
    pub fn transformed(&self, m: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let ma = m * self.a;
        Self { n: m * self.n + t.cross(&ma), a: ma }
    }

    pub fn to_orthonormal(&self) -> Result<OrthonormalLine> {
        plucker_to_orthonormal(self)
    }
}

/// Minimal line parameterization: `U ∈ SO(3)`, `W ∈ SO(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalLine {
    pub u: Rotation3<f64>,
    pub w: Rotation2<f64>,
}

impl OrthonormalLine {
    pub fn w1(&self) -> f64 {
        self.w.matrix()[(0, 0)]
    }

    pub fn w2(&self) -> f64 {
        self.w.matrix()[(1, 0)]
    }

    pub fn to_plucker(&self) -> PluckerLine {
        orthonormal_to_plucker(self)
    }

    /// Right-multiplicative update `U ← U·Exp(δψ)`, `W ← W·Rot(δφ)`.
    pub fn updated(&self, delta: &Vector4<f64>) -> Self {
        update_orthonormal(self, delta)
    }

    /// Project `U` and `W` back onto their groups.
    pub fn renormalized(&self) -> Self {
        let u = Rotation3::from_matrix_eps(self.u.matrix(), 1e-15, 100, self.u);
        let w = Rotation2::new(self.w.angle());
        Self { u, w }
    }
}

pub fn plucker_to_orthonormal(line: &PluckerLine) -> Result<OrthonormalLine> {
    let nn = line.n.norm();
    let an = line.a.norm();
    let scale = line.norm();
    if scale < 1e-300 || (nn <= 1e-12 * scale && an <= 1e-12 * scale) {
        return Err(Error::DegenerateLine);
    }
    if an <= 1e-12 * scale {
        // Line at infinity: no direction.
        return Err(Error::DegenerateLine);
    }
    let u2 = line.a / an;
    let u1 = if nn > 1e-12 * scale {
        line.n / nn
    } else {
        // Line through the origin: any unit vector orthogonal to the direction.
        let imin = u2.iamin();
        let mut e = Vector3::zeros();
        e[imin] = 1.0;
        u2.cross(&e).normalize()
    };
    // Remove residual Klein violation before completing the frame.
    let u1 = (u1 - u2 * u1.dot(&u2)).normalize();
    let u3 = u1.cross(&u2);
    let u = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u1, u2, u3]));
    let w = Rotation2::new(an.atan2(nn));
    Ok(OrthonormalLine { u, w })
}

pub fn orthonormal_to_plucker(tau: &OrthonormalLine) -> PluckerLine {
    let m = tau.u.matrix();
    PluckerLine {
        n: m.column(0) * tau.w1(),
        a: m.column(1) * tau.w2(),
    }
}

pub fn update_orthonormal(tau: &OrthonormalLine, delta: &Vector4<f64>) -> OrthonormalLine {
    let psi = delta.xyz();
    OrthonormalLine {
        u: tau.u * so3_exp(&psi),
        w: tau.w * Rotation2::new(delta.w),
    }
}

/// Transform a world line into the camera frame at image row `v` using the
/// linearized rolling-shutter motion `(I + v[ω]×)R₀`, `t₀ + v d`.
pub fn transform_line_to_camera(lw: &PluckerLine, cam: &RsCamera, v: f64) -> PluckerLine {
    let (m, t) = cam.instantaneous_pose(v);
    lw.transformed(&m, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_line(rng: &mut ChaCha8Rng) -> PluckerLine {
        let p: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let q: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        PluckerLine::through(&p, &q).unwrap()
    }

    #[test]
    fn line_through_origin_has_zero_moment() {
        let l = PluckerLine::from_points(&Vector4::new(0.0, 0.0, 0.0, 1.0), &Vector4::new(1.0, 0.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(l.n, Vector3::zeros());
        assert_relative_eq!(l.a.normalize().x.abs(), 1.0);
    }

    #[test]
    fn offset_line_moment() {
        let l = PluckerLine::from_points(&Vector4::new(0.0, 1.0, 0.0, 1.0), &Vector4::new(1.0, 1.0, 0.0, 1.0))
            .unwrap();
        // direction Pa - Pb = (-1,0,0), moment = Pa × dir = (0,0,1); same line as ((0,0,-1),(1,0,0)).
        assert_eq!(l.a, Vector3::new(-1.0, 0.0, 0.0));
        assert_eq!(l.n, Vector3::new(0.0, 0.0, 1.0));
        let expected = PluckerLine::new(Vector3::new(0.0, 0.0, -1.0), Vector3::new(1.0, 0.0, 0.0));
        assert!(l.canonical_distance(&expected) < 1e-15);
        assert_eq!(l.n.dot(&l.a), 0.0);
    }

    #[test]
    fn coincident_points_rejected() {
        let p = Vector4::new(1.0, 2.0, 3.0, 1.0);
        assert_eq!(PluckerLine::from_points(&p, &p), Err(Error::CoincidentPoints));
    }

    #[test]
    fn plucker_matrix_matches_outer_product_definition() {
        let pa = Vector4::new(0.3, -1.2, 2.0, 1.0);
        let pb = Vector4::new(1.5, 0.4, -0.7, 1.0);
        let l = PluckerLine::from_points(&pa, &pb).unwrap();
        let expected = pa * pb.transpose() - pb * pa.transpose();
        assert_relative_eq!(l.matrix(), expected, epsilon = 1e-14);
        let e = l.matrix_entries();
        assert_eq!(PluckerLine::from_matrix_entries(&e), l);
    }

    #[test]
    fn orthonormal_of_simple_line() {
        let l = PluckerLine::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0));
        let tau = l.to_orthonormal().unwrap();
        let expected = Matrix3::from_columns(&[Vector3::z(), Vector3::x(), Vector3::y()]);
        assert_relative_eq!(*tau.u.matrix(), expected, epsilon = 1e-15);
        assert_relative_eq!(tau.w.angle(), std::f64::consts::FRAC_PI_4, epsilon = 1e-15);

        let tau2 = l.scaled(2.0).to_orthonormal().unwrap();
        assert_relative_eq!(*tau2.u.matrix(), expected, epsilon = 1e-15);
        assert_relative_eq!(tau2.w.angle(), tau.w.angle(), epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_to_plucker_examples() {
        let tau = OrthonormalLine { u: Rotation3::identity(), w: Rotation2::identity() };
        let l = tau.to_plucker();
        assert_eq!(l.n, Vector3::x());
        assert_eq!(l.a, Vector3::zeros());

        let tau = OrthonormalLine {
            u: Rotation3::identity(),
            w: Rotation2::new(std::f64::consts::FRAC_PI_4),
        };
        let l = tau.to_plucker();
        let expected = PluckerLine::new(Vector3::x(), Vector3::y());
        assert!(l.canonical_distance(&expected) < 1e-15);
    }

    #[test]
    fn line_through_origin_converts() {
        let l = PluckerLine::new(Vector3::zeros(), Vector3::new(0.0, 2.0, 0.0));
        let tau = l.to_orthonormal().unwrap();
        let m = tau.u.matrix();
        assert_relative_eq!((m.transpose() * m), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
        assert!(tau.to_plucker().canonical_distance(&l) < 1e-12);
        assert_eq!(
            PluckerLine::new(Vector3::zeros(), Vector3::zeros()).to_orthonormal(),
            Err(Error::DegenerateLine)
        );
    }

    #[test]
    fn round_trip_random_lines() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let l = random_line(&mut rng).scaled(rng.random_range(-5.0..5.0));
            let tau = l.to_orthonormal().unwrap();
            let m = tau.u.matrix();
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-9);
            assert!((m.determinant() - 1.0).abs() < 1e-9);
            let back = tau.to_plucker();
            assert!(back.klein_residual().abs() < 1e-10);
            assert!(back.canonical_distance(&l) < 1e-10);
            let tau2 = back.to_orthonormal().unwrap();
            assert!((tau2.u.matrix() - tau.u.matrix()).amax() < 1e-8);
            assert!((tau2.w.angle() - tau.w.angle()).abs() < 1e-8);
        }
    }

    #[test]
    fn update_identity_and_composition() {
        let l = PluckerLine::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0));
        let tau = l.to_orthonormal().unwrap();
        assert_eq!(tau.updated(&Vector4::zeros()).to_plucker(), tau.to_plucker());
        let step = Vector4::new(0.0, 0.0, 0.0, 0.1);
        let twice = tau.updated(&step).updated(&step);
        let once = tau.updated(&(step * 2.0));
        assert_relative_eq!(twice.w.angle(), once.w.angle(), epsilon = 1e-14);
    }

    #[test]
    fn so3_exp_examples() {
        assert_eq!(*so3_exp(&Vector3::zeros()).matrix(), Matrix3::identity());
        let r = so3_exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let psi = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let prod = so3_exp(&psi) * so3_exp(&-psi);
            assert!((prod.matrix() - Matrix3::identity()).amax() < 1e-12);
            let r = so3_exp(&psi);
            assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).amax() < 1e-10);
            // agrees with nalgebra's axis-angle construction
            assert!((r.matrix() - Rotation3::new(psi).matrix()).amax() < 1e-12);
        }
        let tiny = Vector3::new(1e-10, -2e-10, 3e-10);
        assert!((so3_exp(&tiny).matrix() - Rotation3::new(tiny).matrix()).amax() < 1e-18);
    }
}
