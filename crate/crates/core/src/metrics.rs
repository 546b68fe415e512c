//! Pose, line and trajectory error metrics.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::Serialize;

use crate::camera::RsCamera;
use crate::error::{Error, Result};
use crate::geometry::PluckerLine;

/// Angle of `R_gᵀR_d`. Evaluated as `atan2(sin, cos)` of the same trace
/// expression, which keeps full precision for tiny angles.
pub fn rotation_error(rg: &Rotation3<f64>, rd: &Rotation3<f64>) -> f64 {
    let m = rg.matrix().transpose() * rd.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    sin.atan2(cos)
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Angle between translation vectors; `None` when either norm is below 1e-12.
pub fn translation_error(tg: &Vector3<f64>, td: &Vector3<f64>) -> Option<f64> {
    if tg.norm() <= 1e-12 || td.norm() <= 1e-12 {
        return None;
    }
    Some(angle_between(tg, td))
}

/// Angle between line directions folded into `[0, π/2]`.
pub fn line_direction_error(ag: &Vector3<f64>, ad: &Vector3<f64>) -> f64 {
    let t = angle_between(ag, ad);
    t.min(std::f64::consts::PI - t)
}

/// Distance between the lines `(P_g, a_g)` and `(P_d, a_d)`: the common
/// perpendicular length for skew lines, the point-to-line distance from
/// `P_d` to the ground-truth line when the directions are parallel.
pub fn line_distance_error(ag: &Vector3<f64>, pg: &Vector3<f64>, ad: &Vector3<f64>, pd: &Vector3<f64>) -> f64 {
    let c = ag.cross(ad);
    let cn = c.norm();
    let scale = ag.norm() * ad.norm();
    if cn > 1e-10 * scale {
        (c.dot(&(pd - pg))).abs() / cn
    } else {
        let a = ag / ag.norm();
        let r = pd - pg;
        (r - a * a.dot(&r)).norm()
    }
}

/// Direction and distance errors between two Plücker lines, using the point
/// closest to the origin as `P`.
pub fn line_errors(lg: &PluckerLine, ld: &PluckerLine) -> (f64, f64) {
    let dir = line_direction_error(&lg.a, &ld.a);
    let dist = line_distance_error(&lg.a, &lg.closest_point_to_origin(), &ld.a, &ld.closest_point_to_origin());
    (dir, dist)
}

/// Least-squares similarity (or rigid, with `with_scale = false`) transform
/// `y ≈ s R x + t` over paired points.
pub fn align_similarity(
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
    with_scale: bool,
) -> Result<(f64, Rotation3<f64>, Vector3<f64>)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("alignment needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (b - my) * (a - mx).transpose();
        var_x += (a - mx).norm_squared();
    }
    cov /= n;
    var_x /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * vt;
    let s = if with_scale && var_x > 0.0 {
        (svd.singular_values.component_mul(&sign.diagonal())).sum() / var_x
    } else {
        1.0
    };
    let t = my - r * mx * s;
    Ok((s, Rotation3::from_matrix_unchecked(r), t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AteResult {
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Rotation, translation and uniform scale.
    Sim3,
    /// Rotation and translation.
    Se3,
    /// Raw distances.
    None,
}

/// Median and maximum camera-center distance after aligning the estimate to
/// the ground truth.
pub fn ate(est: &[Vector3<f64>], gt: &[Vector3<f64>], alignment: Alignment) -> Result<AteResult> {
    let (s, r, t) = match alignment {
        Alignment::Sim3 => align_similarity(est, gt, true)?,
        Alignment::Se3 => align_similarity(est, gt, false)?,
        Alignment::None => {
            if est.len() != gt.len() {
                return Err(Error::LengthMismatch(est.len(), gt.len()));
            }
            (1.0, Rotation3::identity(), Vector3::zeros())
        }
    };
    let d: Vec<f64> = est.iter().zip(gt).map(|(e, g)| (r * e * s + t - g).norm()).collect();
    Ok(AteResult {
        median: median(&d).unwrap_or(0.0),
        max: d.iter().cloned().fold(0.0, f64::max),
    })
}

/// Median ATE with similarity alignment.
pub fn ate_median(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    ate(est, gt, Alignment::Sim3).map(|a| a.median)
}

/// Median of the finite values; mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rotation_err: Vec<f64>,
    pub rotation_median: f64,
    /// `None` where a translation norm vanishes.
    pub translation_err: Vec<Option<f64>>,
    pub translation_median: f64,
    pub line_dir_err: Vec<f64>,
    pub line_dir_median: f64,
    pub line_dist_err: Vec<f64>,
    pub line_dist_median: f64,
    pub ate_median: f64,
    pub ate_max: f64,
}

pub fn evaluate(
    gt_cams: &[RsCamera],
    gt_lines: &[PluckerLine],
    est_cams: &[RsCamera],
    est_lines: &[PluckerLine],
) -> Result<EvalReport> {
    if gt_cams.len() != est_cams.len() {
        return Err(Error::LengthMismatch(gt_cams.len(), est_cams.len()));
    }
    if gt_lines.len() != est_lines.len() {
        return Err(Error::LengthMismatch(gt_lines.len(), est_lines.len()));
    }
    let rotation_err: Vec<f64> = gt_cams.iter().zip(est_cams).map(|(g, e)| rotation_error(&g.r0, &e.r0)).collect();
    let translation_err: Vec<Option<f64>> =
        gt_cams.iter().zip(est_cams).map(|(g, e)| translation_error(&g.t0, &e.t0)).collect();
    let (line_dir_err, line_dist_err): (Vec<f64>, Vec<f64>) =
        gt_lines.iter().zip(est_lines).map(|(g, e)| line_errors(g, e)).unzip();
    let trans: Vec<f64> = translation_err.iter().flatten().cloned().collect();
    let centers_gt: Vec<Vector3<f64>> = gt_cams.iter().map(|c| c.center()).collect();
    let centers_est: Vec<Vector3<f64>> = est_cams.iter().map(|c| c.center()).collect();
    let a = if gt_cams.len() >= 2 {
        ate(&centers_est, &centers_gt, Alignment::Sim3)?
    } else {
        AteResult { median: 0.0, max: 0.0 }
    };
    Ok(EvalReport {
        rotation_median: median(&rotation_err).unwrap_or(0.0),
        translation_median: median(&trans).unwrap_or(0.0),
        line_dir_median: median(&line_dir_err).unwrap_or(0.0),
        line_dist_median: median(&line_dist_err).unwrap_or(0.0),
        rotation_err,
        translation_err,
        line_dir_err,
        line_dist_err,
        ate_median: a.median,
        ate_max: a.max,
    })
}
