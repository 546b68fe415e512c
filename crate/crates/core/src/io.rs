//! File formats: JSON documents for scenes, cameras, observations and
//! solutions, TUM trajectories and CSV tables.
//!
//! JSON floats are written with 17 significant digits so files round-trip
//! bit-exactly; field order follows the struct declarations.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{CurveSample, RsCamera};
use crate::error::{Error, Result};
use crate::geometry::PluckerLine;
use crate::residuals::LineObservation;
use crate::synth::{Scene, SceneState, Segment};

/// Compact JSON with every float as `{:.16e}` (17 significant digits).
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write!(w, "{}", sig17(v))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        write!(w, "{}", sig17(v as f64))
    }
}

/// A float with 17 significant digits in exponent notation.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite value in {what}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentJson {
    pub p0: [f64; 3],
    pub p1: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub lines: Vec<SegmentJson>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl From<&Scene> for SceneFile {
    fn from(s: &Scene) -> Self {
        SceneFile {
            lines: s.lines.iter().map(|l| SegmentJson { p0: l.p0.into(), p1: l.p1.into() }).collect(),
            rng_seed: s.rng_seed,
        }
    }
}

impl SceneFile {
    pub fn to_scene(&self) -> Result<Scene> {
        let lines = self
            .lines
            .iter()
            .map(|l| {
                finite(&l.p0, "scene")?;
                finite(&l.p1, "scene")?;
                let seg = Segment { p0: Vector3::from(l.p0), p1: Vector3::from(l.p1) };
                if seg.length() <= 0.0 {
                    return Err(Error::CoincidentPoints);
                }
                Ok(seg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene { lines, rng_seed: self.rng_seed })
    }
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

fn from_row_major(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

/// One camera; `K` and `R0` are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R0")]
    pub r0: [f64; 9],
    pub t0: [f64; 3],
    pub omega: [f64; 3],
    pub d: [f64; 3],
    pub h: u32,
    pub w: u32,
}

impl From<&RsCamera> for CameraJson {
    fn from(c: &RsCamera) -> Self {
        CameraJson {
            k: row_major(&c.k),
            r0: row_major(c.r0.matrix()),
            t0: c.t0.into(),
            omega: c.omega.into(),
            d: c.d.into(),
            h: c.height,
            w: c.width,
        }
    }
}

impl CameraJson {
    pub fn to_camera(&self) -> Result<RsCamera> {
        for (v, what) in [(&self.k[..], "K"), (&self.r0[..], "R0"), (&self.t0[..], "t0"), (&self.omega[..], "omega"), (&self.d[..], "d")] {
            finite(v, what)?;
        }
        let r = from_row_major(&self.r0);
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || r.determinant() <= 0.0 {
            return Err(Error::InvalidInput("R0 is not a rotation".into()));
        }
        let cam = RsCamera::new(
            from_row_major(&self.k),
            Rotation3::from_matrix_unchecked(r),
            Vector3::from(self.t0),
            self.w,
            self.h,
        )
        .with_velocity(Vector3::from(self.omega), Vector3::from(self.d));
        cam.validate()?;
        Ok(cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamerasFile {
    pub cameras: Vec<CameraJson>,
}

impl CamerasFile {
    pub fn from_cameras(cams: &[RsCamera]) -> Self {
        CamerasFile { cameras: cams.iter().map(CameraJson::from).collect() }
    }

    pub fn to_cameras(&self) -> Result<Vec<RsCamera>> {
        self.cameras.iter().map(|c| c.to_camera()).collect()
    }
}

/// One sample; `su`, `sv` are null when no tangent was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleJson {
    pub u: f64,
    pub v: f64,
    pub su: Option<f64>,
    pub sv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationJson {
    pub cam: usize,
    pub line: usize,
    pub samples: Vec<SampleJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsFile {
    /// Noise level the observations were generated with, if known.
    #[serde(default)]
    pub noise_px: Option<f64>,
    pub observations: Vec<ObservationJson>,
}

impl ObservationsFile {
    pub fn from_observations(obs: &[LineObservation], noise_px: Option<f64>) -> Self {
        ObservationsFile {
            noise_px,
            observations: obs
                .iter()
                .map(|o| ObservationJson {
                    cam: o.camera_id,
                    line: o.line_id,
                    samples: o
                        .samples
                        .iter()
                        .map(|s| SampleJson {
                            u: s.u,
                            v: s.v,
                            su: s.has_tangent.then_some(s.s.x),
                            sv: s.has_tangent.then_some(s.s.y),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_observations(&self) -> Result<Vec<LineObservation>> {
        self.observations
            .iter()
            .map(|o| {
                let samples = o
                    .samples
                    .iter()
                    .map(|s| {
                        finite(&[s.u, s.v], "observations")?;
                        let (s_vec, has_tangent) = match (s.su, s.sv) {
                            (Some(x), Some(y)) => {
                                let t = Vector2::new(x, y);
                                finite(&[x, y], "observations")?;
                                if t.norm() == 0.0 {
                                    return Err(Error::InvalidInput("zero tangent".into()));
                                }
                                (t.normalize(), true)
                            }
                            (None, None) => (Vector2::new(1.0, 0.0), false),
                            _ => return Err(Error::InvalidInput("tangent needs both su and sv".into())),
                        };
                        Ok(CurveSample { u: s.u, v: s.v, s: s_vec, has_tangent })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LineObservation { camera_id: o.cam, line_id: o.line, samples })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineJson {
    pub n: [f64; 3],
    pub a: [f64; 3],
}

/// Cameras and Plücker lines of an estimate (or of a ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    #[serde(default)]
    pub noise_px: Option<f64>,
    pub cameras: Vec<CameraJson>,
    pub lines: Vec<LineJson>,
}

impl SolutionFile {
    pub fn from_state(state: &SceneState, noise_px: Option<f64>) -> Self {
        SolutionFile {
            noise_px,
            cameras: state.cameras.iter().map(CameraJson::from).collect(),
            lines: state.lines.iter().map(|l| LineJson { n: l.n.into(), a: l.a.into() }).collect(),
        }
    }

    pub fn to_state(&self) -> Result<SceneState> {
        let cameras = self.cameras.iter().map(|c| c.to_camera()).collect::<Result<Vec<_>>>()?;
        let lines = self
            .lines
            .iter()
            .map(|l| {
                finite(&l.n, "lines")?;
                finite(&l.a, "lines")?;
                let line = PluckerLine::new(Vector3::from(l.n), Vector3::from(l.a));
                if line.a.norm() == 0.0 {
                    return Err(Error::DegenerateLine);
                }
                Ok(line)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SceneState { cameras, lines })
    }
}

/// TUM trajectory: one row per camera, `index tx ty tz qx qy qz qw`, the
/// camera center and the camera-to-world rotation of row 0.
pub fn tum_string(cameras: &[RsCamera]) -> String {
    let mut out = String::new();
    for (i, c) in cameras.iter().enumerate() {
        let p = c.center();
        let q = UnitQuaternion::from_rotation_matrix(&c.r0.inverse());
        let q = q.quaternion();
        let vals = [p.x, p.y, p.z, q.i, q.j, q.k, q.w];
        out.push_str(&i.to_string());
        for v in vals {
            out.push(' ');
            out.push_str(&sig17(v));
        }
        out.push('\n');
    }
    out
}

/// One TUM row: index, camera center and camera-to-world rotation.
pub type TumRow = (String, Vector3<f64>, UnitQuaternion<f64>);

/// Parse TUM rows.
pub fn parse_tum(text: &str) -> Result<Vec<TumRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("TUM row needs 8 fields: {l}")));
            }
            let v: Vec<f64> = f[1..]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|e| Error::Parse(format!("{x}: {e}"))))
                .collect::<Result<_>>()?;
            let q = nalgebra::Quaternion::new(v[6], v[3], v[4], v[5]);
            Ok((f[0].to_string(), Vector3::new(v[0], v[1], v[2]), UnitQuaternion::from_quaternion(q)))
        })
        .collect()
}

/// CSV with a header row and LF line endings. Cells are written as given.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Float cells with 17 significant digits and '.' decimals.
pub fn float_cells(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| sig17(*v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::*;

    fn fixture() -> (Scene, Vec<RsCamera>, Vec<LineObservation>) {
        let scene = make_cube_scene(2.0, Vector3::zeros(), 3);
        let cams = make_trajectory(&TrajectorySpec::default(), &scene).unwrap();
        let (obs, _) = generate_observations(&scene, &cams, &ObservationSpec { noise_px: 0.5, seed: 1, ..Default::default() }).unwrap();
        (scene, cams, obs)
    }

    #[test]
    fn sig17_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 5e-324] {
            let s = sig17(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(sig17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn documents_round_trip_exactly() {
        let (scene, cams, obs) = fixture();
        let sf: SceneFile = serde_json::from_str(&to_json_string(&SceneFile::from(&scene)).unwrap()).unwrap();
        assert_eq!(sf.to_scene().unwrap(), scene);
        let cf: CamerasFile = serde_json::from_str(&to_json_string(&CamerasFile::from_cameras(&cams)).unwrap()).unwrap();
        let back = cf.to_cameras().unwrap();
        for (a, b) in back.iter().zip(&cams) {
            assert_eq!(a.k, b.k);
            assert_eq!(a.r0.matrix(), b.r0.matrix());
            assert_eq!((a.t0, a.omega, a.d, a.height, a.width), (b.t0, b.omega, b.d, b.height, b.width));
        }
        let text = to_json_string(&ObservationsFile::from_observations(&obs, Some(0.5))).unwrap();
        let of: ObservationsFile = serde_json::from_str(&text).unwrap();
        let back = of.to_observations().unwrap();
        assert_eq!(back.len(), obs.len());
        for (a, b) in back.iter().zip(&obs) {
            assert_eq!((a.camera_id, a.line_id), (b.camera_id, b.line_id));
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!((x.u, x.v, x.has_tangent), (y.u, y.v, y.has_tangent));
                assert!((x.s - y.s).norm() < 1e-15);
            }
        }
        // Field order is fixed.
        let cam_text = to_json_string(&CameraJson::from(&cams[0])).unwrap();
        let keys: Vec<usize> = ["\"K\"", "\"R0\"", "\"t0\"", "\"omega\"", "\"d\"", "\"h\"", "\"w\""]
            .iter()
            .map(|k| cam_text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(serde_json::from_str::<SceneFile>(r#"{"lines": [], "extra": 1}"#).is_err());
        let sf: SceneFile = serde_json::from_str(r#"{"lines": [{"p0": [0,0,0], "p1": [0,0,0]}]}"#).unwrap();
        assert_eq!(sf.to_scene(), Err(Error::CoincidentPoints));
        let mut cj = CameraJson::from(&fixture().1[0]);
        cj.r0[0] = 2.0;
        assert!(cj.to_camera().is_err());
        let of: ObservationsFile =
            serde_json::from_str(r#"{"observations": [{"cam": 0, "line": 0, "samples": [{"u": 1, "v": 2, "su": 1, "sv": null}]}]}"#)
                .unwrap();
        assert!(of.to_observations().is_err());
    }

    #[test]
    fn tum_rows() {
        let (_, cams, _) = fixture();
        let text = tum_string(&cams);
        assert_eq!(text.lines().count(), cams.len());
        let rows = parse_tum(&text).unwrap();
        for ((idx, p, q), c) in rows.iter().zip(&cams) {
            assert!(idx.parse::<usize>().is_ok());
            assert!((p - c.center()).norm() < 1e-12);
            let r = q.to_rotation_matrix();
            assert!((r.matrix() - c.r0.matrix().transpose()).amax() < 1e-12);
        }
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn csv_layout() {
        let s = csv_string(&["noise", "rot", "trans", "lr", "ld"], &[float_cells(&[0.1, 1e-5, 2e-4, 3e-3, 2e-4])]);
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "noise,rot,trans,lr,ld");
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
    }
}
