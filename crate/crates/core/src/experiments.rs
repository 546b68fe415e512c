//! Monte-Carlo trials on the synthetic cube benchmark and one-axis sweeps.
//!
//! A trial draws noisy observations and a perturbed initialization with
//! seeds derived from the trial index, solves, and evaluates against the
//! ground truth. Trials run in parallel; results are collected in trial
//! order, so outputs do not depend on scheduling.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, median};
use crate::residuals::ResidualConfig;
use crate::solver::{build_problem, levenberg_marquardt, GaugeSpec, SolveMode, SolveOptions, Termination};
use crate::synth::{
    generate_observations, make_cube_scene, make_trajectory, perturb_initialization, ObservationSpec, PerturbSpec,
    Scene, SceneState, TrajectorySpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub cube_side: f64,
    pub cube_center: [f64; 3],
    pub scene_seed: u64,
    pub num_lines: usize,
    pub trajectory: TrajectorySpec,
    /// Per-trial seeds replace `observation.seed`.
    pub observation: ObservationSpec,
    /// Per-trial seeds replace `perturb.seed`.
    pub perturb: PerturbSpec,
    pub residual: ResidualConfig,
    pub solver: SolveOptions,
    pub mode: SolveMode,
    pub gauge: GaugeSpec,
    pub trials: usize,
    /// Trial `k` uses perturbation seed `seed + k` and observation seed
    /// `seed + 1000 + k`.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cube_side: 2.0,
            cube_center: [0.0; 3],
            scene_seed: 0,
            num_lines: 12,
            trajectory: TrajectorySpec::default(),
            observation: ObservationSpec::default(),
            perturb: PerturbSpec::default(),
            residual: ResidualConfig::default(),
            solver: SolveOptions::default(),
            mode: SolveMode::Rs,
            gauge: GaugeSpec::default(),
            trials: 50,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.num_lines) {
            return Err(Error::InvalidInput(format!("num_lines must be in 1..=12, got {}", self.num_lines)));
        }
        if !(self.cube_side > 0.0) {
            return Err(Error::InvalidInput("cube_side must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        self.trajectory.validate()?;
        self.observation.validate()?;
        self.residual.validate()
    }

    pub fn scene(&self) -> Scene {
        make_cube_scene(self.cube_side, Vector3::from(self.cube_center), self.scene_seed).truncated(self.num_lines)
    }

    /// Ground-truth scene state.
    pub fn truth(&self) -> Result<(Scene, SceneState)> {
        self.validate()?;
        let scene = self.scene();
        let cameras = make_trajectory(&self.trajectory, &scene)?;
        let lines = scene.plucker_lines();
        Ok((scene, SceneState { cameras, lines }))
    }

    pub fn observation_spec(&self, trial: usize) -> ObservationSpec {
        ObservationSpec { seed: self.seed.wrapping_add(1000 + trial as u64), ..self.observation }
    }

    pub fn perturb_spec(&self, trial: usize) -> PerturbSpec {
        PerturbSpec { seed: self.seed.wrapping_add(trial as u64), ..self.perturb }
    }
}

/// Outcome of one trial. Error fields are NaN when the trial failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub rotation: f64,
    pub translation: f64,
    pub line_direction: f64,
    pub line_distance: f64,
    pub ate: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

impl TrialResult {
    fn failed(trial: usize, e: Error) -> Self {
        Self {
            trial,
            rotation: f64::NAN,
            translation: f64::NAN,
            line_direction: f64::NAN,
            line_distance: f64::NAN,
            ate: f64::NAN,
            final_cost: f64::NAN,
            iterations: 0,
            termination: None,
            error: Some(e.to_string()),
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, scene: &Scene, truth: &SceneState, trial: usize) -> Result<TrialResult> {
    let (obs, _) = generate_observations(scene, &truth.cameras, &cfg.observation_spec(trial))?;
    let init = perturb_initialization(truth, &cfg.perturb_spec(trial));
    let p = build_problem(&init.cameras, &init.lines, &obs, cfg.residual, cfg.gauge.clone(), cfg.mode)?;
    let r = levenberg_marquardt(&p, &cfg.solver)?;
    let e = evaluate(&truth.cameras, &truth.lines, &r.final_state.cameras, &r.final_state.lines)?;
    Ok(TrialResult {
        trial,
        rotation: e.rotation_median,
        translation: e.translation_median,
        line_direction: e.line_dir_median,
        line_distance: e.line_dist_median,
        ate: e.ate_median,
        final_cost: r.final_cost,
        iterations: r.iterations,
        termination: Some(r.termination),
        error: None,
    })
}

/// Run `cfg.trials` trials. Per-trial failures are recorded, not raised.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    let (scene, truth) = cfg.truth()?;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|k| run_trial(cfg, &scene, &truth, k).unwrap_or_else(|e| TrialResult::failed(k, e)))
        .collect())
}

/// Medians over the successful trials of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub failures: usize,
    pub rotation: f64,
    pub translation: f64,
    pub line_direction: f64,
    pub line_distance: f64,
    pub ate: f64,
    pub final_cost: f64,
}

pub fn summarize(results: &[TrialResult]) -> Summary {
    let ok: Vec<&TrialResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let med = |f: fn(&TrialResult) -> f64| median(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Summary {
        trials: results.len(),
        failures: results.len() - ok.len(),
        rotation: med(|r| r.rotation),
        translation: med(|r| r.translation),
        line_direction: med(|r| r.line_direction),
        line_distance: med(|r| r.line_distance),
        ate: med(|r| r.ate),
        final_cost: med(|r| r.final_cost),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Noise,
    PointsPerLine,
    NumLines,
    Lambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Noise => "noise",
            SweepAxis::PointsPerLine => "points_per_line",
            SweepAxis::NumLines => "num_lines",
            SweepAxis::Lambda => "lambda",
        }
    }

    pub fn from_name(name: &str) -> Option<SweepAxis> {
        [SweepAxis::Noise, SweepAxis::PointsPerLine, SweepAxis::NumLines, SweepAxis::Lambda]
            .into_iter()
            .find(|a| a.name() == name)
    }

    /// Default values: noise {0.1, 0.5, 1.0, 1.5, 2.0} px, points 2…10,
    /// lines 4…12, λ {0.1, 1, 10}.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Noise => vec![0.1, 0.5, 1.0, 1.5, 2.0],
            SweepAxis::PointsPerLine => (2..=10).map(f64::from).collect(),
            SweepAxis::NumLines => (4..=12).map(f64::from).collect(),
            SweepAxis::Lambda => vec![0.1, 1.0, 10.0],
        }
    }

    /// Copy of `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("{} takes integer values, got {v}", self.name())))
            }
        };
        match self {
            SweepAxis::Noise => out.observation.noise_px = value,
            SweepAxis::PointsPerLine => out.observation.points_per_line = count(value)?,
            SweepAxis::NumLines => out.num_lines = count(value)?,
            SweepAxis::Lambda => out.residual.lambda = value,
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Summary,
}

/// One summary row per value, in the order given.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    let cfgs = values.iter().map(|&v| axis.apply(cfg, v)).collect::<Result<Vec<_>>>()?;
    cfgs.iter()
        .zip(values)
        .map(|(c, &value)| Ok(SweepRow { value, summary: summarize(&run_trials(c)?) }))
        .collect()
}

/// CSV header of [`sweep_csv_rows`].
pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "axis",
    "value",
    "trials",
    "failures",
    "rot",
    "trans",
    "lr",
    "ld",
    "ate",
    "final_cost",
];

pub fn sweep_csv_rows(axis: SweepAxis, rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let s = &r.summary;
            vec![
                axis.name().to_string(),
                format!("{}", r.value),
                s.trials.to_string(),
                s.failures.to_string(),
                crate::io::sig17(s.rotation),
                crate::io::sig17(s.translation),
                crate::io::sig17(s.line_direction),
                crate::io::sig17(s.line_distance),
                crate::io::sig17(s.ate),
                crate::io::sig17(s.final_cost),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig { trials: 3, ..Default::default() }
    }

    #[test]
    fn noiseless_trials_recover_truth() {
        let r = run_trials(&small()).unwrap();
        assert_eq!(r.iter().map(|t| t.trial).collect::<Vec<_>>(), vec![0, 1, 2]);
        for t in &r {
            assert!(t.error.is_none());
            assert!(t.final_cost < 1e-10, "{t:?}");
            assert!(t.rotation < 1e-6 && t.line_distance < 1e-6, "{t:?}");
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = ExperimentConfig { observation: ObservationSpec { noise_px: 0.5, ..Default::default() }, ..small() };
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn summary_skips_failures() {
        let mut r = run_trials(&small()).unwrap();
        r.push(TrialResult::failed(3, Error::InvalidInput("x".into())));
        let s = summarize(&r);
        assert_eq!((s.trials, s.failures), (4, 1));
        assert!(s.rotation.is_finite());
    }

    #[test]
    fn axis_application_and_validation() {
        let cfg = small();
        assert_eq!(SweepAxis::NumLines.apply(&cfg, 5.0).unwrap().num_lines, 5);
        assert_eq!(SweepAxis::PointsPerLine.apply(&cfg, 7.0).unwrap().observation.points_per_line, 7);
        assert!(SweepAxis::PointsPerLine.apply(&cfg, 1.0).is_err());
        assert!(SweepAxis::NumLines.apply(&cfg, 4.5).is_err());
        assert_eq!(SweepAxis::Lambda.apply(&cfg, 10.0).unwrap().residual.lambda, 10.0);
        for a in [SweepAxis::Noise, SweepAxis::PointsPerLine, SweepAxis::NumLines, SweepAxis::Lambda] {
            assert_eq!(SweepAxis::from_name(a.name()), Some(a));
        }
        assert_eq!(SweepAxis::Noise.default_values().len(), 5);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"trials": 2, "bogus": 1}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"trials": 2, "observation": {"noise_px": 0.5}}"#).unwrap();
        assert_eq!((c.trials, c.observation.noise_px, c.num_lines), (2, 0.5, 12));
    }
}
