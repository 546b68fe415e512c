use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rslba::demos::{plane_demo, two_view_demo, xy_demo};
use rslba::experiments::{sweep, sweep_csv_rows, ExperimentConfig, SweepAxis, SWEEP_CSV_HEADER};
use rslba::gradcheck::{self, Block};
use rslba::io::{
    csv_string, float_cells, read_json, tum_string, write_json, CamerasFile, ObservationsFile, SceneFile,
    SolutionFile,
};
use rslba::metrics::{evaluate, median, EvalReport};
use rslba::residuals::Variant;
use rslba::solver::{build_problem, levenberg_marquardt, SolveMode, SolveOptions, Termination};
use rslba::synth::{generate_observations, perturb_initialization};

/// Exit status of a failed command.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<rslba::Error> for Failure {
    fn from(e: rslba::Error) -> Self {
        use rslba::Error::*;
        let code = match e {
            Io(_) | Parse(_) | InvalidInput(_) | LengthMismatch(..) | MissingReference(_) | CoincidentPoints => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GradcheckSection {
    instances: usize,
    seed: u64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { instances: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DegeneracySection {
    seed: u64,
    /// Scale factors of the two-view case.
    s: f64,
    r: f64,
    solver: SolveOptions,
}

impl Default for DegeneracySection {
    fn default() -> Self {
        DegeneracySection { seed: 0, s: 2.0, r: 3.0, solver: SolveOptions::default() }
    }
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    experiment: ExperimentConfig,
    gradcheck: GradcheckSection,
    degeneracy: DegeneracySection,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Parser)]
#[command(name = "rslba", version, about = "Rolling-shutter line bundle adjustment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cube scene, observations and a perturbed start.
    Simulate(SimulateArgs),
    /// Refine a start against observations.
    Solve(SolveArgs),
    /// Compare solutions with a ground truth.
    Eval(EvalArgs),
    /// Check analytic Jacobians against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run one of the degenerate-configuration demos.
    Degeneracy(DegeneracyArgs),
    /// Monte-Carlo sweep over one configuration axis.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Trial index whose seeds are used.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    points_per_line: Option<usize>,
    #[arg(long)]
    num_lines: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rs,
    GsFrozen,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    E1,
    E2,
    PerpOnly,
    HorizOnly,
    TangentOnly,
}

impl VariantArg {
    fn variant(self) -> Variant {
        match self {
            VariantArg::E1 => Variant::E1PerpTangent,
            VariantArg::E2 => Variant::E2HorizTangent,
            VariantArg::PerpOnly => Variant::PerpOnly,
            VariantArg::HorizOnly => Variant::HorizOnly,
            VariantArg::TangentOnly => Variant::TangentOnly,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding init.json and observations.json.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// A solution.json, or a directory searched for solution.json files one
    /// level deep.
    #[arg(long)]
    solution: PathBuf,
    /// Directory holding the ground-truth cameras.json and scene.json.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Perturb one analytic block to confirm the check detects it.
    #[arg(long)]
    corrupt: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Plane,
    Xy,
    TwoView,
}

#[derive(Args)]
struct DegeneracyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Noise,
    #[value(name = "points_per_line")]
    PointsPerLine,
    #[value(name = "num_lines")]
    NumLines,
    Lambda,
}

impl AxisArg {
    fn axis(self) -> SweepAxis {
        match self {
            AxisArg::Noise => SweepAxis::Noise,
            AxisArg::PointsPerLine => SweepAxis::PointsPerLine,
            AxisArg::NumLines => SweepAxis::NumLines,
            AxisArg::Lambda => SweepAxis::Lambda,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values; defaults depend on the axis.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?.experiment;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.noise {
        cfg.observation.noise_px = n;
    }
    if let Some(p) = a.points_per_line {
        cfg.observation.points_per_line = p;
    }
    if let Some(n) = a.num_lines {
        cfg.num_lines = n;
    }
    let (scene, truth) = cfg.truth()?;
    let spec = cfg.observation_spec(a.trial);
    let (obs, dropped) = generate_observations(&scene, &truth.cameras, &spec)?;
    let init = perturb_initialization(&truth, &cfg.perturb_spec(a.trial));
    create_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    write_json(&a.out.join("scene.json"), &SceneFile::from(&scene))?;
    write_json(&a.out.join("cameras.json"), &CamerasFile::from_cameras(&truth.cameras))?;
    write_json(&a.out.join("observations.json"), &ObservationsFile::from_observations(&obs, Some(spec.noise_px)))?;
    write_json(&a.out.join("init.json"), &SolutionFile::from_state(&init, Some(spec.noise_px)))?;
    let samples: usize = obs.iter().map(|o| o.samples.len()).sum();
    println!(
        "cameras {} lines {} observations {} samples {} not_visible {} noise_px {}",
        truth.cameras.len(),
        truth.lines.len(),
        obs.len(),
        samples,
        dropped.not_visible.len(),
        spec.noise_px
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveReportJson {
    mode: SolveMode,
    variant: Variant,
    lambda: f64,
    iterations: usize,
    termination: Termination,
    initial_cost: f64,
    final_cost: f64,
    final_invalid_rows: usize,
    escapes: usize,
    restarts: usize,
    used_schur: bool,
    cost_trace: Vec<f64>,
    damping_trace: Vec<f64>,
}

fn solve(a: SolveArgs) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?.experiment;
    let dir = a.dir.clone();
    let from_dir = |name: &str| dir.as_ref().map(|d| d.join(name));
    let init_path = a.init.clone().or_else(|| from_dir("init.json"));
    let obs_path = a.observations.clone().or_else(|| from_dir("observations.json"));
    let (Some(init_path), Some(obs_path)) = (init_path, obs_path) else {
        return Err(Failure::usage("give --dir, or both --init and --observations"));
    };
    let out = match a.out.clone().or(dir) {
        Some(o) => o,
        None => return Err(Failure::usage("give --out when --dir is not set")),
    };
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Rs => SolveMode::Rs,
            ModeArg::GsFrozen => SolveMode::GsFrozen,
        };
    }
    if let Some(v) = a.variant {
        cfg.residual.variant = v.variant();
    }
    if let Some(l) = a.lambda {
        cfg.residual.lambda = l;
    }
    if let Some(m) = a.max_iter {
        cfg.solver.max_iter = m;
    }
    cfg.residual.validate()?;
    let init: SolutionFile = read_json(&init_path)?;
    let obs_file: ObservationsFile = read_json(&obs_path)?;
    let start = init.to_state()?;
    let obs = obs_file.to_observations()?;
    let p = build_problem(&start.cameras, &start.lines, &obs, cfg.residual, cfg.gauge.clone(), cfg.mode)?;
    let r = levenberg_marquardt(&p, &cfg.solver)?;
    create_dir(&out)?;
    let noise = obs_file.noise_px.or(init.noise_px);
    write_json(&out.join("solution.json"), &SolutionFile::from_state(&r.final_state, noise))?;
    write_text(&out.join("trajectory.tum"), &tum_string(&r.final_state.cameras))?;
    let report = SolveReportJson {
        mode: cfg.mode,
        variant: cfg.residual.variant,
        lambda: cfg.residual.lambda,
        iterations: r.iterations,
        termination: r.termination,
        initial_cost: r.cost_trace.first().cloned().unwrap_or(f64::NAN),
        final_cost: r.final_cost,
        final_invalid_rows: r.final_invalid_rows,
        escapes: r.escapes,
        restarts: r.restarts,
        used_schur: r.used_schur,
        cost_trace: r.cost_trace.clone(),
        damping_trace: r.damping_trace.clone(),
    };
    write_json(&out.join("report.json"), &report)?;
    println!(
        "iterations {} termination {:?} initial_cost {:e} final_cost {:e}",
        r.iterations, r.termination, report.initial_cost, r.final_cost
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalRun {
    path: String,
    noise_px: Option<f64>,
    report: EvalReport,
}

#[derive(Serialize)]
struct EvalRow {
    noise_px: Option<f64>,
    runs: usize,
    rot: f64,
    trans: f64,
    lr: f64,
    ld: f64,
}

#[derive(Serialize)]
struct EvalOutput {
    runs: Vec<EvalRun>,
    table: Vec<EvalRow>,
}

fn solution_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Failure::usage(format!("no such file or directory: {}", path.display())));
    }
    let mut found = Vec::new();
    let direct = path.join("solution.json");
    if direct.is_file() {
        found.push(direct);
    }
    let entries = fs::read_dir(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut nested: Vec<PathBuf> =
        entries.flatten().map(|e| e.path().join("solution.json")).filter(|p| p.is_file()).collect();
    nested.sort();
    found.extend(nested);
    if found.is_empty() {
        return Err(Failure::usage(format!("no solution.json under {}", path.display())));
    }
    Ok(found)
}

fn eval(a: EvalArgs) -> CmdResult {
    let truth_cams = read_json::<CamerasFile>(&a.truth.join("cameras.json"))?.to_cameras()?;
    let truth_lines = read_json::<SceneFile>(&a.truth.join("scene.json"))?.to_scene()?.plucker_lines();
    let mut runs = Vec::new();
    for path in solution_files(&a.solution)? {
        let sol: SolutionFile = read_json(&path)?;
        let est = sol.to_state()?;
        let report = evaluate(&truth_cams, &truth_lines, &est.cameras, &est.lines)?;
        runs.push(EvalRun { path: path.display().to_string(), noise_px: sol.noise_px, report });
    }
    // Group by the bit pattern of the noise level so rows keep a total order.
    let mut groups: BTreeMap<Option<u64>, Vec<&EvalRun>> = BTreeMap::new();
    for r in &runs {
        groups.entry(r.noise_px.map(|n| n.to_bits())).or_default().push(r);
    }
    let med = |rs: &[&EvalRun], f: fn(&EvalReport) -> f64| {
        median(&rs.iter().map(|r| f(&r.report)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
    };
    let mut table: Vec<EvalRow> = groups
        .values()
        .map(|rs| EvalRow {
            noise_px: rs[0].noise_px,
            runs: rs.len(),
            rot: med(rs, |e| e.rotation_median),
            trans: med(rs, |e| e.translation_median),
            lr: med(rs, |e| e.line_dir_median),
            ld: med(rs, |e| e.line_dist_median),
        })
        .collect();
    table.sort_by(|x, y| x.noise_px.unwrap_or(f64::NAN).total_cmp(&y.noise_px.unwrap_or(f64::NAN)));
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            let mut row = vec![r.noise_px.map(|n| format!("{n}")).unwrap_or_default()];
            row.extend(float_cells(&[r.rot, r.trans, r.lr, r.ld]));
            row
        })
        .collect();
    let csv = csv_string(&["noise", "rot", "trans", "lr", "ld"], &rows);
    create_dir(&a.out)?;
    write_json(&a.out.join("eval.json"), &EvalOutput { runs, table })?;
    write_text(&a.out.join("table.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> CmdResult {
    let sec = load_config(a.config.as_deref())?.gradcheck;
    let instances = a.instances.unwrap_or(sec.instances);
    if instances == 0 {
        return Err(Failure::usage("instances must be at least 1"));
    }
    let corrupt = match a.corrupt.as_deref() {
        None => None,
        Some(name) => Some(Block::from_name(name).ok_or_else(|| {
            let names: Vec<&str> = Block::ALL.iter().map(|b| b.name()).collect();
            Failure::usage(format!("unknown block {name}; expected one of {}", names.join(", ")))
        })?),
    };
    let report = gradcheck::run(instances, a.seed.unwrap_or(sec.seed), corrupt);
    for b in &report.blocks {
        println!(
            "{:<16} instances {:>4} skipped {:>4} worst_rel {:.3e} worst_abs {:.3e} ratio {:.3} {}",
            b.block.name(),
            b.instances,
            b.skipped,
            b.worst_rel,
            b.worst_abs,
            b.worst_ratio,
            if b.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::check("gradient check failed"))
    }
}

fn degeneracy(a: DegeneracyArgs) -> CmdResult {
    let sec = load_config(a.config.as_deref())?.degeneracy;
    let seed = a.seed.unwrap_or(sec.seed);
    let (json, passed) = match a.kind {
        Kind::Plane => {
            let d = plane_demo(seed, &sec.solver)?;
            (rslba::io::to_json_string(&d)?, d.passed)
        }
        Kind::Xy => {
            let d = xy_demo(seed, &sec.solver)?;
            (rslba::io::to_json_string(&d)?, d.passed)
        }
        Kind::TwoView => {
            let d = two_view_demo(sec.s, sec.r)?;
            (rslba::io::to_json_string(&d)?, d.passed)
        }
    };
    if let Some(out) = &a.out {
        write_text(out, &json)?;
    }
    println!("{json}");
    if passed {
        Ok(())
    } else {
        Err(Failure::check("degeneracy demo did not reproduce the expected behavior"))
    }
}

fn run_sweep(a: SweepArgs) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?.experiment;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let axis = a.axis.axis();
    let values = a.values.unwrap_or_else(|| axis.default_values());
    if values.is_empty() {
        return Err(Failure::usage("no sweep values"));
    }
    let rows = sweep(&cfg, axis, &values)?;
    let csv = csv_string(&SWEEP_CSV_HEADER, &sweep_csv_rows(axis, &rows));
    write_text(&a.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Degeneracy(a) => degeneracy(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
