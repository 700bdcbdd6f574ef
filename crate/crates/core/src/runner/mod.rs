//! Run orchestration: timestamped run directories holding a config
//! snapshot, the training log, metrics, the prediction grid, a checkpoint
//! and diagnostics.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    build_network, build_problem, evaluate_case, write_grid_csv, BenchmarkError, Evaluation, MetricsReport,
};
use crate::diagnostics::{
    empirical_ntk, gd_error_trajectory, gradient_histograms, trajectory_error, write_histograms_csv, write_spectrum_csv,
    DiagnosticsError, NetworkModel,
};
use crate::geometry::MaskPreset;
use crate::network::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, MultiscaleNetwork, NetworkSpec};
use crate::parallel::ExecMode;
use crate::training::{train, EpochRecord, LossBreakdown, MhdObjective, Phase, Schedule, TrainStatus};

pub use config::{
    apply_override, parse_config, BoundaryConfig, ConfigError, DiagnosticsConfig, EvaluationConfig, RunConfig,
    SamplingConfig,
};

pub const OUTPUT_ENV: &str = "MHD_PINN_OUTPUT";

pub const SNAPSHOT: &str = "config.snapshot";
pub const LOG: &str = "log.csv";
pub const METRICS: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.json";
pub const GRID: &str = "grid.csv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const DIAGNOSTICS: &str = "diagnostics";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunnerError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Output root: the config value, then `MHD_PINN_OUTPUT`, then `runs`.
pub fn output_root(configured: Option<&Path>) -> PathBuf {
    match configured {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
    }
}

/// `<root>/<UTC timestamp>-<name>`, suffixed when taken.
pub fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf, RunnerError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    let base = root.join(format!("{stamp}-{name}"));
    let mut dir = base.clone();
    let mut k = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                dir = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            Err(e) => return Err(io_err(&dir)(e)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Converged,
    Diverged,
    Error,
}

impl RunStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Converged)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: RunStatus,
    pub message: Option<String>,
    pub case: String,
    pub formulation: String,
    pub architecture: String,
    pub adam_epochs: usize,
    pub lbfgs_iterations: usize,
    pub lbfgs_fallbacks: usize,
    pub final_loss: Option<BTreeMap<String, f64>>,
    /// Headline relative L2 error per component (temporal mean when
    /// unsteady).
    pub errors: BTreeMap<String, f64>,
    pub parameters: usize,
    pub wall_seconds: f64,
}

impl Summary {
    fn pending(cfg: &RunConfig) -> Self {
        Summary {
            status: RunStatus::Error,
            message: None,
            case: cfg.benchmark.name().into(),
            formulation: cfg.formulation.map(|f| f.name().to_string()).unwrap_or_default(),
            architecture: cfg.architecture.kind.name().into(),
            adam_epochs: 0,
            lbfgs_iterations: 0,
            lbfgs_fallbacks: 0,
            final_loss: None,
            errors: BTreeMap::new(),
            parameters: 0,
            wall_seconds: 0.0,
        }
    }

    pub fn read(dir: &Path) -> Result<Self, RunnerError> {
        let p = dir.join(SUMMARY);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::Invalid(format!("{}: {e}", p.display())))
    }
}

fn loss_map(b: &LossBreakdown) -> BTreeMap<String, f64> {
    [
        ("total", b.total),
        ("L_f", b.equation),
        ("L_g", b.initial),
        ("L_h", b.boundary),
        ("L_data", b.data),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn headline(m: &MetricsReport) -> BTreeMap<String, f64> {
    m.components.iter().filter_map(|c| m.headline(c).map(|v| (c.clone(), v))).collect()
}

fn write_summary(dir: &Path, s: &Summary) -> Result<(), RunnerError> {
    let p = dir.join(SUMMARY);
    let text = serde_json::to_string_pretty(s).expect("summary serializes");
    fs::write(&p, text + "\n").map_err(io_err(&p))
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub summary: Summary,
}

fn run_name(cfg: &RunConfig, formulation: &str) -> String {
    let mut n = format!("{}-{}", cfg.benchmark.name(), formulation);
    if let Some(l) = &cfg.label {
        n.push('-');
        n.push_str(&l.replace(['/', ' '], "_"));
    }
    n
}

fn write_evaluation(dir: &Path, case: &crate::benchmarks::BenchmarkCase, ev: &Evaluation) -> Result<(), RunnerError> {
    let p = dir.join(METRICS);
    let mut w = create(&p)?;
    ev.metrics.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&p))?;
    let p = dir.join(GRID);
    let mut w = create(&p)?;
    write_grid_csv(&mut w, case, &ev.blocks).and_then(|_| w.flush()).map_err(io_err(&p))
}

/// Trains and evaluates one configuration. Once the run directory exists
/// the snapshot and summary are always written; the summary's status tells
/// success from divergence or failure.
pub fn command_train(cfg: &RunConfig, progress: &mut dyn FnMut(&EpochRecord)) -> Result<RunArtifacts, RunnerError> {
    let resolved = cfg.resolved()?;
    let (case, settings) = resolved.resolve()?;
    let dir = create_run_dir(&output_root(cfg.output_dir.as_deref()), &run_name(cfg, settings.formulation.name()))?;
    let snap = dir.join(SNAPSHOT);
    fs::write(&snap, resolved.to_toml()).map_err(io_err(&snap))?;
    let mut summary = Summary::pending(&resolved);
    let start = Instant::now();
    let result = (|| -> Result<(), RunnerError> {
        let net = build_network(&case, &settings)?;
        summary.parameters = net.param_count();
        let problem = build_problem(&case, &settings, &net)?;
        let params = net.init_params(settings.seeds.init).into_values();
        let obj = MhdObjective::new(&net, &problem, &settings.weights, settings.mode).map_err(BenchmarkError::from)?;
        let outcome = train(&obj, params, &settings.schedule, progress).map_err(BenchmarkError::from)?;

        let p = dir.join(LOG);
        let mut w = create(&p)?;
        outcome.log.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&p))?;
        let records = &outcome.log.records;
        summary.adam_epochs = records.iter().filter(|r| r.phase == Phase::Adam).count();
        summary.lbfgs_iterations = records.len() - summary.adam_epochs;
        summary.lbfgs_fallbacks = outcome.lbfgs_fallbacks;
        summary.final_loss = outcome.final_loss.as_ref().map(loss_map);
        summary.status = match &outcome.status {
            TrainStatus::Completed => RunStatus::Completed,
            TrainStatus::Converged => RunStatus::Converged,
            TrainStatus::Diverged { epoch, reason } => {
                summary.message = Some(format!("diverged at epoch {epoch}: {reason}"));
                RunStatus::Diverged
            }
        };

        let ckpt = Checkpoint {
            spec: net.spec().clone(),
            meta: Some(format!("{} {}", case.id.name(), settings.formulation.name())),
            params: outcome.params.clone(),
        };
        write_checkpoint(&dir.join(CHECKPOINT), &ckpt)?;

        let ev = evaluate_case(&case, &settings, &net, &outcome.params)?;
        write_evaluation(&dir, &case, &ev)?;
        summary.errors = headline(&ev.metrics);

        if cfg.diagnostics.histograms && summary.status != RunStatus::Diverged {
            let diag = dir.join(DIAGNOSTICS);
            fs::create_dir_all(&diag).map_err(io_err(&diag))?;
            let epoch = records.last().map_or(0, |r| r.epoch);
            let hs =
                gradient_histograms(&net, &outcome.params, &problem, &settings.weights, epoch, cfg.diagnostics.bins, settings.mode)?;
            let p = diag.join("gradients.csv");
            let mut w = create(&p)?;
            write_histograms_csv(&mut w, &hs).and_then(|_| w.flush()).map_err(io_err(&p))?;
        }
        Ok(())
    })();
    summary.wall_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        summary.status = RunStatus::Error;
        summary.message = Some(e.to_string());
    }
    write_summary(&dir, &summary)?;
    Ok(RunArtifacts { dir, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 30000 Adam epochs and up to 20000 L-BFGS iterations.
    Full,
    /// 5000 Adam epochs and up to 2000 L-BFGS iterations.
    Desk,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Preset::Full),
            "desk" => Some(Preset::Desk),
            _ => None,
        }
    }

    pub fn schedule(self) -> Schedule {
        match self {
            Preset::Full => Schedule::default(),
            Preset::Desk => Schedule::desk(),
        }
    }
}

/// The benchmark's default configuration under a schedule preset, with
/// overrides applied last.
pub fn benchmark_config(case: crate::benchmarks::CaseId, preset: Preset, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let base = RunConfig {
        benchmark: case,
        schedule: preset.schedule(),
        ..Default::default()
    };
    with_overrides(&base, overrides)
}

pub fn with_overrides(cfg: &RunConfig, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    parse_config(&cfg.to_toml(), overrides)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Reynolds,
    Sampling,
    BoundaryMask,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reynolds" => Some(SweepAxis::Reynolds),
            "sampling" => Some(SweepAxis::Sampling),
            "boundary_mask" => Some(SweepAxis::BoundaryMask),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Reynolds => "reynolds",
            SweepAxis::Sampling => "sampling",
            SweepAxis::BoundaryMask => "boundary_mask",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        match self {
            SweepAxis::Reynolds => ["1", "10", "20", "30", "40"].map(String::from).to_vec(),
            SweepAxis::Sampling => ["2500/400", "2500/1000", "5000/400", "5000/1000"].map(String::from).to_vec(),
            SweepAxis::BoundaryMask => MaskPreset::ALL.iter().map(|m| m.name().to_string()).collect(),
        }
    }

    /// Overrides realizing one sweep value. Sampling values are
    /// `interior/total boundary` points, spread evenly over the faces.
    pub fn overrides(self, value: &str, faces: usize) -> Result<Vec<String>, ConfigError> {
        let bad = |msg: &str| ConfigError::Override {
            expr: format!("{}={value}", self.name()),
            msg: msg.to_string(),
        };
        Ok(match self {
            SweepAxis::Reynolds => {
                let re: f64 = value.parse().map_err(|_| bad("expected a number"))?;
                vec![format!("physics.re={re:?}")]
            }
            SweepAxis::Sampling => {
                let (i, b) = value.split_once('/').ok_or_else(|| bad("expected interior/boundary"))?;
                let i: usize = i.trim().parse().map_err(|_| bad("interior count"))?;
                let b: usize = b.trim().parse().map_err(|_| bad("boundary count"))?;
                let per_face = ((b as f64 / faces as f64).round() as usize).max(1);
                vec![format!("sampling.interior={i}"), format!("sampling.boundary_per_face={per_face}")]
            }
            SweepAxis::BoundaryMask => {
                MaskPreset::parse(value).ok_or_else(|| bad("unknown mask preset"))?;
                vec![format!("boundary.mask=\"{value}\"")]
            }
        })
    }
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// One run per value, then `sweep.csv` with one row per run in a sweep
/// directory next to them.
pub fn command_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    progress: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<(PathBuf, Vec<RunArtifacts>), RunnerError> {
    let faces = crate::benchmarks::BenchmarkCase::standard(base.benchmark).domain.face_count();
    let mut configs = Vec::new();
    for v in values {
        let mut o = axis.overrides(v, faces)?;
        o.push(format!("label=\"{}-{}\"", axis.name(), v.replace('/', "_")));
        configs.push((v.clone(), with_overrides(base, &o)?));
    }
    let root = output_root(base.output_dir.as_deref());
    let mut runs = Vec::new();
    for (v, cfg) in &configs {
        runs.push(command_train(cfg, &mut |r| progress(v, r))?);
    }
    let dir = create_run_dir(&root, &format!("sweep-{}", axis.name()))?;
    let p = dir.join(SWEEP_FILE);
    let mut w = create(&p)?;
    let comps: Vec<String> = runs.first().map(|r| r.summary.errors.keys().cloned().collect()).unwrap_or_default();
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "value,status,run_dir,{}", comps.join(","))?;
        for ((v, _), r) in configs.iter().zip(&runs) {
            let errs: Vec<String> = comps.iter().map(|c| r.summary.errors.get(c).map_or(String::new(), |e| format!("{e:e}"))).collect();
            let status = serde_json::to_value(&r.summary.status).expect("status").as_str().unwrap_or("").to_string();
            writeln!(w, "{v},{status},{},{}", r.dir.display(), errs.join(","))?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&p))?;
    Ok((dir, runs))
}

fn load_run(dir: &Path) -> Result<(RunConfig, Checkpoint), RunnerError> {
    let snap = dir.join(SNAPSHOT);
    let text = fs::read_to_string(&snap).map_err(io_err(&snap))?;
    let cfg = parse_config(&text, &[])?;
    let ckpt = read_checkpoint(&dir.join(CHECKPOINT))?;
    Ok((cfg, ckpt))
}

fn network_for(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<MultiscaleNetwork, RunnerError> {
    let (case, settings) = cfg.resolve()?;
    let net = build_network(&case, &settings)?;
    if net.spec() != &ckpt.spec {
        return Err(RunnerError::Invalid("checkpoint network does not match the config snapshot".into()));
    }
    Ok(net)
}

/// Metrics of a stored checkpoint, written to a fresh run directory.
pub fn command_evaluate(run_dir: &Path) -> Result<RunArtifacts, RunnerError> {
    let (cfg, ckpt) = load_run(run_dir)?;
    let net = network_for(&cfg, &ckpt)?;
    let (case, settings) = cfg.resolve()?;
    let mut label = cfg.clone();
    label.label = Some("evaluate".into());
    let dir = create_run_dir(&output_root(cfg.output_dir.as_deref()), &run_name(&label, settings.formulation.name()))?;
    let snap = dir.join(SNAPSHOT);
    fs::write(&snap, cfg.to_toml()).map_err(io_err(&snap))?;
    let start = Instant::now();
    let mut summary = Summary::pending(&cfg);
    summary.parameters = net.param_count();
    match evaluate_case(&case, &settings, &net, &ckpt.params) {
        Ok(ev) => {
            write_evaluation(&dir, &case, &ev)?;
            summary.errors = headline(&ev.metrics);
            summary.status = RunStatus::Completed;
        }
        Err(e) => summary.message = Some(e.to_string()),
    }
    summary.wall_seconds = start.elapsed().as_secs_f64();
    write_summary(&dir, &summary)?;
    Ok(RunArtifacts { dir, summary })
}

/// Per-term gradient histograms of a stored run, written to its
/// `diagnostics/gradients.csv`.
pub fn diagnose_gradients(run_dir: &Path, bins: usize, epoch: Option<usize>) -> Result<PathBuf, RunnerError> {
    let (cfg, ckpt) = load_run(run_dir)?;
    let net = network_for(&cfg, &ckpt)?;
    let (case, settings) = cfg.resolve()?;
    let problem = build_problem(&case, &settings, &net)?;
    let epoch = match epoch {
        Some(e) => e,
        None => Summary::read(run_dir).map(|s| s.adam_epochs + s.lbfgs_iterations).unwrap_or(0),
    };
    let hs = gradient_histograms(&net, &ckpt.params, &problem, &settings.weights, epoch, bins, settings.mode)?;
    let diag = run_dir.join(DIAGNOSTICS);
    fs::create_dir_all(&diag).map_err(io_err(&diag))?;
    let p = diag.join("gradients.csv");
    let mut w = create(&p)?;
    write_histograms_csv(&mut w, &hs).and_then(|_| w.flush()).map_err(io_err(&p))?;
    Ok(p)
}

/// The kernel study on a scalar 1D regression.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkStudy {
    pub width: usize,
    pub points: usize,
    pub steps: usize,
    /// Learning rate as a fraction of `1 / lambda_max`.
    pub lr_scale: f64,
    /// Parameter draws averaged into the reported spectrum.
    pub draws: usize,
    pub frequency: f64,
    pub seed: u64,
}

impl Default for NtkStudy {
    fn default() -> Self {
        NtkStudy {
            width: 1024,
            points: 16,
            steps: 500,
            lr_scale: 0.1,
            draws: 10,
            frequency: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NtkOutcome {
    pub relative_l2: f64,
    pub max_step_relative: f64,
    pub lr: f64,
    pub min_relative_eigenvalue: f64,
    pub eigen_residual: f64,
    pub asymmetry: f64,
}

impl NtkStudy {
    pub fn inputs(&self) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..self.points)
            .map(|i| if self.points == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (self.points - 1) as f64 })
            .collect();
        let ys = xs.iter().map(|x| (std::f64::consts::PI * self.frequency * x).sin()).collect();
        (xs, ys)
    }

    /// Runs gradient descent from the first draw and compares it with the
    /// kernel prediction of that draw. Writes CSVs into `out` if given.
    pub fn run(&self, out: Option<&Path>, mode: ExecMode) -> Result<NtkOutcome, RunnerError> {
        if self.width == 0 || self.points == 0 || self.draws == 0 || !(self.lr_scale > 0.0) {
            return Err(RunnerError::Invalid("width, points and draws must be positive, lr_scale > 0".into()));
        }
        let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 1, 1, self.width)).map_err(BenchmarkError::from)?;
        let model = NetworkModel::new(&net, mode)?;
        let (xs, ys) = self.inputs();
        let p0 = net.init_params(self.seed).into_values();
        let single = empirical_ntk(&model, std::slice::from_ref(&p0), &xs, mode)?;
        let lr = self.lr_scale / single.eigen.values[0];
        let traj = gd_error_trajectory(&model, &p0, &xs, &ys, lr, self.steps);
        let cmp = trajectory_error(&single, &traj, lr);
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let draws: Vec<Vec<f64>> =
                (0..self.draws as u64).map(|k| net.init_params(self.seed + k).into_values()).collect();
            let mean = empirical_ntk(&model, &draws, &xs, mode)?;
            let p = dir.join("ntk_spectrum.csv");
            let mut w = create(&p)?;
            write_spectrum_csv(&mut w, &mean).and_then(|_| w.flush()).map_err(io_err(&p))?;
            let p = dir.join("ntk_trajectory.csv");
            let mut w = create(&p)?;
            let write = |w: &mut BufWriter<File>| -> io::Result<()> {
                writeln!(w, "step,t,observed_norm,predicted_norm,difference_norm")?;
                for (k, (o, q)) in traj.iter().zip(&cmp.predicted).enumerate() {
                    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let d: Vec<f64> = o.iter().zip(q).map(|(a, b)| a - b).collect();
                    writeln!(w, "{k},{:e},{:e},{:e},{:e}", lr * k as f64, n(o), n(q), n(&d))?;
                }
                w.flush()
            };
            write(&mut w).map_err(io_err(&p))?;
        }
        Ok(NtkOutcome {
            relative_l2: cmp.relative_l2,
            max_step_relative: cmp.max_step_relative,
            lr,
            min_relative_eigenvalue: single.min_relative_eigenvalue(),
            eigen_residual: single.eigen_residual(),
            asymmetry: single.asymmetry,
        })
    }
}
