use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use mhd_pinn::benchmarks::CaseId;
use mhd_pinn::parallel::ExecMode;
use mhd_pinn::runner::{
    benchmark_config, command_evaluate, command_sweep, command_train, diagnose_gradients, output_root, parse_config,
    create_run_dir, NtkStudy, Preset, RunArtifacts, SweepAxis,
};
use mhd_pinn::training::EpochRecord;

#[derive(Parser)]
#[command(name = "mhd-pinn", version, about = "Physics-informed neural network solver for incompressible MHD")]
struct Cli {
    /// Print the loss every N epochs (0 disables).
    #[arg(long, global = true, default_value_t = 500)]
    log_every: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration file.
    Train {
        config: PathBuf,
        /// Override a key, e.g. `--set schedule.n_adam=1000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a benchmark with its default configuration.
    Benchmark {
        /// steady2d, unsteady2d, hartmann or unsteady3d
        case: String,
        #[arg(long, default_value = "full")]
        preset: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// One run per value of a sweep axis.
    Sweep {
        /// reynolds, sampling or boundary_mask
        axis: String,
        /// Comma-separated values; the axis defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Base configuration; otherwise the benchmark defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "steady2d")]
        benchmark: String,
        #[arg(long, default_value = "full")]
        preset: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Diagnostics on a stored run or on the scalar kernel study.
    Diagnose {
        #[command(subcommand)]
        kind: Diagnose,
    },
    /// Recompute metrics from a run directory's checkpoint.
    Evaluate { run_dir: PathBuf },
}

#[derive(Subcommand)]
enum Diagnose {
    /// Per-term, per-layer gradient histograms at the checkpoint.
    Gradients {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Empirical kernel spectrum and predicted versus observed error decay
    /// on a 1D regression.
    Ntk {
        /// Run directory to write into; a new one otherwise.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        draws: usize,
        #[arg(long, default_value_t = 0.1)]
        lr_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        frequency: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn progress(every: usize) -> impl FnMut(&EpochRecord) {
    move |r: &EpochRecord| {
        if every > 0 && r.epoch.is_multiple_of(every) {
            let l = &r.loss;
            eprintln!(
                "{:>6} {:<5} total {:.3e}  L_f {:.3e}  L_g {:.3e}  L_h {:.3e}  ({:.0}s)",
                r.epoch,
                r.phase.name(),
                l.total,
                l.equation,
                l.initial,
                l.boundary,
                r.seconds
            );
        }
    }
}

fn report(r: &RunArtifacts) -> bool {
    let s = &r.summary;
    println!("run directory: {}", r.dir.display());
    let errs: Vec<String> = s.errors.iter().map(|(k, v)| format!("{k} {v:.3e}")).collect();
    println!("status: {:?}  errors: {}", s.status, errs.join("  "));
    if let Some(m) = &s.message {
        println!("message: {m}");
    }
    s.status.is_success()
}

fn preset(s: &str) -> Result<Preset> {
    Preset::parse(s).ok_or_else(|| anyhow!("unknown preset `{s}` (full, desk)"))
}

fn case(s: &str) -> Result<CaseId> {
    CaseId::parse(s).ok_or_else(|| anyhow!("unknown benchmark `{s}` (steady2d, unsteady2d, hartmann, unsteady3d)"))
}

fn run(cli: Cli) -> Result<bool> {
    let every = cli.log_every;
    match cli.command {
        Command::Train { config, overrides } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = parse_config(&text, &overrides)?;
            Ok(report(&command_train(&cfg, &mut progress(every))?))
        }
        Command::Benchmark {
            case: c,
            preset: p,
            overrides,
        } => {
            let cfg = benchmark_config(case(&c)?, preset(&p)?, &overrides)?;
            Ok(report(&command_train(&cfg, &mut progress(every))?))
        }
        Command::Sweep {
            axis,
            values,
            config,
            benchmark,
            preset: p,
            overrides,
        } => {
            let axis = SweepAxis::parse(&axis).ok_or_else(|| anyhow!("unknown axis `{axis}` (reynolds, sampling, boundary_mask)"))?;
            let cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    parse_config(&text, &overrides)?
                }
                None => benchmark_config(case(&benchmark)?, preset(&p)?, &overrides)?,
            };
            let values = if values.is_empty() { axis.default_values() } else { values };
            let mut log = progress(every);
            let (dir, runs) = command_sweep(&cfg, axis, &values, &mut |v, r| {
                if every > 0 && r.epoch % every == 0 {
                    eprint!("[{v}] ");
                }
                log(r)
            })?;
            let mut ok = true;
            for r in &runs {
                ok &= report(r);
            }
            println!("sweep table: {}", dir.join(mhd_pinn::runner::SWEEP_FILE).display());
            Ok(ok)
        }
        Command::Diagnose { kind } => match kind {
            Diagnose::Gradients { run_dir, bins, epoch } => {
                let p = diagnose_gradients(&run_dir, bins, epoch)?;
                println!("histograms: {}", p.display());
                Ok(true)
            }
            Diagnose::Ntk {
                run_dir,
                width,
                points,
                steps,
                draws,
                lr_scale,
                frequency,
                seed,
            } => {
                let study = NtkStudy {
                    width,
                    points,
                    steps,
                    lr_scale,
                    draws,
                    frequency,
                    seed,
                };
                let dir = match run_dir {
                    Some(d) => d,
                    None => create_run_dir(&output_root(None), "ntk")?,
                };
                let out = dir.join(mhd_pinn::runner::DIAGNOSTICS);
                let o = study.run(Some(&out), ExecMode::default())?;
                println!("diagnostics: {}", out.display());
                println!(
                    "lr {:.3e}  trajectory rel. L2 {:.3e}  worst step {:.3e}  min eig/max {:.3e}",
                    o.lr, o.relative_l2, o.max_step_relative, o.min_relative_eigenvalue
                );
                Ok(true)
            }
        },
        Command::Evaluate { run_dir } => {
            if !run_dir.is_dir() {
                bail!("{} is not a run directory", run_dir.display());
            }
            Ok(report(&command_evaluate(&run_dir)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
