//! Command-line front end. Configuration comes from `--config` (TOML);
//! `--seed`, `--budget`, `--mode` and `--out` override it. Exit codes: 0
//! success, 2 configuration error, 3 data error, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use physprim::infer::{Budget, ShapeMode};
use physprim::pipeline::{self, Dataset, ExperimentConfig, InferenceResults};
use physprim::trajextract::ExtractOptions;
use physprim::{Error, Result};

#[derive(Parser)]
#[command(name = "physprim", version, about = "Physical primitive decomposition experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample count, `exhaustive` or `exhaustive:<stride>`.
    #[arg(long, global = true)]
    budget: Option<String>,
    /// `phys` or `shape+phys`.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output path; its meaning depends on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a tower dataset into a directory.
    Gen,
    /// Simulate the four interactions for an object JSON file.
    Simulate { object: PathBuf },
    /// Voxelize an object JSON file into binvox.
    Voxelize {
        object: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Fit cuboid primitives to a binvox file.
    Fit { binvox: PathBuf },
    /// Infer densities for the test split of a dataset.
    Infer {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score inference results and baselines.
    Eval {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Best distance against sample budget, with and without shape sampling.
    Sweep,
    /// Recover a trajectory from keypoint detections.
    ExtractTraj {
        keypoints: PathBuf,
        /// JSON array of model points `[[x, y, z], ...]`.
        #[arg(long)]
        model: PathBuf,
        /// JSON `{fx, fy, cx, cy}`.
        #[arg(long)]
        intrinsics: PathBuf,
        /// JSON `{translation, rotation}` world-to-camera transform.
        #[arg(long)]
        extrinsics: Option<PathBuf>,
        #[arg(long)]
        interaction: Option<usize>,
        /// Solve frames independently instead of warm-starting.
        #[arg(long)]
        independent: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(b) = &cli.budget {
        cfg.infer.budget = b.parse::<Budget>()?;
    }
    if let Some(m) = &cli.mode {
        cfg.infer.mode = m.parse::<ShapeMode>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required_out(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.out.clone().ok_or_else(|| Error::Config(format!("{what} needs --out")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => pipeline::write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes `<path>` as JSON and `<path>.txt` as the text table.
fn emit_report(path: &Path, json: &str, text: &str) -> Result<()> {
    pipeline::write_atomic(path, json.as_bytes())?;
    let mut txt = path.as_os_str().to_owned();
    txt.push(".txt");
    pipeline::write_atomic(Path::new(&txt), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Gen => {
            let out = cli.out.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
            let m = pipeline::cmd_gen(&cfg, &out)?;
            println!("{} towers, {} records, {} trajectories -> {}", m.towers, m.records, m.trajectory_files, out.display());
        }
        Command::Simulate { object } => {
            let out = required_out(cli, "simulate")?;
            for path in pipeline::cmd_simulate(object, &cfg.sim, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Voxelize { object, resolution } => {
            let out = required_out(cli, "voxelize")?;
            let n = pipeline::cmd_voxelize(object, resolution.unwrap_or(cfg.tower.resolution), &out)?;
            println!("{n} occupied cells -> {}", out.display());
        }
        Command::Fit { binvox } => {
            let json = pipeline::cmd_fit(binvox, &cfg.fit)?;
            emit(cli.out.as_deref(), &format!("{json}\n"))?;
        }
        Command::Infer { dataset } => {
            let dataset = Dataset::load(dataset.as_deref().unwrap_or(&cfg.paths.dataset))?;
            let results = pipeline::cmd_infer(&cfg, &dataset)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.paths.results.clone());
            pipeline::write_atomic(&out, results.to_json().as_bytes())?;
            println!("{} tasks -> {}", results.tasks.len(), out.display());
        }
        Command::Eval { results, dataset } => {
            let dataset = Dataset::load(dataset.as_deref().unwrap_or(&cfg.paths.dataset))?;
            let results = InferenceResults::load(results.as_deref().unwrap_or(&cfg.paths.results))?;
            let report = pipeline::cmd_eval(&cfg, &results, &dataset)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.paths.report.clone());
            emit_report(&out, &report.to_json(), &report.to_text())?;
        }
        Command::Sweep => {
            let report = pipeline::cmd_sweep(&cfg)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.paths.sweep.clone());
            emit_report(&out, &report.to_json(), &report.to_text())?;
        }
        Command::ExtractTraj {
            keypoints,
            model,
            intrinsics,
            extrinsics,
            interaction,
            independent,
        } => {
            let out = required_out(cli, "extract-traj")?;
            let options = ExtractOptions {
                independent: *independent,
                interaction_id: interaction.unwrap_or(0),
                dt: cfg.sim.dt,
                ..ExtractOptions::default()
            };
            let e = pipeline::cmd_extract_traj(keypoints, model, intrinsics, extrinsics.as_deref(), &options, &out)?;
            let gaps = e.gaps().iter().filter(|&&g| g).count();
            println!("{} poses, {gaps} gaps -> {}", e.trajectory.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
