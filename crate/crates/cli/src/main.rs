//! Command-line runner: training, single-episode evaluation, and heatmap
//! generation with full config and seed control.
//!
//! Progress goes to stderr; stdout carries exactly one final JSON summary
//! line. Exit codes: 0 success, 1 config/usage error, 2 I/O error.

use clap::{Parser, Subcommand};
use nanosim_core::agent::QTable;
use nanosim_core::config::{parse_config, SimConfig};
use nanosim_core::engine::{
    run_episode, run_training_with, EpisodeParams, Mode, PolicyTables, TrainingReport,
};
use nanosim_core::env::Environment;
use nanosim_core::field::{sample_heatmap, Plane};
use nanosim_core::io;
use nanosim_core::rng::{stream_rng, STREAM_POLICY};
use nanosim_core::SimError;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "nanosim",
    about = "Deterministic 3D biomarker-field navigation simulator with tabular Q-learning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents; writes report JSON, Q-table(s), and the final-episode
    /// trace CSV into the output directory.
    Train {
        /// JSON config file (omit for all defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress progress lines on stderr.
        #[arg(long)]
        quiet: bool,
        /// Run N independent replicates with consecutive seeds, one
        /// subdirectory per seed.
        #[arg(long)]
        replicates: Option<u32>,
    },
    /// Evaluate one greedy episode (loading a Q-table if given, otherwise
    /// greedy on a zero table); writes trace CSV and metrics JSON.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stored Q-table to evaluate.
        #[arg(long)]
        qtable: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Sample one concentration heatmap slice and write it as CSV.
    Heatmap {
        #[arg(long)]
        config: Option<PathBuf>,
        /// XY, XZ, or YZ.
        #[arg(long)]
        plane: String,
        /// Fixed coordinate of the slice plane.
        #[arg(long)]
        slice: f64,
        #[arg(long)]
        resolution: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &SimError) -> i32 {
    match err {
        SimError::Io { .. } => 2,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig, SimError> {
    let mut config = match path {
        None => SimConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| SimError::ConfigParse(format!("{}: {e}", p.display())))?;
            parse_config(&text)?
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Train { config, out_dir, seed, quiet, replicates } => {
            let config = load_config(config.as_deref(), seed)?;
            match replicates {
                None => {
                    let summary = train_into(&config, &out_dir, quiet)?;
                    println!("{summary}");
                }
                Some(n) => {
                    let mut seeds = Vec::new();
                    let mut dirs = Vec::new();
                    for i in 0..u64::from(n) {
                        let mut replicate = config.clone();
                        replicate.seed = config.seed.wrapping_add(i);
                        let dir = out_dir.join(format!("seed-{}", replicate.seed));
                        train_into(&replicate, &dir, quiet)?;
                        seeds.push(replicate.seed);
                        dirs.push(dir.display().to_string());
                    }
                    println!(
                        "{}",
                        json!({
                            "command": "train",
                            "replicates": seeds,
                            "out_dirs": dirs,
                        })
                    );
                }
            }
            Ok(())
        }
        Command::Run { config, qtable, out_dir, seed, quiet } => {
            let config = load_config(config.as_deref(), seed)?;
            let summary = eval_into(&config, qtable.as_deref(), &out_dir, quiet)?;
            println!("{summary}");
            Ok(())
        }
        Command::Heatmap { config, plane, slice, resolution, out, seed } => {
            let config = load_config(config.as_deref(), seed)?;
            let summary = heatmap_into(&config, &plane, slice, resolution, &out)?;
            println!("{summary}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Run one training job and write config echo, report, Q-table(s), and the
/// last-episode trace into `dir`. Returns the stdout summary line.
fn train_into(config: &SimConfig, dir: &Path, quiet: bool) -> Result<String, SimError> {
    create_dir(dir)?;
    io::write_config(config, &dir.join("config.json"))?;

    let every = (config.episodes / 10).max(1);
    let started = Instant::now();
    let report: TrainingReport = run_training_with(config, |episode, metrics| {
        if !quiet && (episode + 1) % every == 0 {
            eprintln!(
                "episode {}/{}: steps={} captures={} avg_distance={:.2}",
                episode + 1,
                config.episodes,
                metrics.total_steps,
                metrics.captures,
                metrics.average_distance
            );
        }
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    io::write_report(&report, config, &dir.join("report.json"))?;
    if report.shared_qtable {
        io::write_qtable(&report.qtables[0], &dir.join("qtable.txt"))?;
    } else {
        for (i, table) in report.qtables.iter().enumerate() {
            io::write_qtable(table, &dir.join(format!("qtable_r{i}.txt")))?;
        }
    }
    if let Some(trace) = &report.last_trace {
        io::write_trace(trace, &dir.join("trace.csv"))?;
    }

    let total_captures: u32 = report.episode_metrics.iter().map(|m| m.captures).sum();
    Ok(json!({
        "command": "train",
        "out_dir": dir.display().to_string(),
        "seed": config.seed,
        "episodes": config.episodes,
        "total_captures": total_captures,
        "final_epsilon": report.epsilon.last().copied().unwrap_or(0.0),
        "wall_clock_seconds": elapsed,
    })
    .to_string())
}

/// Run one greedy evaluation episode into `dir`; returns the summary line.
fn eval_into(
    config: &SimConfig,
    qtable: Option<&Path>,
    dir: &Path,
    quiet: bool,
) -> Result<String, SimError> {
    create_dir(dir)?;
    io::write_config(config, &dir.join("config.json"))?;

    let table = match qtable {
        Some(path) => io::read_qtable(path)?,
        None => QTable::new(),
    };
    let mut env = Environment::new(config, config.seed)?;
    let mut policy = PolicyTables::shared_from(table);
    let mut rng = stream_rng(config.seed, STREAM_POLICY);
    let params = EpisodeParams::from_config(config);
    if !quiet {
        eprintln!("evaluating one episode: seed={} max_steps={}", config.seed, config.max_steps);
    }
    let (trace, metrics) = run_episode(&mut env, &mut policy, &params, Mode::Eval, &mut rng);

    io::write_trace(&trace, &dir.join("trace.csv"))?;
    io::write_metrics(&metrics, config, &dir.join("metrics.json"))?;

    Ok(json!({
        "command": "run",
        "out_dir": dir.display().to_string(),
        "seed": config.seed,
        "status": trace.status.name(),
        "total_steps": metrics.total_steps,
        "captures": metrics.captures,
        "final_distance": metrics.final_distance,
        "wall_clock_seconds": metrics.wall_clock_seconds,
    })
    .to_string())
}

/// Sample one heatmap slice into `out`; returns the summary line.
fn heatmap_into(
    config: &SimConfig,
    plane: &str,
    slice: f64,
    resolution: usize,
    out: &Path,
) -> Result<String, SimError> {
    let plane = Plane::parse(plane)
        .ok_or_else(|| SimError::config("plane", format!("expected XY, XZ, or YZ, got '{plane}'")))?;
    if !slice.is_finite() || !(0.0..=config.side).contains(&slice) {
        return Err(SimError::config(
            "slice",
            format!("must lie within the cube [0, {}], got {slice}", config.side),
        ));
    }
    let env = Environment::new(config, config.seed)?;
    let grid = sample_heatmap(
        &env.alive_sources(),
        config.field_model,
        plane,
        slice,
        config.side,
        resolution,
        config.d_min,
    )?;
    io::write_heatmap(&grid, out)?;
    let (i, j) = grid.argmax();
    Ok(json!({
        "command": "heatmap",
        "out": out.display().to_string(),
        "plane": grid.plane.name(),
        "slice": grid.slice_coord,
        "resolution": grid.resolution,
        "argmax_cell": [i, j],
        "config": config,
    })
    .to_string())
}
