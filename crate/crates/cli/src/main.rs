//! `mcfid` — runs the tally-uncertainty propagation study stage by stage.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mcfid::config::{load_config, StudyConfig};
use mcfid::pipeline;

#[derive(Parser)]
#[command(
    name = "mcfid",
    about = "Monte Carlo tally uncertainty vs surrogate-driven design optimization",
    after_help = "Any configuration field can be overridden with a dotted flag, \
e.g. `--nsga3.population 60` or `--levels [0.1,0.05]`. See docs/config.md."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Study configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of full pipeline repeats.
    #[arg(long, global = true)]
    repeats: Option<usize>,

    /// Worker-thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Use the reduced tuning grid instead of the full one.
    #[arg(long, global = true)]
    fast_grid: bool,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Benchmark problem.
    #[arg(long, global = true, value_parser = ["moderator", "converter"])]
    problem: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the noisy grid datasets for every uncertainty level.
    GenData,
    /// Grid-search surrogate hyperparameters per level.
    Tune,
    /// Retrain the selected configuration per level and save the models.
    Train,
    /// Run NSGA-III on each trained surrogate.
    Optimize,
    /// Re-evaluate optimized candidates with the exact truth and build the
    /// loss table.
    Verify,
    /// Aggregate artifacts into report.json and the summary loss table.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Print per-level dataset generation costs.
    CostSummary,
}

const CLAP_FLAGS: &[&str] = &[
    "config", "seed", "repeats", "jobs", "fast-grid", "out", "problem", "help", "version",
];

/// Splits argv into clap-known arguments and config overrides: any other
/// `--key value` or `--key=value` is applied onto the configuration by its
/// (possibly dotted) field path, e.g. `--nsga3.population 60` or
/// `--levels=[0.1,0.05]`.
fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut known = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let unknown_flag = arg
            .strip_prefix("--")
            .map(|rest| rest.split('=').next().unwrap_or(""))
            .filter(|key| !key.is_empty() && !CLAP_FLAGS.contains(key));
        match unknown_flag {
            Some(_) => {
                let rest = arg.strip_prefix("--").unwrap();
                if let Some((key, value)) = rest.split_once('=') {
                    overrides.push((key.to_string(), value.to_string()));
                } else if let Some(value) = iter.next() {
                    overrides.push((rest.to_string(), value));
                } else {
                    overrides.push((rest.to_string(), String::new()));
                }
            }
            None => known.push(arg),
        }
    }
    (known, overrides)
}

fn resolve_config(cli: &Cli, mut overrides: Vec<(String, String)>) -> anyhow::Result<StudyConfig> {
    // Named flags are sugar for the same dotted overrides.
    if let Some(problem) = &cli.problem {
        overrides.insert(0, ("problem".into(), problem.clone()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(repeats) = cli.repeats {
        overrides.push(("repeats".into(), repeats.to_string()));
    }
    if cli.fast_grid {
        overrides.push(("grid".into(), "reduced".into()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.to_string_lossy().into_owned()));
    }
    if let Some(jobs) = cli.jobs {
        overrides.push(("jobs".into(), jobs.to_string()));
    }
    let config = load_config(cli.config.as_deref(), &overrides)?;
    Ok(config)
}

fn main() -> anyhow::Result<()> {
    let (known, overrides) = extract_overrides(std::env::args().collect());
    let cli = Cli::parse_from(known);
    let cfg = resolve_config(&cli, overrides)?;

    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("rayon thread pool")?;
    }

    let started = Instant::now();
    match cli.command {
        Command::GenData => pipeline::cmd_gen_data(&cfg)?,
        Command::Tune => pipeline::cmd_tune(&cfg)?,
        Command::Train => pipeline::cmd_train(&cfg)?,
        Command::Optimize => pipeline::cmd_optimize(&cfg)?,
        Command::Verify => pipeline::cmd_verify(&cfg)?,
        Command::Report => {
            let report = pipeline::cmd_report(&cfg)?;
            print_report(&report);
        }
        Command::RunAll => {
            let report = pipeline::cmd_run_all(&cfg)?;
            print_report(&report);
        }
        Command::CostSummary => {
            let rows = pipeline::cmd_cost_summary(&cfg)?;
            println!("u,per_point_cost,total_cost,ratio_to_most_expensive");
            for r in rows {
                println!(
                    "{},{},{},{}",
                    r.u, r.per_point_cost, r.total_cost, r.ratio_to_most_expensive
                );
            }
        }
    }
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn print_report(report: &pipeline::StudyReport) {
    println!(
        "problem={} grid={:?} repeats={} seed={}",
        report.problem.name(),
        report.grid,
        report.repeats,
        report.seed
    );
    println!("u,cost,best_layers,best_neurons,r2_mean,hv_polygon_mean,loss_polygon_mean_pct");
    for row in &report.per_level {
        println!(
            "{},{},{},{},{:.6},{:.4},{:.3}",
            row.u,
            row.dataset_cost,
            row.best_config.hidden_layers,
            row.best_config.neurons,
            row.test_r2_mean,
            row.hv_polygon_mean,
            row.loss_polygon_mean
        );
    }
}
