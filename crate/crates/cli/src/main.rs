//! `sidelink`: train, evaluate and aggregate spectrum-sharing experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sidelink::experiment::{self, ExperimentConfig, ExperimentError, Overrides, OUTPUT_DIR_ENV};
use sidelink::marl::Variant;
use sidelink::neuro::{run_suite, SuiteOptions};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING_EXPERT: u8 = 3;

#[derive(Parser)]
#[command(name = "sidelink", version, about = "Multi-agent spectrum sharing experiments for V2X")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the Double DQN expert used by the transfer variant.
    TrainExpert {
        #[command(flatten)]
        common: Common,
        /// Override the expert's training length.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate every (variant, payload, seed) cell.
    Run {
        #[command(flatten)]
        common: Common,
        /// Only this variant.
        #[arg(long)]
        variant: Option<Variant>,
        /// Expert checkpoint for ddqn_tql.
        #[arg(long)]
        expert: Option<PathBuf>,
    },
    /// Check backpropagation against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 10)]
        nets: usize,
        #[arg(long, default_value_t = 10)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one gradient entry per check; the run must fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Rebuild the result CSVs from the per-run metric files.
    Aggregate {
        /// Experiment output directory.
        #[arg(long, env = OUTPUT_DIR_ENV)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        bin_ms: u64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Only this payload, in multiples of 1060 bytes.
    #[arg(long)]
    payload_mult: Option<u64>,
    /// Output directory, or the checkpoint path for train-expert.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, ExperimentError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn report(err: &ExperimentError) -> ExitCode {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::from(match err {
        ExperimentError::Config(_) => EXIT_CONFIG,
        ExperimentError::MissingExpert(_) => EXIT_MISSING_EXPERT,
        _ => EXIT_FAILURE,
    })
}

fn run(common: Common, variant: Option<Variant>, expert: Option<PathBuf>) -> Result<(), ExperimentError> {
    let mut cfg = load(common.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: common.seed,
        variant,
        payload_mult: common.payload_mult,
        out: common.out,
        expert,
    })?;
    let report = experiment::run_experiment(&cfg)?;
    for row in sidelink::evalkit::compare_runs(&report.runs())? {
        println!(
            "{:<9} payload {:>5} B  runs {}  V2I {:.2} ± {:.2} Mbps  delivery {:.3} ± {:.3}",
            row.variant,
            row.payload_bytes,
            row.runs,
            row.v2i_sum_mbps.mean,
            row.v2i_sum_mbps.sd,
            row.delivery_rate.mean,
            row.delivery_rate.sd
        );
    }
    let violations = report.violations();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("accounting violation: {v}");
        }
        return Err(ExperimentError::Accounting(violations.len()));
    }
    println!("results written to {}", report.output_dir.display());
    Ok(())
}

fn train_expert(common: Common, episodes: Option<usize>) -> Result<(), ExperimentError> {
    let mut cfg = load(common.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: common.seed,
        payload_mult: common.payload_mult,
        ..Overrides::default()
    })?;
    if let Some(e) = episodes {
        cfg.transfer.expert_episodes = e;
    }
    if let Some(s) = common.seed {
        cfg.transfer.expert_seed = s;
    }
    let out = common
        .out
        .or_else(|| cfg.transfer.expert_checkpoint.clone())
        .unwrap_or_else(|| cfg.resolved_output_dir().join("expert.json"));
    let nets = experiment::train_expert(&cfg, &out)?;
    println!("expert with {} agent networks written to {}", nets.len(), out.display());
    Ok(())
}

fn gradcheck(opts: SuiteOptions) -> ExitCode {
    let reports = match run_suite(&opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let failed: Vec<_> = reports.iter().enumerate().filter(|(_, r)| !r.passed()).collect();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let skipped: usize = reports.iter().map(|r| r.skipped_kinks).sum();
    for (i, r) in &failed {
        println!("check {i} (net {}, batch {}): {r}", i / opts.batches, i % opts.batches);
    }
    println!(
        "{} of {} checks passed, max rel error {worst:.3e} (tol {:.1e}), {skipped} coordinates skipped at ReLU kinks",
        reports.len() - failed.len(),
        reports.len(),
        opts.tolerance
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, variant, expert } => run(common, variant, expert),
        Command::TrainExpert { common, episodes } => train_expert(common, episodes),
        Command::Gradcheck { tolerance, nets, batches, seed, inject_fault } => {
            return gradcheck(SuiteOptions { nets, batches, tolerance, seed, inject_fault, ..SuiteOptions::default() })
        }
        Command::Aggregate { out, bin_ms } => experiment::aggregate(&out, bin_ms).map(|runs| {
            println!("aggregated {} runs in {}", runs.len(), out.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
