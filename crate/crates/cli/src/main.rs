use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use flowhrl_core::correction::RelabelStrategy;
use flowhrl_core::harness::{
    run_audit, run_eval, run_gradcheck, run_plot, run_train, write_audit_csv, PolicySource, RunConfig,
};

const LOG_ENV: &str = "FHRL_LOG";

#[derive(Parser)]
#[command(name = "flowhrl", version, about = "Goal-conditioned HRL with flow-based goal relabeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes metrics, losses, checkpoint and buffer dump.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noise-free evaluation of a checkpoint, or of `scripted:ENV` / `random:ENV`.
    Eval {
        #[arg(long)]
        ckpt: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-item relabel audit of a buffer dump, as CSV.
    AuditRelabel {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        buffer: PathBuf,
        /// flow_only | flow_full | hiro | none
        #[arg(long)]
        strategy: String,
        /// Seed for the HIRO candidate draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Reward curves from metrics files: SVG at OUT, merged CSV beside it.
    Plot {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging() -> anyhow::Result<()> {
    let level = std::env::var(LOG_ENV).unwrap_or_else(|_| "info".into());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        bail!("{LOG_ENV} must be one of error, info, debug (got {level:?})");
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_target(false)
        .init();
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outputs = run_train(&cfg, &out)?;
            println!("steps = {}", outputs.steps);
            if let Some(eval) = outputs.final_eval {
                println!("final_average_reward = {}", eval.average_reward);
                println!("final_success_rate = {}", eval.success_rate);
            }
            println!("metrics = {}", outputs.metrics.display());
            println!("checkpoint = {}", outputs.checkpoint.display());
            println!("buffer = {}", outputs.buffer.display());
        }
        Command::Eval { ckpt, episodes, seed } => {
            let source = PolicySource::parse(&ckpt)?;
            let summary = run_eval(&source, episodes, seed).with_context(|| format!("evaluating {source}"))?;
            println!("average_reward = {}", summary.average_reward);
            println!("success_rate = {}", summary.success_rate);
            println!("episodes = {}", summary.episodes);
        }
        Command::AuditRelabel {
            ckpt,
            buffer,
            strategy,
            seed,
            out,
        } => {
            let strategy: RelabelStrategy = strategy.parse()?;
            let rows = run_audit(&ckpt, &buffer, strategy, seed)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_audit_csv(&rows, file)?;
                }
                None => write_audit_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Gradcheck { seed, points } => {
            let rows = run_gradcheck(seed, points)?;
            let mut failed = Vec::new();
            let mut stdout = std::io::stdout().lock();
            for row in &rows {
                let verdict = if row.passed() { "ok" } else { "FAIL" };
                writeln!(stdout, "{:<26} points={:<3} max_rel_error={:.3e} {verdict}", row.component, row.points, row.max_rel_error)?;
                if !row.passed() {
                    failed.push(row.component);
                }
            }
            if !failed.is_empty() {
                bail!("gradient check failed for {}", failed.join(", "));
            }
        }
        Command::Plot { files, out } => {
            let outputs = run_plot(&files, &out)?;
            println!("svg = {}", outputs.svg.display());
            println!("csv = {}", outputs.csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
