//! `anet`: dataset generation, staged training, prediction export,
//! evaluation, report merging and latency benchmarks.

// Fallible stdout writes: a closed pipe becomes an error, not a panic.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        write!(std::io::stdout(), $($arg)*)?
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout(), $($arg)*)?
    }};
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::bench::BenchArgs;
use commands::eval::EvalArgs;
use commands::gen_data::GenData;
use commands::predict::PredictArgs;
use commands::report::ReportArgs;
use commands::train::TrainArgs;
use config::{parse_assignment, set, set_path, Override};

#[derive(Debug, Parser)]
#[command(name = "anet", version, about = "Camouflaged object segmentation experiments")]
struct Cli {
    /// TOML file of dotted settings (train.lr_seg = 0.003); flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sets both data.seed and train.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; created if absent, receives config.toml.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any setting, e.g. --set train.epochs_seg=20.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a dataset and manifest.
    #[command(subcommand)]
    GenData(GenData),
    /// Run one training stage and save a stage-named checkpoint.
    Train(TrainArgs),
    /// Export raw and fused maps plus probabilities for a split.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Merge eval reports into one table.
    Report(ReportArgs),
    /// Time backbone-only against full inference.
    Bench(BenchArgs),
}

impl Cli {
    fn overrides(&self) -> Result<Vec<Override>> {
        let mut o = match &self.command {
            Command::GenData(c) => c.overrides(),
            Command::Train(c) => c.overrides(),
            Command::Predict(c) => c.overrides(),
            Command::Eval(c) => c.overrides(),
            Command::Report(c) => c.overrides(),
            Command::Bench(c) => c.overrides(),
        };
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| anyhow::anyhow!("--seed {seed} is too large"))?;
            o.push(set("data.seed", seed));
            o.push(set("train.seed", seed));
        }
        if let Some(out) = &self.out {
            o.push(set_path("out", out));
        }
        for s in &self.set {
            o.push(parse_assignment(s)?);
        }
        Ok(o)
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref(), &cli.overrides()?)?;
    cfg.check_paths()?;
    match &cli.command {
        Command::GenData(c) => c.run(&cfg),
        Command::Train(c) => c.run(&cfg),
        Command::Predict(c) => c.run(&cfg),
        Command::Eval(c) => c.run(&cfg),
        Command::Report(c) => c.run(&cfg),
        Command::Bench(c) => c.run(&cfg),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error: {}", one_line(first.trim_start_matches("error:")));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
