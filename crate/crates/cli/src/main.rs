mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use boostdec::Error;
use clap::{Parser, Subcommand};

/// Boosted neural min-sum decoding: training, UC harvesting and FER runs.
#[derive(Debug, Parser)]
#[command(name = "boostdec", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, env = "BOOSTDEC_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, env = "BOOSTDEC_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true, env = "BOOSTDEC_WORKERS")]
    workers: Option<usize>,
    /// Force ordered reductions.
    #[arg(long, global = true, env = "BOOSTDEC_DETERMINISTIC")]
    deterministic: bool,
    /// Trial cap for collection and FER runs.
    #[arg(long, global = true, env = "BOOSTDEC_BUDGET")]
    budget: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Train the base stage on fresh waterfall-region frames.
    TrainBase,
    /// Gather frames the base decoder fails on.
    Collect,
    /// Multiply a UC dataset with the biased channel.
    Augment,
    /// Initialise weights for this code from another weight set.
    Transfer,
    /// Train a post stage on a UC dataset.
    TrainPost,
    /// Monte-Carlo FER sweep.
    Fer,
    /// Failure rate on the test split of a UC dataset.
    TestFer,
    /// Operation counts of the configured decoder.
    Complexity,
    /// Residual bit-error counts on a UC dataset.
    Histogram,
    /// Print the effective config after flag and environment overrides.
    ShowConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::ShiftOutOfRange { .. }
        | Error::DuplicateCell { .. }
        | Error::Inconsistent(_)
        | Error::DegreeTooSmall { .. }
        | Error::Dimension { .. }
        | Error::Transfer(_) => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> boostdec::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut loaded = config::Loaded::load(path)?;
    let cfg = &mut loaded.cfg;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(b) = cli.budget {
        cfg.budget = b;
    }
    cfg.deterministic |= cli.deterministic;
    cfg.validate()?;
    boostdec::parallel::init_workers(cfg.workers);
    match cli.cmd {
        Command::TrainBase => commands::train_base(&loaded),
        Command::Collect => commands::collect(&loaded),
        Command::Augment => commands::augment(&loaded),
        Command::Transfer => commands::transfer(&loaded),
        Command::TrainPost => commands::train_post(&loaded),
        Command::Fer => commands::fer(&loaded),
        Command::TestFer => commands::test_fer(&loaded),
        Command::Complexity => commands::complexity(&loaded),
        Command::Histogram => commands::histogram(&loaded),
        Command::ShowConfig => {
            print!("{}", loaded.cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            if code == 2 {
                eprintln!("config error");
            }
            ExitCode::from(code)
        }
    }
}
