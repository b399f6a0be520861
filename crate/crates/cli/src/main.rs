mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::UsageError;

#[derive(Parser)]
#[command(name = "glucast", version, about = "Multi-step glucose forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic CGM dataset to `<out>/cgm.csv`.
    Generate(Common),
    /// Train one deep forecaster; writes `model.json` and `train_report.json`.
    Train(Common),
    /// Score checkpoints and baselines on the test split.
    Evaluate(Common),
    /// Train one model per loss-weight base and tabulate the final-step error.
    #[command(name = "sweep-bw")]
    SweepBw(Common),
    /// Forecast a single history read from a file or stdin.
    Forecast(ForecastArgs),
}

#[derive(Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides `checkpoint` in the config file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// History file; stdin when neither this nor `history` is given.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::init_threads().and_then(|()| match cli.command {
        Command::Generate(c) => commands::generate(&c),
        Command::Train(c) => commands::train(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::SweepBw(c) => commands::sweep_bw(&c),
        Command::Forecast(a) => commands::forecast(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
