use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curvednet::cli;
use curvednet::config::RunConfig;
use curvednet::error::Error;

/// Curved-geometry anomaly recognition toolkit.
#[derive(Parser)]
#[command(name = "curvednet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic hierarchical dataset as embedding CSV files.
    GenData {
        /// Configuration file (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for train/test_id/test_ood CSV files.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the configured architecture on a data directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Data directory (gen-data layout) or a single embedding CSV;
        /// falls back to the config's embeddings_path.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output path for the model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the test splits with a trained model.
    Score {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output scores CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute OOD metrics from a scores CSV.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scores CSV written by `score`.
        #[arg(long)]
        data: PathBuf,
        /// Output metrics text file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the score-density histogram for a scores CSV.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check reverse-mode gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut config = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let config = load_config(&config, seed)?;
            cli::cmd_gen_data(&config, &out)?;
            println!(
                "wrote train.csv, test_id.csv, test_ood.csv to {}",
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            out,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            let report = cli::cmd_train(&config, data.as_deref(), &out)?;
            print!("{}", cli::render_train_report(&report));
            println!("model = {}", out.display());
        }
        Command::Score { model, data, out } => {
            cli::cmd_score(&model, data.as_deref(), &out)?;
            println!("scores = {}", out.display());
        }
        Command::Eval { config, data, out } => {
            let config = load_config(&config, None)?;
            let report = cli::cmd_eval(&data, &out, &config)?;
            print!("{}", cli::render_metrics(&report));
        }
        Command::Report { data, out } => {
            cli::cmd_report(&data, &out)?;
            println!("density = {}", out.display());
        }
        Command::Gradcheck { seed } => {
            cli::cmd_gradcheck(seed.unwrap_or(0))?;
        }
    }
    Ok(())
}

/// Stable exit codes: 0 success, 2 input error, 3 training divergence,
/// 4 metric precondition, 5 gradient-check failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } => 3,
        Error::OneClassOnly(_) => 4,
        Error::GradCheckFailed { .. } => 5,
        Error::ParseError { .. }
        | Error::DimInconsistent { .. }
        | Error::UnknownSplitTag { .. }
        | Error::Config(_)
        | Error::BadSpec(_)
        | Error::Io { .. }
        | Error::EmptyDataset { .. }
        | Error::ModelDataDimMismatch { .. }
        | Error::ClassTooSmall { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
