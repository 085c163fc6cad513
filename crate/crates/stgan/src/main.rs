use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stgan::pipeline::{self, Overrides, Run};

#[derive(Parser)]
#[command(name = "stgan", version, about = "Sentiment-seeded GAN forecasting of daily closes")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured number of training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate raw prices, corpus and seed corpus and copy them into the run.
    Ingest,
    /// Fit ARIMA and scalers on the training span and write the feature matrix.
    Features,
    /// Train the Naive Bayes sentiment classifier on the seed corpus.
    TrainSentiment,
    /// Build the standardized latent seed from the target's news.
    BuildLatent,
    /// Train the ST-GAN and the network baselines.
    Train,
    /// Roll the ST-GAN forward from the cutoff.
    Forecast,
    /// Run the horizon grid and write the report and plot data.
    Evaluate,
}

fn execute(cli: &Cli) -> stgan::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        epochs: cli.epochs,
    };
    let run = Run::open(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Ingest => pipeline::ingest(&run)?,
        Command::Features => pipeline::features(&run)?,
        Command::TrainSentiment => pipeline::train_sentiment(&run)?,
        Command::BuildLatent => pipeline::build_latent(&run)?,
        Command::Train => pipeline::train(&run)?,
        Command::Forecast => println!("{}", pipeline::forecast(&run)?.display()),
        Command::Evaluate => {
            let file = pipeline::evaluate(&run)?;
            print!("{}", pipeline::render_table(&file.report));
            for note in &file.report.notes {
                println!("note: {note}");
            }
        }
    }
    println!("run directory: {}", run.layout.root.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
