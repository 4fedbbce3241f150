use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use synthresh::commands::{cmd_gen_corpus, cmd_run, cmd_score, ScoreFormat};
use synthresh::CliError;

/// Ensemble anomaly detection with thresholds calibrated on synthetic anomalies.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Shuttle,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic weather corpus, one CSV per station.
    GenCorpus {
        #[arg(long, default_value_t = 50)]
        stations: usize,
        #[arg(long, default_value_t = 90)]
        days: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run split, contamination, fitting, calibration and evaluation.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score data with a stored ensemble and flag rows at its threshold.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tabular input layout.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus {
            stations,
            days,
            seed,
            out,
        } => {
            let s = cmd_gen_corpus(stations, days, seed, &out)?;
            for (id, ticks) in &s.stations {
                println!("{id}: {ticks} ticks");
            }
            println!("wrote {} files to {}", s.files.len(), out.display());
        }
        Command::Run { config, seed, out } => {
            let r = cmd_run(&config, seed, out.as_deref())?;
            let rep = &r.outcome.report;
            println!(
                "threshold {} | test recall {:.4} precision {:.4} f1 {:.4}",
                rep.threshold, rep.test.recall, rep.test.precision, rep.test.f1
            );
            println!("outputs in {}", r.output_dir.display());
        }
        Command::Score {
            model,
            data,
            out,
            format,
        } => {
            let format = match format {
                Format::Csv => ScoreFormat::Csv,
                Format::Shuttle => ScoreFormat::Shuttle,
            };
            cmd_score(&model, &data, out.as_deref(), format)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SYNTHRESH_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
