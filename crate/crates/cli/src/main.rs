use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tangent_core::data::CIFAR10_URL;
use tangent_core::experiment::DATA_DIR_ENV;

mod analyze;
mod config;
mod error;
mod output;
mod sweep;
mod train;

use config::{cifar_preset, surrogate_preset, Overrides, RunConfig};
use error::{invalid, CliResult};

/// Tangent sensitivity of ReLU networks: training with generalization-gap
/// estimators, bounds, diagnostics and figure data.
#[derive(Debug, Parser)]
#[command(name = "tangent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a TOML run configuration and record per-epoch estimates.
    Train {
        #[arg(long, short = 'c')]
        config: PathBuf,
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sensitivity, bounds and region diagnostics for a parameter file.
    Analyze(analyze::AnalyzeArgs),
    /// Active-node bound on synthetic geometries over one variable and depth.
    Sweep(sweep::SweepArgs),
    /// Desk-scale CIFAR-10 run: 4x100 network, 10000 / 2000 samples, 20 epochs.
    ReproduceCifar {
        /// Optional configuration; the preset is used otherwise.
        #[arg(long, short = 'c')]
        config: Option<PathBuf>,
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: Option<PathBuf>,
        /// Use a 3072-dimensional Gaussian mixture when CIFAR-10 is not available.
        #[arg(long)]
        surrogate: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// The four bound-sweep panels as CSV.
    ReproduceFig2 {
        #[arg(long, short = 'o')]
        output_dir: PathBuf,
    },
}

fn reproduce_cifar(
    config: Option<&PathBuf>,
    data_dir: Option<PathBuf>,
    surrogate: bool,
    overrides: &Overrides,
) -> CliResult<()> {
    let output_dir = overrides.output_dir.clone().unwrap_or_else(|| PathBuf::from("reproduce-cifar"));
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => cifar_preset(output_dir),
    };
    let mut note = None;
    if config.is_none() && cfg.data.missing_files(data_dir.as_deref()).map_or(true, |m| !m.is_empty()) {
        if !surrogate {
            return Err(invalid(format!(
                "CIFAR-10 binary batches not found; set --data-dir or {DATA_DIR_ENV} to the extracted archive from {CIFAR10_URL}, or pass --surrogate"
            )));
        }
        cfg = surrogate_preset(cfg.output_dir);
        note = Some("Gaussian surrogate data; CIFAR-10 was not available");
        eprintln!("CIFAR-10 not found: running on the Gaussian surrogate");
    }
    overrides.apply(&mut cfg);
    let result = train::run(&cfg, data_dir.as_deref(), "reproduce-cifar", note)?;
    if let Some(s) = result.summary {
        println!("{} epochs, {}", result.epochs, note.unwrap_or("CIFAR-10"));
        print!("{}", s.table());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            config,
            data_dir,
            overrides,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let result = train::run(&cfg, data_dir.as_deref(), "train", None)?;
            if let Some(s) = result.summary {
                print!("{}", s.table());
            }
            Ok(())
        }
        Command::Analyze(args) => {
            let summary = analyze::run(&args)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Sweep(args) => sweep::run(&args),
        Command::ReproduceCifar {
            config,
            data_dir,
            surrogate,
            overrides,
        } => reproduce_cifar(config.as_ref(), data_dir, surrogate, &overrides),
        Command::ReproduceFig2 { output_dir } => sweep::reproduce_fig2(&output_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
