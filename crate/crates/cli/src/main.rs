use std::path::PathBuf;
use std::process::ExitCode;

use broomscan_cli::{prepare, Context, Overrides, Stage};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "broomscan", version, about = "Broomrape detection from satellite time series")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rerun stages even when their manifest says they are up to date.
    #[arg(long, global = true)]
    stage_force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Filter clear scenes and gather weather per field.
    Ingest,
    /// Compute the 20 spectral indices per scene.
    Indices,
    /// Infer the five canopy traits per scene.
    Traits,
    /// Align fields on the thermal-time grid and build the dataset.
    Align,
    /// Detect growth stages and the vegetation mask per field.
    Mask,
    /// Cross-validate and fit the LSTM classifier.
    Train,
    /// Score the held-out test set.
    Evaluate,
    /// Permutation feature importance.
    Importance,
    /// Generate a synthetic campaign or dataset.
    Synth,
    /// Write CSV and SVG report files.
    Report,
    /// Run every stage for the configured data source.
    Pipeline,
}

fn stage(c: Command) -> Option<Stage> {
    Some(match c {
        Command::Ingest => Stage::Ingest,
        Command::Indices => Stage::Indices,
        Command::Traits => Stage::Traits,
        Command::Align => Stage::Align,
        Command::Mask => Stage::Mask,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Importance => Stage::Importance,
        Command::Synth => Stage::Synth,
        Command::Report => Stage::Report,
        Command::Pipeline => return None,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
    };
    let result = prepare(cli.config.as_deref(), &overrides).and_then(|cfg| {
        let ctx = Context::new(cfg, cli.stage_force);
        match stage(cli.command) {
            Some(s) => ctx.run(s).map(|_| ()),
            None => ctx.pipeline().map(|_| ()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
