use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wafer_cli::{run, CliError, Command, RunConfig};
use wafer_core::cnn::CnnVariant;
use wafer_core::DefectClass;

/// Wafer-map defect classification pipeline.
///
/// Every subcommand reads the run configuration (TOML; all keys optional,
/// see `wafer config`), writes its artifacts under the output directory and
/// records them in `manifest_<command>.json`. Exit status: 1 configuration
/// error, 2 data error, 3 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "wafer", version)]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.output`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `paths.input` (JSON-lines wafer records).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the effective configuration as TOML.
    Config,
    /// Generate a synthetic labelled set into data/wafers.jsonl.
    Synth,
    /// Validate input records (or the synthetic set), resize and split into train/test.
    Ingest,
    /// Train the convolutional autoencoder on the training split.
    TrainAe,
    /// Augment the training split with latent-noise samples and report counts.
    Augment,
    /// Train the classifier.
    TrainCnn {
        /// Architecture variant: full, no_conv3 or no_dense1.
        #[arg(long, default_value = "full", value_parser = parse_variant)]
        variant: CnnVariant,
        /// Train on the original training split only.
        #[arg(long)]
        no_augment: bool,
    },
    /// Extract the 59 handcrafted features and fit LR, SVM and random forest.
    TrainBaselines,
    /// Score every trained model on the test split.
    Evaluate,
    /// Occlusion-sensitivity heatmap of the classifier.
    Occlusion {
        /// Restrict to test wafers of this class (e.g. Center).
        #[arg(long, value_parser = parse_class)]
        class: Option<DefectClass>,
    },
    /// Train and score the full, no_conv3 and no_dense1 variants.
    Ablate,
    /// synth (without input), ingest, train-ae, augment, train-cnn with and
    /// without augmentation, train-baselines, evaluate, occlusion.
    Pipeline,
}

fn parse_variant(s: &str) -> Result<CnnVariant, String> {
    CnnVariant::from_name(s).map_err(|e| e.to_string())
}

fn parse_class(s: &str) -> Result<DefectClass, String> {
    DefectClass::from_name(s).map_err(|e| e.to_string())
}

fn config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.output {
        cfg.paths.output = out.clone();
    }
    if let Some(input) = &cli.input {
        cfg.paths.input = Some(input.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(&cli).and_then(|cfg| {
        let cmd = match &cli.command {
            Cmd::Config => {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            Cmd::Synth => Command::Synth,
            Cmd::Ingest => Command::Ingest,
            Cmd::TrainAe => Command::TrainAe,
            Cmd::Augment => Command::Augment,
            Cmd::TrainCnn {
                variant,
                no_augment,
            } => Command::TrainCnn {
                variant: *variant,
                no_augment: *no_augment,
            },
            Cmd::TrainBaselines => Command::TrainBaselines,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Occlusion { class } => Command::Occlusion { class: *class },
            Cmd::Ablate => Command::Ablate,
            Cmd::Pipeline => Command::Pipeline,
        };
        let manifest = run(&cmd, &cfg)?;
        eprintln!(
            "[wafer] {} done: {} artifact(s) in {}",
            manifest.command,
            manifest.artifacts.len(),
            cfg.paths.output.display()
        );
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
