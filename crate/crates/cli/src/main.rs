//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for validation problems (missing files,
//! malformed manifests or configuration), 3 for runtime failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "vocalscreen",
    about = "Audio screening pipeline: fixed-segment features, transfer-learned deep classifiers, bottleneck features and nested cross-validated evaluation",
    version
)]
struct Cli {
    /// Declarative run configuration (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed (mandatory, here or in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Deep architecture: cnn, lstm or resnet.
    #[arg(long, global = true)]
    arch: Option<String>,

    /// Feature family: mfcc or fbank.
    #[arg(long, global = true)]
    features: Option<String>,

    /// Worker threads (0 = all cores). Results are identical for any
    /// thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature matrices for every manifest recording.
    Features {
        /// Output format: the binary container or debug CSV.
        #[arg(long, default_value = "binary", value_parser = ["binary", "csv"])]
        format: String,
    },
    /// Train a backbone on the four-class manifest.
    Pretrain,
    /// Train the replacement head on the screening manifest.
    Finetune,
    /// Emit one bottleneck vector file per screening recording.
    Bottleneck,
    /// Run the nested cross-validated evaluation.
    Cv,
    /// Generate the synthetic benchmark corpus.
    Synth,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        arch: cli.arch.clone(),
        features: cli.features.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Features { format } => commands::cmd_features(&cfg, format == "csv"),
        Command::Pretrain => commands::cmd_pretrain(&cfg).map(|_| ()),
        Command::Finetune => commands::cmd_finetune(&cfg),
        Command::Bottleneck => commands::cmd_bottleneck(&cfg),
        Command::Cv => commands::cmd_cv(&cfg).map(|_| ()),
        Command::Synth => commands::cmd_synth(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err
                .downcast_ref::<vocalscreen::Error>()
                .map(vocalscreen::Error::is_validation)
                // anyhow-level errors are config/path problems
                .unwrap_or(true);
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}
