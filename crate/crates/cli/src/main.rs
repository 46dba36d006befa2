use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cache;
mod commands;
mod config;
mod svg;

/// Bad flags, bad config or a missing input file: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "settle", version, about = "Settlement-layer harmonization and agreement analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Pipeline config (TOML); for `synth`, an optional single-country config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Aggregation factors for `overlap`, e.g. 1,2,4,8,16,30.
    #[arg(long, global = true, value_delimiter = ',')]
    pub factors: Option<Vec<usize>>,

    /// Worker threads; 0 picks one per core. Never changes output.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Seed for `synth` and `train`, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Row fraction kept by `train`, in (0, 1].
    #[arg(long, global = true)]
    pub subsample: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Write synthetic countries and a pipeline config.
    Synth,
    /// Ingest, rasterize and mask every dataset into the cache.
    Harmonize,
    /// National overlap reports, one per aggregation factor.
    Overlap,
    /// Per-region overlap joined with HDI.
    Zonal,
    /// Labelled feature table from the first three datasets.
    Features,
    /// Nested cross-validation, final model and odds ratios.
    Train,
    /// SVG figures from saved outputs.
    Report,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<settle_core::Error>() {
            if matches!(e, settle_core::Error::Io { .. } | settle_core::Error::Format { .. }) {
                return 3;
            }
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let usage: anyhow::Error = UsageError("x".into()).into();
        assert_eq!(exit_code(&usage.context("while loading")), 2);
        let io = settle_core::Error::Io {
            path: "a".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        };
        assert_eq!(exit_code(&anyhow::Error::from(io)), 3);
        let bad = settle_core::Error::Invalid("degenerate".into());
        assert_eq!(exit_code(&anyhow::Error::from(bad)), 1);
    }
}
