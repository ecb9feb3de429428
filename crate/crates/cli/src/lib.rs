//! The `mre` command-line pipeline: preprocess, train, eval, predict and
//! inspect-features.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mre_core::ensemble::EnsembleWeights;
use mre_core::network::Region;

use crate::commands::eval::Protocol;
use crate::config::RunConfig;
use crate::error::{usage, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "mre",
    version,
    about = "Multi-region ensemble CNN for facial expressions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align faces, cut out regions and write per-region pair manifests.
    Preprocess {
        /// Dataset manifest with header image,landmarks,label,clip_id.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Template landmarks (.pts68) in unit-square coordinates.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Crop size in pixels.
        #[arg(long)]
        size: Option<usize>,
        /// Also write the fifteen offline variants of every crop.
        #[arg(long)]
        augment_offline: bool,
        /// Exit with an error if any row fails.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train one sub-network on a pair manifest.
    Train {
        /// Pair manifest with header face,region,label,clip_id.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        region: Option<Region>,
        #[arg(long)]
        iterations: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score the weighted ensemble of three sub-networks.
    Eval {
        /// One checkpoint per region, in any order.
        #[arg(long = "checkpoint", required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Pair manifests, in the same order as the checkpoints.
        #[arg(long = "manifest", required = true, num_args = 1..)]
        manifests: Vec<PathBuf>,
        /// Preset (vgg, alexnet) or left_eye,nose,mouth weights.
        #[arg(long, default_value = "vgg")]
        weights: EnsembleWeights,
        #[arg(long, value_enum, default_value_t = Protocol::Still)]
        protocol: Protocol,
        #[command(flatten)]
        common: Common,
    },
    /// Classify one raw image from its landmarks.
    Predict {
        #[arg(long = "checkpoint", required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        /// Defaults to the image path with `.pts68` appended.
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long, default_value = "vgg")]
        weights: EnsembleWeights,
        #[command(flatten)]
        common: Common,
    },
    /// Export the feature maps of one layer as grayscale tiles.
    InspectFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Aligned whole-face image.
        #[arg(long)]
        face: PathBuf,
        /// Region crop paired with the face.
        #[arg(long)]
        region: PathBuf,
        /// Layer name such as face.conv1 or region.pool1; a bare name means the face branch.
        #[arg(long)]
        layer: String,
        #[command(flatten)]
        common: Common,
    },
}

fn base_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

/// Execute a parsed command, writing its human-readable result to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess {
            manifest,
            template,
            size,
            augment_offline,
            strict,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            cfg.manifest = manifest.or(cfg.manifest);
            cfg.template = template.or(cfg.template);
            cfg.input_size = size.unwrap_or(cfg.input_size);
            cfg.augment_offline |= augment_offline;
            if cfg.input_size == 0 {
                return Err(usage(anyhow::anyhow!("crop size must be positive")));
            }
            let summary = commands::preprocess::run(&cfg, strict)?;
            println!(
                "rows ok {}, failed {}, images written {}",
                summary.rows_ok, summary.rows_failed, summary.images_written
            );
        }
        Command::Train {
            manifest,
            region,
            iterations,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            cfg.manifest = manifest.or(cfg.manifest);
            cfg.region = region.unwrap_or(cfg.region);
            cfg.total_iterations = iterations.unwrap_or(cfg.total_iterations);
            cfg.validate()?;
            let summary = commands::train::run(&cfg)?;
            println!(
                "checkpoint {}\ntrace {}\ntrain accuracy {:.4}",
                summary.checkpoint.display(),
                summary.trace.display(),
                summary.train_accuracy
            );
        }
        Command::Eval {
            checkpoints,
            manifests,
            weights,
            protocol,
            common,
        } => {
            let cfg = base_config(&common)?;
            let summary = commands::eval::run(&cfg, &checkpoints, &manifests, &weights, protocol)?;
            println!(
                "mean_diagonal {:.6}\nreport {}",
                summary.mean_diagonal,
                summary.report.display()
            );
        }
        Command::Predict {
            checkpoints,
            image,
            landmarks,
            weights,
            common,
        } => {
            let cfg = base_config(&common)?;
            let p =
                commands::predict::run(&cfg, &checkpoints, &image, landmarks.as_deref(), &weights)?;
            let scores: Vec<String> = p.scores.iter().map(|s| format!("{s:.6}")).collect();
            println!("predicted,{}\nscores,{}", p.class, scores.join(","));
        }
        Command::InspectFeatures {
            checkpoint,
            face,
            region,
            layer,
            common,
        } => {
            let cfg = base_config(&common)?;
            let tiles = commands::inspect::run(&cfg, &checkpoint, &face, &region, &layer)?;
            println!("wrote {tiles} tiles");
        }
    }
    Ok(())
}
