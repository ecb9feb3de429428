use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use mre_core::training::{accuracy, save_checkpoint, train, write_trace_csv};

use super::{create_dir, load_pairs};
use crate::config::RunConfig;
use crate::error::CliResult;

pub const CHECKPOINT_FILE: &str = "checkpoint.mre";
pub const TRACE_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub train_accuracy: f64,
}

pub fn run(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let manifest = cfg.manifest_path()?;
    let out = cfg.out_dir()?;
    let (_, samples) = load_pairs(manifest, cfg.input_size, cfg.dataset_mean)?;
    create_dir(out)?;
    cfg.echo(out, CONFIG_FILE)?;

    let tc = cfg.train_config();
    log::info!(
        "training {} sub-network on {} samples for {} iterations",
        tc.region,
        samples.len(),
        tc.iterations
    );
    let outcome = train(&tc, &samples).context("training")?;

    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.net, &outcome.optimizer, &checkpoint)
        .with_context(|| format!("writing {}", checkpoint.display()))?;
    let trace = out.join(TRACE_FILE);
    let file = File::create(&trace).with_context(|| format!("writing {}", trace.display()))?;
    write_trace_csv(&outcome.trace, BufWriter::new(file))?;

    let train_accuracy = accuracy(&outcome.net, &samples)?;
    log::info!("train accuracy {train_accuracy:.4}");
    Ok(TrainSummary {
        checkpoint,
        trace,
        train_accuracy,
    })
}
