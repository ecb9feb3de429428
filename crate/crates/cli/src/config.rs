use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mre_core::network::{ArchSpec, ChannelScale, Family, Region};
use mre_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliResult};

/// Everything a command can be configured with. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    pub input_size: usize,
    pub channel_scale: ChannelScale,
    /// Hidden widths of the classifier head; the family default when absent.
    pub fc_widths: Option<Vec<usize>>,
    pub num_classes: usize,
    pub region: Region,
    pub base_lr: f64,
    pub total_iterations: u64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// On-the-fly random crop and flip during training.
    pub augment: bool,
    pub crop_margin: usize,
    /// Fifteen extra variants per image at preprocessing time.
    pub augment_offline: bool,
    pub seed: u64,
    /// Per-channel mean subtracted from [0,1] intensities.
    pub dataset_mean: [f32; 3],
    /// Template landmarks in unit-square coordinates; the built-in one when absent.
    pub template: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Family::Alexnet,
            input_size: 32,
            channel_scale: ChannelScale::new(1, 8).unwrap(),
            fc_widths: None,
            num_classes: 7,
            region: Region::LeftEye,
            base_lr: 0.01,
            total_iterations: 300,
            batch_size: 16,
            momentum: 0.9,
            weight_decay: 1e-4,
            augment: false,
            crop_margin: 4,
            augment_offline: false,
            seed: 0,
            dataset_mean: [0.5; 3],
            template: None,
            manifest: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(usage)
    }

    pub fn arch(&self) -> ArchSpec {
        let mut arch = ArchSpec::new(self.family, self.input_size, self.channel_scale)
            .with_classes(self.num_classes);
        if let Some(widths) = &self.fc_widths {
            arch = arch.with_fc_widths(widths.clone());
        }
        arch
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: self.arch(),
            region: self.region,
            base_lr: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            iterations: self.total_iterations,
            batch_size: self.batch_size,
            augment: self.augment,
            crop_margin: self.crop_margin,
            seed: self.seed,
        }
    }

    /// Reject settings that would only fail later, deep inside a command.
    pub fn validate(&self) -> CliResult<()> {
        self.arch().validate().map_err(usage)?;
        self.train_config().sgd().validate().map_err(usage)?;
        if self.batch_size == 0 {
            return Err(usage(anyhow::anyhow!("batch_size must be positive")));
        }
        if self.dataset_mean.iter().any(|m| !m.is_finite()) {
            return Err(usage(anyhow::anyhow!("dataset_mean must be finite")));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| usage(anyhow::anyhow!("no output directory; pass --out")))
    }

    pub fn manifest_path(&self) -> CliResult<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| usage(anyhow::anyhow!("no manifest; pass --manifest")))
    }

    /// Write the effective configuration next to a command's outputs.
    pub fn echo(&self, dir: &Path, name: &str) -> anyhow::Result<()> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
