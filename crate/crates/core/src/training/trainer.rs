//! Mini-batch training loop.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{collate, RegionSample};
use crate::error::{Error, Result};
use crate::network::{build_subnetwork, ArchSpec, Region, SubNetwork};
use crate::ops::softmax;
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::Tensor;
use crate::training::loss::{argmax, softmax_cross_entropy};
use crate::training::sgd::{OptimizerState, SgdConfig};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_474d;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub region: Region,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Number of optimizer steps; the learning rate decays linearly to 0 over them.
    pub iterations: u64,
    pub batch_size: usize,
    /// Random crop from a zero-padded copy plus a random horizontal flip.
    pub augment: bool,
    pub crop_margin: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Optimizer settings used at desk scale: momentum 0.9, weight decay 1e-4.
    pub fn new(arch: ArchSpec, region: Region) -> Self {
        Self {
            arch,
            region,
            base_lr: 0.001,
            momentum: 0.9,
            weight_decay: 1e-4,
            iterations: 1000,
            batch_size: 16,
            augment: false,
            crop_margin: 4,
            seed: 0,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig::linear(
            self.base_lr,
            self.momentum,
            self.weight_decay,
            self.iterations,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

pub struct TrainOutcome {
    pub net: SubNetwork,
    pub optimizer: OptimizerState,
    pub trace: Vec<TraceRow>,
}

/// Random `margin`-pixel shift (zero fill) and a coin-flip mirror of one `1 × C × S × S` image.
pub fn random_crop_flip(image: &Tensor, margin: usize, rng: &mut Rng) -> Result<Tensor> {
    let (_, c, h, w) = image.dims4()?;
    let dy = rng.random_range(0..=2 * margin) as isize - margin as isize;
    let dx = rng.random_range(0..=2 * margin) as isize - margin as isize;
    let flip = rng.random_bool(0.5);
    let src = image.data();
    let mut out = Tensor::zeros(image.shape());
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let xx = if flip { w - 1 - x } else { x };
                let sx = xx as isize + dx;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                dst[(ch * h + y) * w + x] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    Ok(out)
}

fn check_dataset(config: &TrainConfig, data: &[RegionSample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    if config.batch_size > data.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds the {} available samples (last partial batches are dropped)",
            config.batch_size,
            data.len()
        )));
    }
    let s = config.arch.input_size;
    let expected = [1, config.arch.in_channels, s, s];
    for (i, sample) in data.iter().enumerate() {
        if sample.face.shape() != expected || sample.region.shape() != expected {
            return Err(Error::Shape(format!(
                "sample {i} has shape {:?}, expected {expected:?}",
                sample.face.shape()
            )));
        }
        if sample.label >= config.arch.num_classes {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: sample.label,
                classes: config.arch.num_classes,
            });
        }
    }
    Ok(())
}

/// Train one sub-network from scratch; deterministic in `(config, data)`.
pub fn train(config: &TrainConfig, data: &[RegionSample]) -> Result<TrainOutcome> {
    check_dataset(config, data)?;
    let mut net = build_subnetwork(&config.arch, config.region, config.seed)?;
    let mut optimizer = OptimizerState::new(config.sgd(), &net)?;
    let mut shuffle_rng = seeded(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut augment_rng = seeded(derive_seed(config.seed, AUGMENT_STREAM));

    let batches_per_epoch = data.len() / config.batch_size;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.iterations as usize);

    for iteration in 0..config.iterations {
        let slot = (iteration as usize) % batches_per_epoch;
        if slot == 0 {
            order.shuffle(&mut shuffle_rng);
        }
        let batch: Vec<&RegionSample> = order
            [slot * config.batch_size..(slot + 1) * config.batch_size]
            .iter()
            .map(|&i| &data[i])
            .collect();
        let (face, region, labels) = if config.augment {
            let mut augmented = Vec::with_capacity(batch.len());
            for s in &batch {
                augmented.push(RegionSample {
                    face: random_crop_flip(&s.face, config.crop_margin, &mut augment_rng)?,
                    region: random_crop_flip(&s.region, config.crop_margin, &mut augment_rng)?,
                    label: s.label,
                    clip_id: None,
                });
            }
            collate(&augmented.iter().collect::<Vec<_>>())?
        } else {
            collate(&batch)?
        };

        let lr = optimizer.current_lr();
        let logits = net.forward(&face, &region, true)?;
        let report = softmax_cross_entropy(&logits, &labels)?;
        if !report.loss.is_finite() || !logits.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        net.backward(&report.logit_gradient)?;
        optimizer.step(&mut net)?;
        trace.push(TraceRow {
            iteration,
            lr,
            loss: report.loss,
            accuracy: report.batch_accuracy,
        });
        log::debug!(
            "iter {iteration} lr {lr:.6} loss {:.5} acc {:.3}",
            report.loss,
            report.batch_accuracy
        );
    }
    Ok(TrainOutcome {
        net,
        optimizer,
        trace,
    })
}

/// Softmax scores `N × K` for every sample, evaluated in chunks of `batch`.
pub fn predict_scores(net: &SubNetwork, data: &[RegionSample], batch: usize) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("nothing to predict".into()));
    }
    let mut parts = Vec::new();
    for chunk in data.chunks(batch.max(1)) {
        let refs: Vec<&RegionSample> = chunk.iter().collect();
        let (face, region, _) = collate(&refs)?;
        parts.push(softmax(&net.infer(&face, &region)?)?);
    }
    Tensor::stack_batch(&parts.iter().collect::<Vec<_>>())
}

/// Fraction of samples whose top-scoring class equals the label.
pub fn accuracy(net: &SubNetwork, data: &[RegionSample]) -> Result<f64> {
    let scores = predict_scores(net, data, 32)?;
    let k = net.spec().num_classes;
    let correct = scores
        .data()
        .chunks_exact(k)
        .zip(data)
        .filter(|(row, s)| argmax(row) == s.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Write the loss trace as CSV with header `iteration,lr,loss,accuracy`.
pub fn write_trace_csv(trace: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "iteration,lr,loss,accuracy")?;
    for row in trace {
        writeln!(
            out,
            "{},{},{},{}",
            row.iteration, row.lr, row.loss, row.accuracy
        )?;
    }
    Ok(())
}
