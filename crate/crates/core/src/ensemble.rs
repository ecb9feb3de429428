//! Weighted score ensembling, clip averaging and confusion-matrix metrics.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::network::Region;
use crate::tensor::Tensor;
use crate::training::argmax;

pub const NUM_CLASSES: usize = 7;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const DISTRIBUTION_TOL: f64 = 1e-4;

/// Convex weights over the three sub-networks, in left_eye, nose, mouth order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct EnsembleWeights {
    alpha: [f64; 3],
}

impl EnsembleWeights {
    pub fn new(alpha: [f64; 3]) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ensemble weights must be finite and nonnegative, got {alpha:?}"
            )));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "ensemble weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn vgg() -> Self {
        Self {
            alpha: [4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0],
        }
    }

    pub fn alexnet() -> Self {
        Self {
            alpha: [2.0 / 5.0, 1.0 / 5.0, 2.0 / 5.0],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vgg" | "vgg16" => Some(Self::vgg()),
            "alexnet" => Some(Self::alexnet()),
            _ => None,
        }
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn weight(&self, region: Region) -> f64 {
        self.alpha[Region::ALL.iter().position(|&r| r == region).unwrap()]
    }
}

impl TryFrom<[f64; 3]> for EnsembleWeights {
    type Error = Error;

    fn try_from(alpha: [f64; 3]) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<EnsembleWeights> for [f64; 3] {
    fn from(w: EnsembleWeights) -> Self {
        w.alpha
    }
}

/// Accepts a preset name or `a,b,c`; each term may be a decimal or a fraction like `4/7`.
impl FromStr for EnsembleWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(w) = Self::preset(s.trim()) {
            return Ok(w);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "weights '{s}' are neither a preset (vgg, alexnet) nor three comma-separated values"
            )));
        }
        let mut alpha = [0.0; 3];
        for (slot, part) in alpha.iter_mut().zip(&parts) {
            *slot = parse_number(part)
                .ok_or_else(|| Error::InvalidArgument(format!("bad weight '{part}' in '{s}'")))?;
        }
        Self::new(alpha)
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let d: f64 = d.trim().parse().ok()?;
            (d != 0.0).then_some(n.trim().parse::<f64>().ok()? / d)
        }
        None => s.parse().ok(),
    }
}

impl fmt::Display for EnsembleWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.alpha;
        write!(f, "{a},{b},{c}")
    }
}

fn check_distributions(scores: &Tensor, which: &str) -> Result<(usize, usize)> {
    let (n, k) = scores.dims2()?;
    for (i, row) in scores.data().chunks(k).enumerate() {
        let sum: f64 = row.iter().map(|&v| v as f64).sum();
        if row
            .iter()
            .any(|&v| !v.is_finite() || (v as f64) < -DISTRIBUTION_TOL)
            || (sum - 1.0).abs() > DISTRIBUTION_TOL
        {
            return Err(Error::InvalidArgument(format!(
                "{which} row {i} is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok((n, k))
}

/// `Σ α_n · scores_n` over softmax score matrices in left_eye, nose, mouth order.
pub fn ensemble_predict(scores: [&Tensor; 3], weights: &EnsembleWeights) -> Result<Tensor> {
    let dims = [
        check_distributions(scores[0], "left_eye scores")?,
        check_distributions(scores[1], "nose scores")?,
        check_distributions(scores[2], "mouth scores")?,
    ];
    if dims[1] != dims[0] || dims[2] != dims[0] {
        return Err(shape_err!(
            "score matrices disagree: {:?}, {:?}, {:?}",
            dims[0],
            dims[1],
            dims[2]
        ));
    }
    let [a, b, c] = weights.alpha;
    let out: Vec<f32> = scores[0]
        .data()
        .iter()
        .zip(scores[1].data())
        .zip(scores[2].data())
        .map(|((&x, &y), &z)| (a * x as f64 + b * y as f64 + c * z as f64) as f32)
        .collect();
    Tensor::new(scores[0].shape(), out)
}

/// Row-wise argmax, ties to the lowest class index.
pub fn predictions(scores: &Tensor) -> Result<Vec<usize>> {
    let (_, k) = scores.dims2()?;
    Ok(scores.data().chunks(k).map(argmax).collect())
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Frames belonging to one clip.
#[derive(Clone, Debug)]
pub struct ClipFrames<'a> {
    pub clip_id: String,
    pub frames: Vec<&'a [f32]>,
}

/// Group row indices by clip id, keeping clips in order of first appearance.
pub fn group_by_clip<S: AsRef<str>>(clip_ids: &[S]) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<(String, Vec<usize>)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, id) in clip_ids.iter().enumerate() {
        let id = id.as_ref();
        match seen.get(id) {
            Some(&slot) => order[slot].1.push(i),
            None => {
                seen.insert(id, order.len());
                order.push((id.to_string(), vec![i]));
            }
        }
    }
    order
}

/// Unweighted mean of each clip's frame scores; one output row per clip.
pub fn clip_average(clips: &[ClipFrames<'_>]) -> Result<Tensor> {
    let first = clips
        .first()
        .ok_or_else(|| Error::InvalidArgument("no clips to average".into()))?;
    let width = first.frames.first().map(|f| f.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(clips.len() * width);
    let mut column = Vec::new();
    for clip in clips {
        if clip.frames.is_empty() {
            return Err(Error::EmptyClip(clip.clip_id.clone()));
        }
        if let Some(bad) = clip.frames.iter().find(|f| f.len() != width) {
            return Err(shape_err!(
                "clip '{}' has a frame of width {}, expected {width}",
                clip.clip_id,
                bad.len()
            ));
        }
        let k = clip.frames.len() as f64;
        for c in 0..width {
            column.clear();
            column.extend(clip.frames.iter().map(|f| f[c] as f64));
            out.push((pairwise_sum(&column) / k) as f32);
        }
    }
    Tensor::new(&[clips.len(), width], out)
}

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(shape_err!("confusion counts must be square and non-empty"));
        }
        Ok(Self {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "class pair ({truth}, {predicted}) outside 0..{}",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    /// Recall per true class; `None` for classes without samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let total = self.row_sum(c);
                (total > 0).then(|| self.get(c, c) as f64 / total as f64)
            })
            .collect()
    }

    /// Row-normalized frequencies; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|c| {
                let total = self.row_sum(c);
                self.row(c)
                    .iter()
                    .map(|&v| {
                        if total > 0 {
                            v as f64 / total as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn confusion_with_classes(
    preds: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &t) in preds.iter().zip(labels) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    confusion_with_classes(preds, labels, NUM_CLASSES)
}

/// Mean of per-class recall. Classes with no samples are skipped with a warning.
pub fn mean_diagonal(cm: &ConfusionMatrix) -> Result<f64> {
    let accs = cm.per_class_accuracy();
    let present: Vec<f64> = accs.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument(
            "confusion matrix has no samples".into(),
        ));
    }
    let empty: Vec<usize> = (0..accs.len()).filter(|&c| accs[c].is_none()).collect();
    if !empty.is_empty() {
        log::warn!("classes {empty:?} have no samples and are left out of the mean diagonal");
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Normalized matrix block, a per-class accuracy line and the mean diagonal.
pub fn write_report(out: &mut impl Write, cm: &ConfusionMatrix) -> Result<()> {
    let mean = mean_diagonal(cm)?;
    let k = cm.classes();
    let header: Vec<String> = (0..k).map(|c| c.to_string()).collect();
    writeln!(out, "true\\pred,{}", header.join(","))?;
    for (c, row) in cm.normalized().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{c},{}", cells.join(","))?;
    }
    let accs: Vec<String> = cm
        .per_class_accuracy()
        .iter()
        .map(|a| a.map(|v| format!("{v:.6}")).unwrap_or_default())
        .collect();
    writeln!(out, "per_class_accuracy,{}", accs.join(","))?;
    writeln!(out, "mean_diagonal,{mean:.6}")?;
    Ok(())
}
