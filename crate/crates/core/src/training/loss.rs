use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over a batch together with its logit gradient.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub loss: f64,
    /// `(softmax(logits) − onehot(labels)) / N`
    pub logit_gradient: Tensor,
    /// Fraction of rows whose argmax equals the label.
    pub batch_accuracy: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossReport> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes: k,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0f64;
    let mut correct = 0usize;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = row.iter().map(|&z| (z as f64 - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += sum.ln() + max - row[label] as f64;
        if argmax(row) == label {
            correct += 1;
        }
        for (j, e) in exps.iter().enumerate() {
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push(((e / sum - onehot) * inv_n) as f32);
        }
    }
    Ok(LossReport {
        loss: total * inv_n,
        logit_gradient: Tensor::new(&[n, k], grad)?,
        batch_accuracy: correct as f64 * inv_n,
    })
}
