use crate::error::Result;
use crate::tensor::Tensor;

/// Row-wise softmax of an `N × K` logit block, shifted by the row maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = row.iter().map(|&z| ((z - max) as f64).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|&e| (e / total) as f32));
    }
    Tensor::new(logits.shape(), out)
}
