//! 2×2, stride-2 max pooling.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Winning input position for every pooled output element.
///
/// Indices are flat offsets into the forward input, so the map is only valid
/// together with the input shape it was recorded for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxMap {
    input_shape: [usize; 4],
    indices: Vec<usize>,
}

impl ArgmaxMap {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 4] {
        let [n, c, h, w] = self.input_shape;
        [n, c, h / 2, w / 2]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Max over each non-overlapping 2×2 window.
///
/// Ties go to the first maximum in row-major window order. Odd spatial
/// extents are rejected.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, ArgmaxMap)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!(
            "max pooling needs even spatial extents, got {h}×{w}"
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut indices = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let window = [top, top + 1, top + w, top + w + 1];
                let mut best = window[0];
                for &idx in &window[1..] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                indices.push(best);
            }
        }
    }
    Ok((
        Tensor::new(&[n, c, oh, ow], out)?,
        ArgmaxMap {
            input_shape: [n, c, h, w],
            indices,
        },
    ))
}

/// Route each upstream gradient to the recorded argmax; zeros elsewhere.
pub fn maxpool2x2_backward(
    map: &ArgmaxMap,
    grad_out: &Tensor,
    input_shape: &[usize],
) -> Result<Tensor> {
    if input_shape != map.input_shape {
        return Err(shape_err!(
            "argmax map was recorded for input {:?}, not {input_shape:?}",
            map.input_shape
        ));
    }
    if grad_out.shape() != map.output_shape() {
        return Err(shape_err!(
            "grad_out shape {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            map.output_shape()
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let dst = grad.data_mut();
    for (&idx, &g) in map.indices.iter().zip(grad_out.data()) {
        dst[idx] += g;
    }
    Ok(grad)
}
