use crate::error::{Error, Result};
use crate::preprocess::image::ImageBuffer;
use crate::tensor::Tensor;

/// `1 × 3 × H × W` tensor with samples scaled to `[0, 1]` minus the per-channel
/// `mean`. Grayscale images are replicated across the three channels.
pub fn to_tensor(img: &ImageBuffer, mean: [f32; 3]) -> Tensor {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let plane = w * h;
    let mut t = Tensor::zeros(&[1, 3, h, w]);
    let dst = t.data_mut();
    for (i, px) in img.pixels().chunks_exact(c).enumerate() {
        for ch in 0..3 {
            let v = px[if c == 1 { 0 } else { ch }];
            dst[ch * plane + i] = v as f32 / 255.0 - mean[ch];
        }
    }
    t
}

/// Inverse of [`to_tensor`] for a single `1 × 3 × H × W` sample, quantized to 8 bits.
pub fn from_tensor(t: &Tensor, mean: [f32; 3]) -> Result<ImageBuffer> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 || c != 3 {
        return Err(Error::Shape(format!(
            "expected a 1×3×H×W tensor, got {:?}",
            t.shape()
        )));
    }
    let plane = w * h;
    let src = t.data();
    let mut pixels = Vec::with_capacity(plane * 3);
    for i in 0..plane {
        for ch in 0..3 {
            let v = (src[ch * plane + i] + mean[ch]) * 255.0;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageBuffer::new(w, h, 3, pixels)
}
