use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Concatenate along the channel axis: `a` takes channels `[0, Ca)`, `b` takes `[Ca, Ca+Cb)`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(shape_err!(
            "concat needs matching batch and spatial extents, got {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    if ca + cb == 0 {
        return Ok(Tensor::empty_channels(na, ha, wa));
    }
    let (sa, sb) = (ca * ha * wa, cb * hb * wb);
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..na {
        data.extend_from_slice(&a.data()[n * sa..(n + 1) * sa]);
        data.extend_from_slice(&b.data()[n * sb..(n + 1) * sb]);
    }
    Tensor::new(&[na, ca + cb, ha, wa], data)
}

/// Inverse of [`concat_channels`]: split into the first `channels_a` channels and the rest.
pub fn split_channels(grad: &Tensor, channels_a: usize) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = grad.dims4()?;
    if channels_a > c {
        return Err(shape_err!("cannot split {channels_a} channels out of {c}"));
    }
    let cb = c - channels_a;
    if c == 0 {
        return Ok((
            Tensor::empty_channels(n, h, w),
            Tensor::empty_channels(n, h, w),
        ));
    }
    let (sa, sb) = (channels_a * h * w, cb * h * w);
    let mut a = Vec::with_capacity(n * sa);
    let mut b = Vec::with_capacity(n * sb);
    for item in grad.data().chunks_exact(sa + sb) {
        a.extend_from_slice(&item[..sa]);
        b.extend_from_slice(&item[sa..]);
    }
    let part = |channels, data: Vec<f32>| {
        if channels == 0 {
            Ok(Tensor::empty_channels(n, h, w))
        } else {
            Tensor::new(&[n, channels, h, w], data)
        }
    };
    Ok((part(channels_a, a)?, part(cb, b)?))
}
