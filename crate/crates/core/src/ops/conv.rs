//! 2-D convolution via im2col, with `f64` accumulation.

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Weights, bias and geometry of one convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    /// `out_channels × in_channels × kh × kw`
    pub weights: Tensor,
    /// `out_channels`
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize, axis: &str) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(shape_err!(
            "{axis}: kernel {kernel} exceeds padded input {padded}"
        ));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(shape_err!(
            "{axis}: ({input} + 2·{pad} − {kernel}) is not divisible by stride {stride}"
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, pad: usize) -> Result<Self> {
        let (out_c, _, kh, kw) = weights.dims4()?;
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        if kh == 0 || kw == 0 {
            return Err(shape_err!("kernel extents must be positive"));
        }
        if bias.shape() != [out_c] {
            return Err(shape_err!(
                "bias shape {:?} does not match out_channels {out_c}",
                bias.shape()
            ));
        }
        Ok(Self {
            weights,
            bias,
            stride,
            pad,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    /// Output shape for an input of shape `N × C × H × W`.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<[usize; 4]> {
        let g = self.geometry(input_shape)?;
        Ok([g.batch, g.out_c, g.out_h, g.out_w])
    }

    fn geometry(&self, input_shape: &[usize]) -> Result<Geometry> {
        let [batch, in_c, in_h, in_w] = *input_shape else {
            return Err(shape_err!("conv input must be NCHW, got {input_shape:?}"));
        };
        let (out_c, w_in_c, kh, kw) = self.weights.dims4()?;
        if in_c != w_in_c {
            return Err(shape_err!(
                "channel dimension: input has {in_c} channels, kernel expects {w_in_c}"
            ));
        }
        Ok(Geometry {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            out_h: out_extent(in_h, kh, self.stride, self.pad, "height")?,
            out_w: out_extent(in_w, kw, self.stride, self.pad, "width")?,
            stride: self.stride,
            pad: self.pad,
        })
    }
}

/// Unfold one sample (`C × H × W`) into a `patch_len × out_plane` matrix.
fn im2col(g: &Geometry, sample: &[f32], col: &mut [f64]) {
    let plane = g.out_plane();
    let mut row = 0;
    for c in 0..g.in_c {
        let chan = &sample[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src_row = &chan[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src_row[ix as usize] as f64
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add a `patch_len × out_plane` matrix back into `C × H × W`.
fn col2im(g: &Geometry, col: &[f64], sample: &mut [f64]) {
    let plane = g.out_plane();
    let mut row = 0;
    for c in 0..g.in_c {
        let chan = &mut sample[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let base = iy as usize * g.in_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            chan[base + ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution: `N × C × H × W → N × out_c × H' × W'`.
pub fn conv2d_forward(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let g = params.geometry(input.shape())?;
    let plane = g.out_plane();
    let patch = g.patch_len();
    let in_stride = g.in_c * g.in_h * g.in_w;
    let weights = params.weights.data();
    let bias = params.bias.data();

    let mut out = vec![0f32; g.batch * g.out_c * plane];
    let mut col = vec![0f64; patch * plane];
    let mut acc = vec![0f64; plane];
    for n in 0..g.batch {
        im2col(
            &g,
            &input.data()[n * in_stride..(n + 1) * in_stride],
            &mut col,
        );
        for oc in 0..g.out_c {
            acc.fill(bias[oc] as f64);
            let w_row = &weights[oc * patch..(oc + 1) * patch];
            for (k, &w) in w_row.iter().enumerate() {
                let w = w as f64;
                let col_row = &col[k * plane..(k + 1) * plane];
                for (a, &x) in acc.iter_mut().zip(col_row) {
                    *a += w * x;
                }
            }
            let dst = &mut out[(n * g.out_c + oc) * plane..(n * g.out_c + oc + 1) * plane];
            for (d, &a) in dst.iter_mut().zip(&acc) {
                *d = a as f32;
            }
        }
    }
    Tensor::new(&[g.batch, g.out_c, g.out_h, g.out_w], out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let g = params.geometry(input.shape())?;
    let expected = [g.batch, g.out_c, g.out_h, g.out_w];
    if grad_out.shape() != expected {
        return Err(shape_err!(
            "grad_out shape {:?} does not match forward output {expected:?}",
            grad_out.shape()
        ));
    }
    let plane = g.out_plane();
    let patch = g.patch_len();
    let in_stride = g.in_c * g.in_h * g.in_w;
    let weights = params.weights.data();

    let mut gw = vec![0f64; g.out_c * patch];
    let mut gb = vec![0f64; g.out_c];
    let mut gi = vec![0f32; input.len()];

    let mut col = vec![0f64; patch * plane];
    let mut gcol = vec![0f64; patch * plane];
    let mut gin = vec![0f64; in_stride];
    let mut gout = vec![0f64; g.out_c * plane];
    for n in 0..g.batch {
        im2col(
            &g,
            &input.data()[n * in_stride..(n + 1) * in_stride],
            &mut col,
        );
        for (d, &s) in gout
            .iter_mut()
            .zip(&grad_out.data()[n * g.out_c * plane..(n + 1) * g.out_c * plane])
        {
            *d = s as f64;
        }

        for oc in 0..g.out_c {
            let go = &gout[oc * plane..(oc + 1) * plane];
            gb[oc] += go.iter().sum::<f64>();
            for k in 0..patch {
                let col_row = &col[k * plane..(k + 1) * plane];
                gw[oc * patch + k] += go.iter().zip(col_row).map(|(a, b)| a * b).sum::<f64>();
            }
        }

        for k in 0..patch {
            let dst = &mut gcol[k * plane..(k + 1) * plane];
            dst.fill(0.0);
            for oc in 0..g.out_c {
                let w = weights[oc * patch + k] as f64;
                if w == 0.0 {
                    continue;
                }
                for (d, &go) in dst.iter_mut().zip(&gout[oc * plane..(oc + 1) * plane]) {
                    *d += w * go;
                }
            }
        }
        gin.fill(0.0);
        col2im(&g, &gcol, &mut gin);
        for (d, &s) in gi[n * in_stride..(n + 1) * in_stride].iter_mut().zip(&gin) {
            *d = s as f32;
        }
    }

    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gi)?,
        weights: Tensor::new(
            params.weights.shape(),
            gw.into_iter().map(|v| v as f32).collect(),
        )?,
        bias: Tensor::new(
            params.bias.shape(),
            gb.into_iter().map(|v| v as f32).collect(),
        )?,
    })
}
