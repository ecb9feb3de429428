//! Fully connected layer `y = x·W + b`.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    /// `in_features × out_features`
    pub weights: Tensor,
    /// `out_features`
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let (_, k) = weights.dims2()?;
        if bias.shape() != [k] {
            return Err(shape_err!(
                "bias shape {:?} does not match out_features {k}",
                bias.shape()
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let (n, d) = input.dims2()?;
        let (wd, k) = self.weights.dims2()?;
        if d != wd {
            return Err(shape_err!(
                "inner dimension: input has {d} features, weights expect {wd}"
            ));
        }
        Ok((n, d, k))
    }
}

pub fn linear_forward(input: &Tensor, params: &LinearParams) -> Result<Tensor> {
    let (n, d, k) = params.check_input(input)?;
    let x = input.data();
    let w = params.weights.data();
    let mut out = Vec::with_capacity(n * k);
    let mut acc = vec![0f64; k];
    for row in 0..n {
        for (a, &b) in acc.iter_mut().zip(params.bias.data()) {
            *a = b as f64;
        }
        for (i, &xv) in x[row * d..(row + 1) * d].iter().enumerate() {
            let xv = xv as f64;
            for (a, &wv) in acc.iter_mut().zip(&w[i * k..(i + 1) * k]) {
                *a += xv * wv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(&[n, k], out)
}

pub fn linear_backward(
    input: &Tensor,
    params: &LinearParams,
    grad_out: &Tensor,
) -> Result<LinearGrads> {
    let (n, d, k) = params.check_input(input)?;
    if grad_out.shape() != [n, k] {
        return Err(shape_err!(
            "grad_out shape {:?} does not match forward output [{n}, {k}]",
            grad_out.shape()
        ));
    }
    let x = input.data();
    let w = params.weights.data();
    let g = grad_out.data();

    let mut gw = vec![0f64; d * k];
    let mut gb = vec![0f64; k];
    let mut gx = Vec::with_capacity(n * d);
    for row in 0..n {
        let g_row = &g[row * k..(row + 1) * k];
        for (b, &gv) in gb.iter_mut().zip(g_row) {
            *b += gv as f64;
        }
        for (i, &xv) in x[row * d..(row + 1) * d].iter().enumerate() {
            let xv = xv as f64;
            let w_row = &w[i * k..(i + 1) * k];
            let mut dx = 0f64;
            for ((gwv, &wv), &gv) in gw[i * k..(i + 1) * k].iter_mut().zip(w_row).zip(g_row) {
                *gwv += xv * gv as f64;
                dx += wv as f64 * gv as f64;
            }
            gx.push(dx as f32);
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(&[n, d], gx)?,
        weights: Tensor::new(&[d, k], gw.into_iter().map(|v| v as f32).collect())?,
        bias: Tensor::new(&[k], gb.into_iter().map(|v| v as f32).collect())?,
    })
}
