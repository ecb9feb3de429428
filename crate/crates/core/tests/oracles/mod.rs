//! Reference implementations and finite-difference checkers shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use mre_core::network::{build_subnetwork, ArchSpec, ChannelScale, Region, SubNetwork};
use mre_core::ops::{
    concat_channels, conv2d_backward, conv2d_forward, linear_backward, linear_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu, relu_backward, split_channels, ConvParams,
    LinearParams,
};
use mre_core::rng::{seeded, Rng};
use mre_core::training::softmax_cross_entropy;
use mre_core::Tensor;
use rand::Rng as _;

pub const FD_EPS: f32 = 1e-2;
pub const REL_TOL: f64 = 1e-2;
pub const ABS_TOL: f64 = 1e-4;

pub fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Plain nested-loop cross-correlation with zero padding, accumulated in f64.
pub fn direct_conv(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let s = input.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let k = weights.shape();
    let (o, kh, kw) = (k[0], k[2], k[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let x = input.data();
    let wt = weights.data();
    let mut out = Vec::with_capacity(n * o * oh * ow);
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[oc] as f64;
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((b * c + ic) * h + iy as usize) * w + ix as usize;
                                let wi = ((oc * c + ic) * kh + ky) * kw + kx;
                                acc += x[xi] as f64 * wt[wi] as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Largest elementwise deviation of `conv2d_forward` from the direct oracle
/// over `draws` random shapes, strides, paddings and values.
pub fn conv_oracle_max_error(seed: u64, draws: usize) -> f64 {
    let mut rng = seeded(seed);
    let mut worst = 0f64;
    for _ in 0..draws {
        let n = rng.random_range(1..=3);
        let c = rng.random_range(1..=4);
        let o = rng.random_range(1..=5);
        let kh = rng.random_range(1..=4);
        let kw = rng.random_range(1..=4);
        let stride = rng.random_range(1..=3);
        let pad = rng.random_range(0..kh.min(kw));
        // Pick the output extent and derive an input extent the stride divides exactly.
        let extent = |rng: &mut Rng, k: usize| loop {
            let out: usize = rng.random_range(1..=6);
            let inner = (out - 1) * stride + k;
            if inner > 2 * pad {
                return inner - 2 * pad;
            }
        };
        let h = extent(&mut rng, kh);
        let w = extent(&mut rng, kw);
        let input = random_tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let weights = random_tensor(&mut rng, &[o, c, kh, kw], -1.0, 1.0);
        let bias = random_tensor(&mut rng, &[o], -1.0, 1.0);
        let params = ConvParams::new(weights.clone(), bias.clone(), stride, pad).unwrap();
        let fast = conv2d_forward(&input, &params).unwrap();
        let slow = direct_conv(&input, &weights, &bias, stride, pad);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.data().iter().zip(&slow) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub probes: usize,
    pub failures: Vec<String>,
    /// Largest relative error among probes that were not near zero.
    pub worst_relative: f64,
    /// Probes whose gradient magnitude exceeded the absolute floor.
    pub significant: usize,
}

impl GradReport {
    pub fn check(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.probes += 1;
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        if scale > ABS_TOL {
            self.significant += 1;
            self.worst_relative = self.worst_relative.max(diff / scale);
        }
        if diff > REL_TOL * scale && diff > ABS_TOL {
            self.failures.push(format!(
                "{what}: analytic {analytic:.6e}, numeric {numeric:.6e}"
            ));
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.probes += other.probes;
        self.failures.extend(other.failures);
        self.worst_relative = self.worst_relative.max(other.worst_relative);
        self.significant += other.significant;
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `Σ g ⊙ y` in f64: a scalar whose gradient with respect to `y` is `g`.
fn dot(g: &Tensor, y: &Tensor) -> f64 {
    g.data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Central difference of `f` with respect to element `i` of `x`, using the
/// step actually representable in f32.
fn central(x: &Tensor, i: usize, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    let mut plus = x.clone();
    let mut minus = x.clone();
    plus.data_mut()[i] += FD_EPS;
    minus.data_mut()[i] -= FD_EPS;
    let step = plus.data()[i] as f64 - minus.data()[i] as f64;
    (f(&plus) - f(&minus)) / step
}

fn probe_indices(rng: &mut Rng, len: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

fn conv_suite(rng: &mut Rng, report: &mut GradReport) {
    for (stride, pad) in [(1, 1), (2, 0), (1, 0)] {
        let (h, w) = if stride == 2 { (7, 5) } else { (5, 6) };
        let input = random_tensor(rng, &[2, 3, h, w], -1.0, 1.0);
        let weights = random_tensor(rng, &[4, 3, 3, 3], -0.5, 0.5);
        let bias = random_tensor(rng, &[4], -0.5, 0.5);
        let params = ConvParams::new(weights.clone(), bias.clone(), stride, pad).unwrap();
        let out = conv2d_forward(&input, &params).unwrap();
        let g = random_tensor(rng, out.shape(), -1.0, 1.0);
        let grads = conv2d_backward(&input, &params, &g).unwrap();

        for i in probe_indices(rng, input.len(), 6) {
            let num = central(&input, i, |x| dot(&g, &conv2d_forward(x, &params).unwrap()));
            report.check(
                &format!("conv s{stride}p{pad} input[{i}]"),
                grads.input.data()[i] as f64,
                num,
            );
        }
        for i in probe_indices(rng, weights.len(), 6) {
            let num = central(&weights, i, |wt| {
                let p = ConvParams::new(wt.clone(), bias.clone(), stride, pad).unwrap();
                dot(&g, &conv2d_forward(&input, &p).unwrap())
            });
            report.check(
                &format!("conv s{stride}p{pad} weight[{i}]"),
                grads.weights.data()[i] as f64,
                num,
            );
        }
        for i in 0..bias.len() {
            let num = central(&bias, i, |b| {
                let p = ConvParams::new(weights.clone(), b.clone(), stride, pad).unwrap();
                dot(&g, &conv2d_forward(&input, &p).unwrap())
            });
            report.check(
                &format!("conv s{stride}p{pad} bias[{i}]"),
                grads.bias.data()[i] as f64,
                num,
            );
        }
    }
}

fn linear_suite(rng: &mut Rng, report: &mut GradReport) {
    let input = random_tensor(rng, &[3, 5], -1.0, 1.0);
    let weights = random_tensor(rng, &[5, 4], -1.0, 1.0);
    let bias = random_tensor(rng, &[4], -1.0, 1.0);
    let params = LinearParams::new(weights.clone(), bias.clone()).unwrap();
    let g = random_tensor(rng, &[3, 4], -1.0, 1.0);
    let grads = linear_backward(&input, &params, &g).unwrap();
    for i in probe_indices(rng, input.len(), 8) {
        let num = central(&input, i, |x| dot(&g, &linear_forward(x, &params).unwrap()));
        report.check(
            &format!("linear input[{i}]"),
            grads.input.data()[i] as f64,
            num,
        );
    }
    for i in probe_indices(rng, weights.len(), 8) {
        let num = central(&weights, i, |wt| {
            let p = LinearParams::new(wt.clone(), bias.clone()).unwrap();
            dot(&g, &linear_forward(&input, &p).unwrap())
        });
        report.check(
            &format!("linear weight[{i}]"),
            grads.weights.data()[i] as f64,
            num,
        );
    }
    for i in 0..bias.len() {
        let num = central(&bias, i, |b| {
            let p = LinearParams::new(weights.clone(), b.clone()).unwrap();
            dot(&g, &linear_forward(&input, &p).unwrap())
        });
        report.check(
            &format!("linear bias[{i}]"),
            grads.bias.data()[i] as f64,
            num,
        );
    }
}

fn pool_suite(rng: &mut Rng, report: &mut GradReport) {
    // A shuffled grid of well-separated values: no ties, and a step of
    // FD_EPS can never change a window's winner.
    let len = 2 * 2 * 4 * 6;
    let mut values: Vec<f32> = (0..len).map(|i| i as f32 * 0.1).collect();
    for i in (1..len).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    let input = Tensor::new(&[2, 2, 4, 6], values).unwrap();
    let (out, map) = maxpool2x2_forward(&input).unwrap();
    let g = random_tensor(rng, out.shape(), -1.0, 1.0);
    let grad = maxpool2x2_backward(&map, &g, input.shape()).unwrap();
    for i in probe_indices(rng, input.len(), 12) {
        let num = central(&input, i, |x| dot(&g, &maxpool2x2_forward(x).unwrap().0));
        report.check(&format!("maxpool input[{i}]"), grad.data()[i] as f64, num);
    }
}

fn relu_suite(rng: &mut Rng, report: &mut GradReport) {
    // Keep every input at least 0.1 away from the kink.
    let input = Tensor::from_fn(&[2, 3, 3, 3], |_| {
        let v = rng.random_range(0.1f32..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let g = random_tensor(rng, input.shape(), -1.0, 1.0);
    let grad = relu_backward(&input, &g).unwrap();
    for i in probe_indices(rng, input.len(), 10) {
        let num = central(&input, i, |x| dot(&g, &relu(x)));
        report.check(&format!("relu input[{i}]"), grad.data()[i] as f64, num);
    }
}

fn concat_suite(rng: &mut Rng, report: &mut GradReport) {
    let a = random_tensor(rng, &[2, 3, 2, 2], -1.0, 1.0);
    let b = random_tensor(rng, &[2, 2, 2, 2], -1.0, 1.0);
    let out = concat_channels(&a, &b).unwrap();
    let g = random_tensor(rng, out.shape(), -1.0, 1.0);
    let (ga, gb) = split_channels(&g, 3).unwrap();
    for i in probe_indices(rng, a.len(), 5) {
        let num = central(&a, i, |x| dot(&g, &concat_channels(x, &b).unwrap()));
        report.check(&format!("concat a[{i}]"), ga.data()[i] as f64, num);
    }
    for i in probe_indices(rng, b.len(), 5) {
        let num = central(&b, i, |x| dot(&g, &concat_channels(&a, x).unwrap()));
        report.check(&format!("concat b[{i}]"), gb.data()[i] as f64, num);
    }
}

fn softmax_ce_suite(rng: &mut Rng, report: &mut GradReport) {
    let logits = random_tensor(rng, &[4, 7], -3.0, 3.0);
    let labels = [0, 3, 6, 2];
    let analytic = softmax_cross_entropy(&logits, &labels)
        .unwrap()
        .logit_gradient;
    for i in 0..logits.len() {
        let num = central(&logits, i, |z| {
            softmax_cross_entropy(z, &labels).unwrap().loss
        });
        report.check(
            &format!("softmax-ce logit[{i}]"),
            analytic.data()[i] as f64,
            num,
        );
    }
}

/// Finite-difference checks of every layer's backward pass.
pub fn layer_gradient_suite(seed: u64) -> GradReport {
    let mut rng = seeded(seed);
    let mut report = GradReport::default();
    conv_suite(&mut rng, &mut report);
    linear_suite(&mut rng, &mut report);
    pool_suite(&mut rng, &mut report);
    relu_suite(&mut rng, &mut report);
    concat_suite(&mut rng, &mut report);
    softmax_ce_suite(&mut rng, &mut report);
    report
}

pub fn toy_spec() -> ArchSpec {
    ArchSpec::alexnet(8, ChannelScale::new(1, 16).unwrap())
        .with_fc_widths(vec![4])
        .with_classes(3)
}

/// Which side of every ReLU kink and which element of every pooling window
/// is active; two parameter settings with the same pattern lie in the same
/// smooth piece of the network.
fn activation_pattern(
    net: &SubNetwork,
    face: &Tensor,
    region: &Tensor,
) -> (Vec<bool>, Vec<usize>, Tensor) {
    let taps = net.activations(face, region).unwrap();
    let mut mask = Vec::new();
    let mut argmax = Vec::new();
    // The last tap is the raw logits, which pass through no kink.
    for (k, (name, t)) in taps[..taps.len() - 1].iter().enumerate() {
        if name.contains("pool") {
            argmax.extend_from_slice(maxpool2x2_forward(&taps[k - 1].1).unwrap().1.indices());
        } else if name != "fused" {
            mask.extend(t.data().iter().map(|&v| v > 0.0));
        }
    }
    let logits = taps.last().unwrap().1.clone();
    (mask, argmax, logits)
}

/// End-to-end check of the toy network's parameter gradients against
/// central differences of the mean cross-entropy. Probes that straddle a
/// ReLU kink or flip a pooling winner are redrawn.
pub fn toy_network_gradient_check(seed: u64, probes: usize) -> GradReport {
    let mut rng = seeded(seed);
    let spec = toy_spec();
    let mut net = build_subnetwork(&spec, Region::Mouth, seed).unwrap();
    // Random biases so that units are not all sitting on the same side.
    for name in net.param_names() {
        if name.ends_with(".bias") {
            let b = net.param(&name).unwrap();
            let fresh = random_tensor(&mut rng, b.shape(), -0.1, 0.3);
            net.set_param(&name, fresh).unwrap();
        }
    }
    let face = random_tensor(&mut rng, &[3, 3, 8, 8], -1.0, 1.0);
    let region = random_tensor(&mut rng, &[3, 3, 8, 8], -1.0, 1.0);
    let labels = [0usize, 1, 2];

    let logits = net.forward(&face, &region, true).unwrap();
    let loss = softmax_cross_entropy(&logits, &labels).unwrap();
    net.backward(&loss.logit_gradient).unwrap();
    let base = activation_pattern(&net, &face, &region);

    let names = net.param_names();
    let mut report = GradReport::default();
    let mut attempts = 0;
    while report.probes < probes {
        attempts += 1;
        assert!(attempts < probes * 20, "too many probes straddle a kink");
        // Cycle through tensors so that every layer gets probed.
        let name = &names[attempts % names.len()];
        let len = net.param(name).unwrap().len();
        let i = rng.random_range(0..len);
        let analytic = net.grad(name).unwrap().data()[i] as f64;
        let original = net.param(name).unwrap().data()[i];

        let eval = |value: f32, net: &mut SubNetwork| {
            net.param_mut(name).unwrap().data_mut()[i] = value;
            let applied = net.param(name).unwrap().data()[i];
            let (mask, argmax, logits) = activation_pattern(net, &face, &region);
            let same = mask == base.0 && argmax == base.1;
            (
                softmax_cross_entropy(&logits, &labels).unwrap().loss,
                applied,
                same,
            )
        };
        let (lp, xp, same_p) = eval(original + FD_EPS, &mut net);
        let (lm, xm, same_m) = eval(original - FD_EPS, &mut net);
        net.param_mut(name).unwrap().data_mut()[i] = original;
        if !(same_p && same_m) {
            continue;
        }
        let numeric = (lp - lm) / (xp as f64 - xm as f64);
        report.check(&format!("{name}[{i}]"), analytic, numeric);
    }
    report
}
