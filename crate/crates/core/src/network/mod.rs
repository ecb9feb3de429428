//! Dual-branch sub-networks: a whole-face branch and a region branch with
//! independent parameters, fused by channel concatenation after their last
//! pooling layers and classified by a fully connected head.

mod arch;

pub use arch::{
    conv_parameters, parameter_count, ArchSpec, ChannelScale, Family, LayerPlan, Region, KERNEL,
};

use rand::Rng as _;

use crate::error::{shape_err, Error, Result};
use crate::ops::{
    concat_channels, conv2d_backward, conv2d_forward, linear_backward, linear_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu, relu_backward, split_channels, ArgmaxMap,
    ConvParams, LinearParams,
};
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::Tensor;

/// The two parallel input branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Face,
    Region,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Face => "face",
            Side::Region => "region",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
}

#[derive(Clone, Debug)]
struct ConvLayer {
    name: String,
    params: ConvParams,
    grad_weights: Tensor,
    grad_bias: Tensor,
}

#[derive(Clone, Debug)]
enum Layer {
    Conv(ConvLayer),
    MaxPool { name: String },
}

impl Layer {
    fn name(&self) -> &str {
        match self {
            Layer::Conv(c) => &c.name,
            Layer::MaxPool { name } => name,
        }
    }
}

#[derive(Clone, Debug)]
struct Branch {
    side: Side,
    layers: Vec<Layer>,
}

#[derive(Clone, Debug)]
struct DenseLayer {
    name: String,
    params: LinearParams,
    grad_weights: Tensor,
    grad_bias: Tensor,
}

enum LayerCache {
    Conv { input: Tensor, pre: Tensor },
    MaxPool { map: ArgmaxMap },
}

struct DenseCache {
    input: Tensor,
    pre: Tensor,
}

struct ForwardCache {
    face: Vec<LayerCache>,
    region: Vec<LayerCache>,
    face_channels: usize,
    fused_shape: Vec<usize>,
    head: Vec<DenseCache>,
    batch: usize,
}

/// Glorot-uniform draw: zero mean, half-width `sqrt(6 / (fan_in + fan_out))`.
fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit) as f32)
}

impl Branch {
    fn build(side: Side, plan: &[LayerPlan], rng: &mut Rng) -> Self {
        let layers = plan
            .iter()
            .map(|l| match l {
                LayerPlan::Conv {
                    name,
                    in_channels,
                    out_channels,
                } => {
                    let shape = [*out_channels, *in_channels, KERNEL, KERNEL];
                    let area = KERNEL * KERNEL;
                    let weights = glorot(rng, &shape, in_channels * area, out_channels * area);
                    let bias = Tensor::zeros(&[*out_channels]);
                    Layer::Conv(ConvLayer {
                        name: name.clone(),
                        grad_weights: Tensor::zeros(&shape),
                        grad_bias: Tensor::zeros(&[*out_channels]),
                        params: ConvParams::new(weights, bias, 1, KERNEL / 2)
                            .expect("plan yields consistent conv shapes"),
                    })
                }
                LayerPlan::MaxPool { name } => Layer::MaxPool { name: name.clone() },
            })
            .collect();
        Self { side, layers }
    }

    fn forward(
        &self,
        input: &Tensor,
        mut cache: Option<&mut Vec<LayerCache>>,
        mut taps: Option<&mut Vec<(String, Tensor)>>,
    ) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            let out = match layer {
                Layer::Conv(conv) => {
                    let pre = conv2d_forward(&x, &conv.params)?;
                    let out = relu(&pre);
                    if let Some(c) = cache.as_mut() {
                        c.push(LayerCache::Conv { input: x, pre });
                    }
                    out
                }
                Layer::MaxPool { .. } => {
                    let (out, map) = maxpool2x2_forward(&x)?;
                    if let Some(c) = cache.as_mut() {
                        c.push(LayerCache::MaxPool { map });
                    }
                    out
                }
            };
            if let Some(t) = taps.as_mut() {
                t.push((
                    format!("{}.{}", self.side.prefix(), layer.name()),
                    out.clone(),
                ));
            }
            x = out;
        }
        Ok(x)
    }

    fn backward(&mut self, cache: Vec<LayerCache>, grad: Tensor) -> Result<()> {
        let mut grad = grad;
        for (layer, entry) in self.layers.iter_mut().zip(cache).rev() {
            grad = match (layer, entry) {
                (Layer::Conv(conv), LayerCache::Conv { input, pre }) => {
                    let g_pre = relu_backward(&pre, &grad)?;
                    let grads = conv2d_backward(&input, &conv.params, &g_pre)?;
                    conv.grad_weights = grads.weights;
                    conv.grad_bias = grads.bias;
                    grads.input
                }
                (Layer::MaxPool { .. }, LayerCache::MaxPool { map }) => {
                    maxpool2x2_backward(&map, &grad, &map.input_shape())?
                }
                _ => unreachable!("cache is recorded in layer order"),
            };
        }
        Ok(())
    }
}

/// One dual-input sub-network with its parameters and gradient buffers.
pub struct SubNetwork {
    spec: ArchSpec,
    region: Region,
    face: Branch,
    region_branch: Branch,
    head: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
    grads_fresh: bool,
}

impl Clone for SubNetwork {
    /// Clones parameters and gradients; any pending forward cache is dropped.
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            region: self.region,
            face: self.face.clone(),
            region_branch: self.region_branch.clone(),
            head: self.head.clone(),
            cache: None,
            grads_fresh: self.grads_fresh,
        }
    }
}

impl std::fmt::Debug for SubNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubNetwork")
            .field("spec", &self.spec)
            .field("region", &self.region)
            .field("parameters", &self.num_parameters())
            .finish()
    }
}

/// Builds a sub-network from `spec`; a pure function of `(spec, region, seed)`.
pub fn build_subnetwork(spec: &ArchSpec, region: Region, seed: u64) -> Result<SubNetwork> {
    spec.validate()?;
    let mut rng = seeded(derive_seed(seed, region.code() as u64));
    let plan = spec.branch_plan();
    let face = Branch::build(Side::Face, &plan, &mut rng);
    let region_branch = Branch::build(Side::Region, &plan, &mut rng);
    let head_plan = spec.head_plan();
    let head = head_plan
        .iter()
        .enumerate()
        .map(|(i, &(d, k))| {
            let weights = glorot(&mut rng, &[d, k], d, k);
            DenseLayer {
                name: format!("fc{}", i + 1),
                params: LinearParams::new(weights, Tensor::zeros(&[k]))
                    .expect("plan yields consistent fc shapes"),
                grad_weights: Tensor::zeros(&[d, k]),
                grad_bias: Tensor::zeros(&[k]),
            }
        })
        .collect();
    Ok(SubNetwork {
        spec: spec.clone(),
        region,
        face,
        region_branch,
        head,
        cache: None,
        grads_fresh: false,
    })
}

impl SubNetwork {
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn region(&self) -> Region {
        self.region
    }

    fn branch(&self, side: Side) -> &Branch {
        match side {
            Side::Face => &self.face,
            Side::Region => &self.region_branch,
        }
    }

    /// Layer names and kinds of one branch, in execution order.
    pub fn branch_layers(&self, side: Side) -> Vec<(String, LayerKind)> {
        self.branch(side)
            .layers
            .iter()
            .map(|l| {
                let kind = match l {
                    Layer::Conv(_) => LayerKind::Conv,
                    Layer::MaxPool { .. } => LayerKind::MaxPool,
                };
                (l.name().to_string(), kind)
            })
            .collect()
    }

    /// Every name accepted by [`SubNetwork::activations`] lookups, in order.
    pub fn activation_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for side in [Side::Face, Side::Region] {
            for l in &self.branch(side).layers {
                names.push(format!("{}.{}", side.prefix(), l.name()));
            }
        }
        names.push("fused".to_string());
        names.extend(self.head.iter().map(|d| d.name.clone()));
        names
    }

    fn check_inputs(&self, face: &Tensor, region: &Tensor) -> Result<usize> {
        let (nf, cf, hf, wf) = face.dims4()?;
        let (nr, cr, hr, wr) = region.dims4()?;
        if nf != nr {
            return Err(shape_err!(
                "batch size: face input has {nf} samples, region input has {nr}"
            ));
        }
        let s = self.spec.input_size;
        let c = self.spec.in_channels;
        for (what, dims) in [("face", (cf, hf, wf)), ("region", (cr, hr, wr))] {
            if dims != (c, s, s) {
                return Err(shape_err!(
                    "{what} input is {}×{}×{}, expected {c}×{s}×{s}",
                    dims.0,
                    dims.1,
                    dims.2
                ));
            }
        }
        Ok(nf)
    }

    fn run(
        &self,
        face: &Tensor,
        region: &Tensor,
        mut cache: Option<&mut ForwardCache>,
        mut taps: Option<&mut Vec<(String, Tensor)>>,
    ) -> Result<Tensor> {
        let batch = self.check_inputs(face, region)?;
        let f = self.face.forward(
            face,
            cache.as_mut().map(|c| &mut c.face),
            taps.as_deref_mut(),
        )?;
        let r = self.region_branch.forward(
            region,
            cache.as_mut().map(|c| &mut c.region),
            taps.as_deref_mut(),
        )?;
        let fused = concat_channels(&f, &r)?;
        if let Some(c) = cache.as_mut() {
            c.face_channels = f.shape()[1];
            c.fused_shape = fused.shape().to_vec();
            c.batch = batch;
        }
        if let Some(t) = taps.as_mut() {
            t.push(("fused".to_string(), fused.clone()));
        }
        let mut x = fused.flatten_batch()?;
        let last = self.head.len() - 1;
        for (i, dense) in self.head.iter().enumerate() {
            let pre = linear_forward(&x, &dense.params)?;
            let out = if i < last { relu(&pre) } else { pre.clone() };
            if let Some(t) = taps.as_mut() {
                t.push((dense.name.clone(), out.clone()));
            }
            if let Some(c) = cache.as_mut() {
                c.head.push(DenseCache { input: x, pre });
            }
            x = out;
        }
        Ok(x)
    }

    /// Logits `N × num_classes`. With `train_mode` set, intermediate
    /// activations are kept for a following [`SubNetwork::backward`].
    pub fn forward(&mut self, face: &Tensor, region: &Tensor, train_mode: bool) -> Result<Tensor> {
        if !train_mode {
            self.cache = None;
            return self.infer(face, region);
        }
        let mut cache = ForwardCache {
            face: Vec::new(),
            region: Vec::new(),
            face_channels: 0,
            fused_shape: Vec::new(),
            head: Vec::new(),
            batch: 0,
        };
        let logits = self.run(face, region, Some(&mut cache), None)?;
        self.cache = Some(cache);
        Ok(logits)
    }

    /// Inference-mode forward; does not touch the network.
    pub fn infer(&self, face: &Tensor, region: &Tensor) -> Result<Tensor> {
        self.run(face, region, None, None)
    }

    /// Every named activation (post-ReLU for convolutions and hidden fc
    /// layers, raw logits for the classifier) for the given inputs.
    pub fn activations(&self, face: &Tensor, region: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let mut taps = Vec::new();
        self.run(face, region, None, Some(&mut taps))?;
        Ok(taps)
    }

    /// Back-propagates `logit_grads` (`∂loss/∂logits`) and overwrites every
    /// gradient buffer. Consumes the cache of the preceding train-mode forward.
    pub fn backward(&mut self, logit_grads: &Tensor) -> Result<()> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let expected = [cache.batch, self.spec.num_classes];
        if logit_grads.shape() != expected {
            return Err(shape_err!(
                "logit gradient shape {:?} does not match logits {expected:?}",
                logit_grads.shape()
            ));
        }
        let mut grad = logit_grads.clone();
        let last = self.head.len() - 1;
        for (i, (dense, entry)) in self.head.iter_mut().zip(cache.head).enumerate().rev() {
            let g_pre = if i < last {
                relu_backward(&entry.pre, &grad)?
            } else {
                grad
            };
            let grads = linear_backward(&entry.input, &dense.params, &g_pre)?;
            dense.grad_weights = grads.weights;
            dense.grad_bias = grads.bias;
            grad = grads.input;
        }
        let fused = grad.reshape(&cache.fused_shape)?;
        let (g_face, g_region) = split_channels(&fused, cache.face_channels)?;
        self.face.backward(cache.face, g_face)?;
        self.region_branch.backward(cache.region, g_region)?;
        self.grads_fresh = true;
        Ok(())
    }

    /// Whether gradient buffers were filled by a backward pass not yet consumed by an optimizer step.
    pub fn gradients_fresh(&self) -> bool {
        self.grads_fresh
    }

    pub(crate) fn mark_gradients_consumed(&mut self) {
        self.grads_fresh = false;
    }

    /// `(name, parameter, gradient)` for every parameter tensor in a fixed order:
    /// face branch, region branch, then head; weight before bias.
    pub fn parameters(&self) -> Vec<(String, &Tensor, &Tensor)> {
        let mut out = Vec::new();
        for branch in [&self.face, &self.region_branch] {
            for layer in &branch.layers {
                if let Layer::Conv(c) = layer {
                    let base = format!("{}.{}", branch.side.prefix(), c.name);
                    out.push((format!("{base}.weight"), &c.params.weights, &c.grad_weights));
                    out.push((format!("{base}.bias"), &c.params.bias, &c.grad_bias));
                }
            }
        }
        for d in &self.head {
            out.push((
                format!("{}.weight", d.name),
                &d.params.weights,
                &d.grad_weights,
            ));
            out.push((format!("{}.bias", d.name), &d.params.bias, &d.grad_bias));
        }
        out
    }

    /// Mutable parameters paired with their gradients, same order as [`SubNetwork::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut out = Vec::new();
        for branch in [&mut self.face, &mut self.region_branch] {
            for layer in &mut branch.layers {
                if let Layer::Conv(c) = layer {
                    out.push((&mut c.params.weights, &c.grad_weights));
                    out.push((&mut c.params.bias, &c.grad_bias));
                }
            }
        }
        for d in &mut self.head {
            out.push((&mut d.params.weights, &d.grad_weights));
            out.push((&mut d.params.bias, &d.grad_bias));
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.parameters().into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.parameters()
            .into_iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, p, _)| p)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.parameters()
            .into_iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, g)| g)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let index = self.param_names().iter().position(|n| n == name)?;
        self.parameters_mut().into_iter().nth(index).map(|(p, _)| p)
    }

    /// Replace a parameter's values; the shape must match.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .param_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named '{name}'")))?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeDisagreement {
                name: name.to_string(),
                found: value.shape().to_vec(),
                expected: slot.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, p, _)| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec() -> ArchSpec {
        ArchSpec::alexnet(8, ChannelScale::new(1, 16).unwrap())
            .with_fc_widths(vec![4])
            .with_classes(3)
    }

    #[test]
    fn backward_needs_train_forward() {
        let mut net = build_subnetwork(&toy_spec(), Region::Mouth, 1).unwrap();
        assert!(matches!(
            net.backward(&Tensor::zeros(&[1, 3])),
            Err(Error::NoForwardCache)
        ));
        let x = Tensor::zeros(&[1, 3, 8, 8]);
        net.forward(&x, &x, false).unwrap();
        assert!(net.backward(&Tensor::zeros(&[1, 3])).is_err());
        net.forward(&x, &x, true).unwrap();
        net.backward(&Tensor::zeros(&[1, 3])).unwrap();
        // cache consumed
        assert!(net.backward(&Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn rejects_mismatched_batches() {
        let net = build_subnetwork(&toy_spec(), Region::Nose, 1).unwrap();
        let err = net
            .infer(&Tensor::zeros(&[2, 3, 8, 8]), &Tensor::zeros(&[1, 3, 8, 8]))
            .unwrap_err();
        assert!(err.to_string().contains("batch"), "{err}");
        assert!(net
            .infer(
                &Tensor::zeros(&[1, 3, 8, 8]),
                &Tensor::zeros(&[1, 3, 16, 16])
            )
            .is_err());
    }

    #[test]
    fn rejects_bad_logit_grad_shape() {
        let mut net = build_subnetwork(&toy_spec(), Region::Nose, 1).unwrap();
        let x = Tensor::zeros(&[2, 3, 8, 8]);
        net.forward(&x, &x, true).unwrap();
        assert!(net.backward(&Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let net = build_subnetwork(&toy_spec(), Region::LeftEye, 0).unwrap();
        let names = net.param_names();
        assert_eq!(names.first().unwrap(), "face.conv1.weight");
        assert_eq!(names.last().unwrap(), "fc2.bias");
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
    }

    #[test]
    fn set_param_checks_shape() {
        let mut net = build_subnetwork(&toy_spec(), Region::LeftEye, 0).unwrap();
        assert!(net.set_param("fc2.bias", Tensor::zeros(&[4])).is_err());
        net.set_param("fc2.bias", Tensor::full(&[3], 0.5)).unwrap();
        assert_eq!(net.param("fc2.bias").unwrap().data(), &[0.5; 3]);
        assert!(net.set_param("nope", Tensor::zeros(&[1])).is_err());
    }
}
