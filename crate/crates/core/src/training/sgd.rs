//! Momentum SGD with weight decay and a linear learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SubNetwork;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    /// `base_lr · (1 − t / total_iterations)`, floored at 0.
    Linear {
        total_iterations: u64,
    },
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl SgdConfig {
    /// Linear decay to zero over `total_iterations`.
    pub fn linear(base_lr: f64, momentum: f64, weight_decay: f64, total_iterations: u64) -> Self {
        Self {
            base_lr,
            momentum,
            weight_decay,
            schedule: LrSchedule::Linear { total_iterations },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be finite and nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.base_lr,
            LrSchedule::Linear { total_iterations } => {
                if total_iterations == 0 {
                    return 0.0;
                }
                let frac = iteration as f64 / total_iterations as f64;
                (self.base_lr * (1.0 - frac)).max(0.0)
            }
        }
    }
}

/// The element-wise update rule shared by every parameter tensor.
pub fn apply_update(
    param: &mut [f32],
    grad: &[f32],
    velocity: &mut [f32],
    lr: f32,
    momentum: f32,
    weight_decay: f32,
) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity) {
        let g = g + weight_decay * *p;
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

/// Hyperparameters, velocity buffers and the iteration counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: SgdConfig,
    velocities: Vec<Tensor>,
    iteration: u64,
}

impl OptimizerState {
    /// Zero velocities shaped like `net`'s parameters.
    pub fn new(config: SgdConfig, net: &SubNetwork) -> Result<Self> {
        config.validate()?;
        let velocities = net
            .parameters()
            .into_iter()
            .map(|(_, p, _)| Tensor::zeros(p.shape()))
            .collect();
        Ok(Self {
            config,
            velocities,
            iteration: 0,
        })
    }

    pub(crate) fn from_parts(config: SgdConfig, velocities: Vec<Tensor>, iteration: u64) -> Self {
        Self {
            config,
            velocities,
            iteration,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn velocities(&self) -> &[Tensor] {
        &self.velocities
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.iteration)
    }

    /// One update of every parameter from its freshly computed gradient:
    /// `g' = g + wd·p`, `v = m·v − lr_t·g'`, `p = p + v`.
    pub fn step(&mut self, net: &mut SubNetwork) -> Result<()> {
        if !net.gradients_fresh() {
            return Err(Error::StaleGradients);
        }
        let lr = self.current_lr() as f32;
        let momentum = self.config.momentum as f32;
        let wd = self.config.weight_decay as f32;
        let params = net.parameters_mut();
        if params.len() != self.velocities.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer holds {} velocity buffers for {} parameters",
                self.velocities.len(),
                params.len()
            )));
        }
        for ((param, grad), vel) in params.into_iter().zip(&mut self.velocities) {
            if !param.same_shape(vel) {
                return Err(Error::ShapeDisagreement {
                    name: "velocity".into(),
                    found: vel.shape().to_vec(),
                    expected: param.shape().to_vec(),
                });
            }
            apply_update(
                param.data_mut(),
                grad.data(),
                vel.data_mut(),
                lr,
                momentum,
                wd,
            );
        }
        net.mark_gradients_consumed();
        self.iteration += 1;
        Ok(())
    }
}
