//! Forward and backward kernels for every layer type the sub-networks use.

mod activation;
mod concat;
mod conv;
mod linear;
mod pool;
mod softmax;

pub use activation::{relu, relu_backward};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, ArgmaxMap};
pub use softmax::softmax;
