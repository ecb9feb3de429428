//! Multi-region ensemble CNN for facial expression recognition.
//!
//! Three dual-input sub-networks each see the aligned whole face together
//! with one landmark-defined crop (left eye, nose or mouth). Their softmax
//! scores are combined by a fixed convex weighting.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod network;
pub mod ops;
pub mod preprocess;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
