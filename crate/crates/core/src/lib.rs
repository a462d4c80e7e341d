//! Semantic communication laboratory: a Transformer-based joint
//! semantic/channel transceiver trained end to end through differentiable
//! channel models, a neural mutual-information estimator, classical
//! Huffman / Reed–Solomon / 64-QAM baselines, and BLEU / sentence-similarity
//! metrics.
//!
//! All learned components are generic over the element type (`f32` or
//! `f64`, see [`Scalar`]). Training uses `f32`; the `f64` instantiations are
//! handy for finite-difference gradient checks. The aliases below fix the
//! working precision.

pub mod channel;
pub mod classic;
pub mod metrics;
pub mod miest;
mod scalar;
pub mod tensor;
pub mod textdata;
pub mod training;
pub mod transceiver;

pub use scalar::Scalar;

/// Working precision for training and evaluation.
pub type Real = f32;

pub type Tensor = tensor::Tensor<Real>;
pub type Graph = tensor::Graph<Real>;
pub type ParamStore = tensor::ParamStore<Real>;
pub type DeepSc = transceiver::DeepSc<Real>;
pub type MiNetwork = miest::MiNetwork<Real>;
pub type SymbolBlock = channel::ComplexSymbolBlock<Real>;
