//! Unsupervised terrain discovery in image streams.
//!
//! Frames are encoded by a convolutional autoencoder, the latent activations are
//! quantized into visual words, and a streaming spatio-temporal topic model groups the
//! words into topics. Per-frame scene labels and perplexity are scored against
//! annotations with normalized mutual information.

pub mod cae;
pub mod eval;
pub mod imageio;
pub mod pipeline;
pub mod rost;
pub mod scalar;
pub mod tensor;
pub mod vocab;

pub use scalar::Scalar;
pub use tensor::Tensor3;

pub type Tensor3F32 = tensor::Tensor3<f32>;
pub type Tensor3F64 = tensor::Tensor3<f64>;
pub type Frame32 = imageio::Frame<f32>;
pub type Frame64 = imageio::Frame<f64>;
pub type CaeNetworkF32 = cae::CaeNetwork<f32>;
pub type CaeNetworkF64 = cae::CaeNetwork<f64>;
pub type Lca32 = cae::Lca<f32>;
pub type Lca64 = cae::Lca<f64>;
pub type Codebook32 = vocab::Codebook<f32>;
pub type Codebook64 = vocab::Codebook<f64>;
