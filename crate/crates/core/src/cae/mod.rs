//! Convolutional autoencoder with tied decoder weights, trained from scratch.
//!
//! The encoder is a stack of strided "same"-padded convolutions with ReLU. The decoder
//! mirrors it with transposed convolutions that reuse the encoder filters, ReLU on every
//! decoder layer except the last, which is linear. There are no pooling or dropout layers;
//! [`Layer`] has no variant for them.

mod conv;
mod dominance;
mod io;
mod train;

pub use conv::{
    accumulate_filter_grad, conv_forward, conv_linear, conv_transpose_linear, deconv_forward,
    ConvGeometry, Filter,
};
pub use dominance::{channel_dominance, DominanceMap};
pub use io::{load_network, read_loss_csv, save_network, write_loss_csv, CAE_MAGIC};
pub use train::{gradients, loss, loss_and_gradients, train, Gradients, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imageio::Frame;
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

#[derive(Debug, Error)]
pub enum CaeError {
    #[error("input has {found} channels, layer expects {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("input is {found:?}, network expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CaeError> = std::result::Result<T, E>;

/// One encoder layer: square filter size, stride and output channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub filter: usize,
    pub stride: usize,
    pub out_channels: usize,
}

impl Layer {
    pub const fn new(filter: usize, stride: usize, out_channels: usize) -> Self {
        Self {
            filter,
            stride,
            out_channels,
        }
    }
}

/// Architecture and optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    /// (height, width, channels)
    pub input: (usize, usize, usize),
    pub layers: Vec<Layer>,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl ArchSpec {
    /// 400×400×3 input, filters 10-10-3-3, channels 3-3-5-5, stride 2, 400 epochs.
    /// Encodes to a 25×25×5 latent grid.
    pub fn paper_default() -> Self {
        Self {
            input: (400, 400, 3),
            layers: vec![
                Layer::new(10, 2, 3),
                Layer::new(10, 2, 3),
                Layer::new(3, 2, 5),
                Layer::new(3, 2, 5),
            ],
            weight_decay: 1e-4,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 400,
            seed: 0,
        }
    }

    /// Same structure at 64×64 input, filters 5-5-3-3. Encodes to 4×4×5.
    pub fn test_scale() -> Self {
        Self {
            input: (64, 64, 3),
            layers: vec![
                Layer::new(5, 2, 3),
                Layer::new(5, 2, 3),
                Layer::new(3, 2, 5),
                Layer::new(3, 2, 5),
            ],
            ..Self::paper_default()
        }
    }

    /// 8×8×1 input, two 3×3 stride-2 layers of 2 channels. Used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            input: (8, 8, 1),
            layers: vec![Layer::new(3, 2, 2), Layer::new(3, 2, 2)],
            ..Self::paper_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(CaeError::InvalidArch(format!("input {h}x{w}x{c} has a zero dimension")));
        }
        if self.layers.is_empty() {
            return Err(CaeError::InvalidArch("no encoder layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.filter == 0 || l.stride == 0 || l.out_channels == 0 {
                return Err(CaeError::InvalidArch(format!(
                    "layer {i} ({}/{}/{}) has a zero parameter",
                    l.filter, l.stride, l.out_channels
                )));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(CaeError::InvalidArch(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(CaeError::InvalidArch(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CaeError::InvalidArch("batch size and epochs must be positive".into()));
        }
        Ok(())
    }

    /// Activation shapes from the input through every encoder layer (length `layers + 1`).
    pub fn shape_chain(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = vec![self.input];
        for l in &self.layers {
            let (h, w, _) = *shapes.last().unwrap();
            shapes.push((h.div_ceil(l.stride), w.div_ceil(l.stride), l.out_channels));
        }
        shapes
    }

    pub fn latent_dims(&self) -> (usize, usize, usize) {
        *self.shape_chain().last().unwrap()
    }

    pub(crate) fn geometries(&self) -> Vec<ConvGeometry> {
        let shapes = self.shape_chain();
        self.layers
            .iter()
            .zip(&shapes)
            .map(|(l, &(h, w, _))| ConvGeometry::same(h, w, l.filter, l.stride))
            .collect()
    }
}

/// Bottleneck activations (latent height × width × channels), all entries ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Lca<T> {
    pub grid: Tensor3<T>,
}

impl<T: Scalar> Lca<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.grid.dims()
    }
}

/// Encoder filters and biases plus decoder biases. The decoder has no filters of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeNetwork<T> {
    pub arch: ArchSpec,
    pub filters: Vec<Filter<T>>,
    pub encoder_bias: Vec<Vec<T>>,
    pub decoder_bias: Vec<Vec<T>>,
}

/// Per-layer activations recorded by a forward pass.
pub(crate) struct Trace<T> {
    /// `enc[0]` is the input, `enc[l + 1]` the ReLU output of encoder layer `l`.
    pub enc: Vec<Tensor3<T>>,
    /// `dec[l]` is the output of the decoder layer mirroring encoder layer `l`
    /// (`dec[0]` is the reconstruction).
    pub dec: Vec<Tensor3<T>>,
}

impl<T: Scalar> CaeNetwork<T> {
    /// All parameters zero.
    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.shape_chain();
        let filters = arch
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| Filter::zeros(l.filter, s.2, l.out_channels))
            .collect();
        let encoder_bias = arch.layers.iter().map(|l| vec![T::zero(); l.out_channels]).collect();
        let decoder_bias = shapes[..arch.layers.len()]
            .iter()
            .map(|s| vec![T::zero(); s.2])
            .collect();
        Ok(Self {
            arch,
            filters,
            encoder_bias,
            decoder_bias,
        })
    }

    /// Glorot-uniform filters drawn from `arch.seed`, zero biases.
    pub fn new(arch: ArchSpec) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(net.arch.seed);
        for f in &mut net.filters {
            let area = (f.size * f.size) as f64;
            let limit = (6.0 / (area * (f.in_channels + f.out_channels) as f64)).sqrt();
            for w in &mut f.data {
                *w = T::lit(rng.random_range(-limit..=limit));
            }
        }
        Ok(net)
    }

    pub fn num_parameters(&self) -> usize {
        self.filters.iter().map(|f| f.data.len()).sum::<usize>()
            + self.encoder_bias.iter().map(Vec::len).sum::<usize>()
            + self.decoder_bias.iter().map(Vec::len).sum::<usize>()
    }

    fn check_input(&self, x: &Tensor3<T>) -> Result<()> {
        if x.dims() != self.arch.input {
            return Err(CaeError::DimensionMismatch {
                expected: self.arch.input,
                found: x.dims(),
            });
        }
        Ok(())
    }

    /// Encoder-only pass.
    pub fn encode(&self, x: &Tensor3<T>) -> Result<Lca<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for (l, layer) in self.arch.layers.iter().enumerate() {
            a = conv_forward(&a, &self.filters[l], &self.encoder_bias[l], layer.stride)?;
        }
        Ok(Lca { grid: a })
    }

    /// Decoder pass from a latent grid back to input shape.
    pub fn decode(&self, latent: &Tensor3<T>) -> Result<Tensor3<T>> {
        let shapes = self.arch.shape_chain();
        let expected = *shapes.last().unwrap();
        if latent.dims() != expected {
            return Err(CaeError::ShapeMismatch(format!(
                "latent {:?} does not match {:?}",
                latent.dims(),
                expected
            )));
        }
        let mut d = latent.clone();
        for l in (0..self.arch.layers.len()).rev() {
            let (h, w, _) = shapes[l];
            d = deconv_forward(
                &d,
                &self.filters[l],
                &self.decoder_bias[l],
                self.arch.layers[l].stride,
                (h, w),
                l == 0,
            )?;
        }
        Ok(d)
    }

    /// Full pass: latent activations and reconstruction.
    pub fn forward(&self, x: &Tensor3<T>) -> Result<(Lca<T>, Tensor3<T>)> {
        let lca = self.encode(x)?;
        let recon = self.decode(&lca.grid)?;
        Ok((lca, recon))
    }

    pub(crate) fn trace(&self, x: &Tensor3<T>) -> Result<Trace<T>> {
        self.check_input(x)?;
        let n = self.arch.layers.len();
        let mut enc = Vec::with_capacity(n + 1);
        enc.push(x.clone());
        for (l, layer) in self.arch.layers.iter().enumerate() {
            let next = conv_forward(&enc[l], &self.filters[l], &self.encoder_bias[l], layer.stride)?;
            enc.push(next);
        }
        let shapes = self.arch.shape_chain();
        let mut dec: Vec<Option<Tensor3<T>>> = vec![None; n];
        for l in (0..n).rev() {
            let src = if l + 1 == n { &enc[n] } else { dec[l + 1].as_ref().unwrap() };
            let (h, w, _) = shapes[l];
            let out = deconv_forward(
                src,
                &self.filters[l],
                &self.decoder_bias[l],
                self.arch.layers[l].stride,
                (h, w),
                l == 0,
            )?;
            dec[l] = Some(out);
        }
        Ok(Trace {
            enc,
            dec: dec.into_iter().map(Option::unwrap).collect(),
        })
    }

    /// Latent activations for one frame, which must already have the input size.
    pub fn extract_lca(&self, frame: &Frame<T>) -> Result<Lca<T>> {
        self.encode(&frame.pixels)
    }

    /// Mean per-pixel squared reconstruction error, no decay term.
    pub fn reconstruction_error(&self, frame: &Frame<T>) -> Result<T> {
        let (_, recon) = self.forward(&frame.pixels)?;
        Ok(mean_squared_error(&recon, &frame.pixels))
    }

    /// Converts all parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> CaeNetwork<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from(x).unwrap()).collect::<Vec<U>>();
        CaeNetwork {
            arch: self.arch.clone(),
            filters: self
                .filters
                .iter()
                .map(|f| Filter {
                    size: f.size,
                    in_channels: f.in_channels,
                    out_channels: f.out_channels,
                    data: conv(&f.data),
                })
                .collect(),
            encoder_bias: self.encoder_bias.iter().map(|b| conv(b)).collect(),
            decoder_bias: self.decoder_bias.iter().map(|b| conv(b)).collect(),
        }
    }
}

pub(crate) fn mean_squared_error<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>) -> T {
    let n = T::from_usize(a.len()).unwrap();
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        / n
}
