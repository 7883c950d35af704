//! Reconstruction loss, backpropagation through the tied-weight network, and SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    accumulate_filter_grad, conv_linear, conv_transpose_linear, mean_squared_error, CaeError,
    CaeNetwork, Filter, Result,
};
use crate::imageio::Frame;
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Gradient of the loss with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub filters: Vec<Filter<T>>,
    pub encoder_bias: Vec<Vec<T>>,
    pub decoder_bias: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &CaeNetwork<T>) -> Self {
        Self {
            filters: net
                .filters
                .iter()
                .map(|f| Filter::zeros(f.size, f.in_channels, f.out_channels))
                .collect(),
            encoder_bias: net.encoder_bias.iter().map(|b| vec![T::zero(); b.len()]).collect(),
            decoder_bias: net.decoder_bias.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.filters.iter_mut().zip(&other.filters) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, &y)| *x += y);
        }
        let add = |a: &mut Vec<Vec<T>>, b: &Vec<Vec<T>>| {
            for (u, v) in a.iter_mut().zip(b) {
                u.iter_mut().zip(v).for_each(|(x, &y)| *x += y);
            }
        };
        add(&mut self.encoder_bias, &other.encoder_bias);
        add(&mut self.decoder_bias, &other.decoder_bias);
    }

    /// Every gradient entry, in parameter declaration order.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.filters
            .iter()
            .flat_map(|f| f.data.iter())
            .chain(self.encoder_bias.iter().flatten())
            .chain(self.decoder_bias.iter().flatten())
    }
}

fn check_batch<T: Scalar>(net: &CaeNetwork<T>, batch: &[&Tensor3<T>]) -> Result<()> {
    if batch.is_empty() {
        return Err(CaeError::EmptyBatch);
    }
    for x in batch {
        if x.dims() != net.arch.input {
            return Err(CaeError::DimensionMismatch {
                expected: net.arch.input,
                found: x.dims(),
            });
        }
    }
    Ok(())
}

fn decay_term<T: Scalar>(net: &CaeNetwork<T>) -> T {
    let sq = net.filters.iter().fold(T::zero(), |acc, f| acc + f.sum_sq());
    T::lit(net.arch.weight_decay) * sq
}

/// Mean over the batch of per-pixel mean squared error, plus `λ Σ‖W‖²` (biases are not decayed).
pub fn loss<T: Scalar>(net: &CaeNetwork<T>, batch: &[&Tensor3<T>]) -> Result<T> {
    check_batch(net, batch)?;
    let mut total = T::zero();
    for x in batch {
        let (_, recon) = net.forward(x)?;
        total += mean_squared_error(&recon, x);
    }
    Ok(total / T::from_usize(batch.len()).unwrap() + decay_term(net))
}

/// Analytic gradient of [`loss`].
pub fn gradients<T: Scalar>(net: &CaeNetwork<T>, batch: &[&Tensor3<T>]) -> Result<Gradients<T>> {
    loss_and_gradients(net, batch).map(|(_, g)| g)
}

pub fn loss_and_gradients<T: Scalar>(
    net: &CaeNetwork<T>,
    batch: &[&Tensor3<T>],
) -> Result<(T, Gradients<T>)> {
    check_batch(net, batch)?;
    let weight = T::one() / T::from_usize(batch.len()).unwrap();
    let per_sample: Vec<(T, Gradients<T>)> = batch
        .par_iter()
        .map(|x| sample_gradients(net, x, weight))
        .collect::<Result<_>>()?;

    // Summed in batch order so results do not depend on thread scheduling.
    let mut grads = Gradients::zeros_like(net);
    let mut recon = T::zero();
    for (l, g) in &per_sample {
        recon += *l;
        grads.add_assign(g);
    }
    let lambda = T::lit(net.arch.weight_decay);
    if lambda != T::zero() {
        let two_lambda = lambda + lambda;
        for (g, w) in grads.filters.iter_mut().zip(&net.filters) {
            g.data.iter_mut().zip(&w.data).for_each(|(g, &w)| *g += two_lambda * w);
        }
    }
    Ok((recon * weight + decay_term(net), grads))
}

fn channel_sums<T: Scalar>(t: &Tensor3<T>, out: &mut [T]) {
    let c = t.channels();
    for (i, &v) in t.as_slice().iter().enumerate() {
        out[i % c] += v;
    }
}

/// Masks `g` where the post-ReLU activation is zero.
fn relu_backward<T: Scalar>(g: &mut Tensor3<T>, activation: &Tensor3<T>) {
    for (gv, &a) in g.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if a <= T::zero() {
            *gv = T::zero();
        }
    }
}

/// Reconstruction loss of one sample and its gradient, both scaled by `weight`.
fn sample_gradients<T: Scalar>(
    net: &CaeNetwork<T>,
    x: &Tensor3<T>,
    weight: T,
) -> Result<(T, Gradients<T>)> {
    let trace = net.trace(x)?;
    let geoms = net.arch.geometries();
    let n = net.arch.layers.len();
    let mut grads = Gradients::zeros_like(net);

    let recon = &trace.dec[0];
    let scale = (T::one() + T::one()) * weight / T::from_usize(recon.len()).unwrap();
    let mut g = Tensor3::from_vec(
        recon.height(),
        recon.width(),
        recon.channels(),
        recon
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(&r, &t)| (r - t) * scale)
            .collect(),
    );

    // Decoder, from the output layer back toward the latent grid.
    for l in 0..n {
        if l > 0 {
            relu_backward(&mut g, &trace.dec[l]);
        }
        channel_sums(&g, &mut grads.decoder_bias[l]);
        let src = if l + 1 == n { &trace.enc[n] } else { &trace.dec[l + 1] };
        accumulate_filter_grad(&g, src, &geoms[l], &mut grads.filters[l]);
        g = conv_linear(&g, &net.filters[l], &geoms[l]);
    }

    // Encoder, from the latent grid back toward the input.
    for l in (0..n).rev() {
        relu_backward(&mut g, &trace.enc[l + 1]);
        channel_sums(&g, &mut grads.encoder_bias[l]);
        accumulate_filter_grad(&trace.enc[l], &g, &geoms[l], &mut grads.filters[l]);
        if l > 0 {
            g = conv_transpose_linear(&g, &net.filters[l], &geoms[l]);
        }
    }

    Ok((mean_squared_error(recon, x) * weight, grads))
}

fn sgd_step<T: Scalar>(net: &mut CaeNetwork<T>, grads: &Gradients<T>, lr: T) {
    for (w, g) in net.filters.iter_mut().zip(&grads.filters) {
        w.data.iter_mut().zip(&g.data).for_each(|(w, &g)| *w -= lr * g);
    }
    let step = |p: &mut Vec<Vec<T>>, g: &Vec<Vec<T>>| {
        for (u, v) in p.iter_mut().zip(g) {
            u.iter_mut().zip(v).for_each(|(w, &g)| *w -= lr * g);
        }
    };
    step(&mut net.encoder_bias, &grads.encoder_bias);
    step(&mut net.decoder_bias, &grads.decoder_bias);
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub network: CaeNetwork<T>,
    /// Mean training loss of each epoch, evaluated batch by batch before each update.
    pub history: Vec<f64>,
}

/// Plain minibatch SGD over shuffled frames for `arch.epochs` epochs.
pub fn train<T: Scalar>(mut net: CaeNetwork<T>, frames: &[Frame<T>]) -> Result<TrainOutcome<T>> {
    net.arch.validate()?;
    if frames.is_empty() {
        return Err(CaeError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(net.arch.seed);
    rng.set_stream(1);
    let lr = T::lit(net.arch.learning_rate);
    let batch_size = net.arch.batch_size;
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut history = Vec::with_capacity(net.arch.epochs);

    for epoch in 0..net.arch.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Tensor3<T>> = chunk.iter().map(|&i| &frames[i].pixels).collect();
            let (batch_loss, grads) = loss_and_gradients(&net, &batch)?;
            let batch_loss = batch_loss.as_f64();
            if !batch_loss.is_finite() {
                return Err(CaeError::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            sgd_step(&mut net, &grads, lr);
        }
        let epoch_loss = epoch_loss / frames.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(CaeError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        history.push(epoch_loss);
    }
    Ok(TrainOutcome {
        network: net,
        history,
    })
}
