use crate::scalar::Scalar;
use crate::tensor::Tensor3;

use super::Lca;

/// Which latent channel wins each cell, and per-channel min-max normalized activations.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceMap<T> {
    pub height: usize,
    pub width: usize,
    /// Winning channel per cell, row-major.
    pub argmax: Vec<usize>,
    /// Number of cells won by each channel.
    pub magnitudes: Vec<usize>,
    pub normalized: Tensor3<T>,
}

impl<T> DominanceMap<T> {
    pub fn winner(&self, row: usize, col: usize) -> usize {
        self.argmax[row * self.width + col]
    }
}

/// Per-cell argmax channel (ties to the lowest index) and per-channel normalization to
/// `[0, 1]`; a constant channel normalizes to zeros.
pub fn channel_dominance<T: Scalar>(lca: &Lca<T>) -> DominanceMap<T> {
    let grid = &lca.grid;
    let (h, w, c) = grid.dims();
    let mut argmax = Vec::with_capacity(h * w);
    let mut magnitudes = vec![0usize; c];
    for r in 0..h {
        for col in 0..w {
            let px = grid.pixel(r, col);
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            argmax.push(best);
            magnitudes[best] += 1;
        }
    }

    let mut lo = vec![T::infinity(); c];
    let mut hi = vec![T::neg_infinity(); c];
    for (i, &v) in grid.as_slice().iter().enumerate() {
        lo[i % c] = lo[i % c].min(v);
        hi[i % c] = hi[i % c].max(v);
    }
    let normalized = Tensor3::from_fn(h, w, c, |r, col, k| {
        let span = hi[k] - lo[k];
        if span > T::zero() {
            (grid.get(r, col, k) - lo[k]) / span
        } else {
            T::zero()
        }
    });

    DominanceMap {
        height: h,
        width: w,
        argmax,
        magnitudes,
        normalized,
    }
}
