//! Visual vocabulary: LCA slicing, k-means codebooks, nearest-centroid quantization, and a
//! gradient-orientation baseline descriptor.

mod descriptor;
mod io;
mod kmeans;

pub use descriptor::{baseline_descriptors, DescriptorParams};
pub use io::{load_codebook, read_words_csv, save_codebook, write_words_csv, VOCAB_MAGIC};
pub use kmeans::{kmeans_fit, kmeans_fit_with_history, KmeansParams};

use thiserror::Error;

use crate::cae::{CaeError, CaeNetwork, Lca};
use crate::imageio::Frame;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("no feature vectors to cluster")]
    Empty,
    #[error("vocabulary size must be at least 1")]
    ZeroVocabulary,
    #[error("vocabulary size {k} exceeds the {distinct} distinct feature vectors")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("feature has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("frame {height}x{width} is smaller than the {patch}x{patch} descriptor patch")]
    FrameTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("codebook file: {0}")]
    Format(String),
    #[error(transparent)]
    Cae(#[from] CaeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VocabError> = std::result::Result<T, E>;

/// A real-valued descriptor anchored at a grid cell of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub row: usize,
    pub col: usize,
    pub t: u64,
}

/// A quantized word at grid position (`row`, `col`) of the frame at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WordObservation {
    pub v: usize,
    pub row: usize,
    pub col: usize,
    pub t: u64,
}

/// k-means centroids; each centroid is one visual word.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub centroids: Vec<Vec<T>>,
    pub seed: u64,
    /// Within-cluster sum of squares at the final centroids.
    pub inertia: T,
}

impl<T: Scalar> Codebook<T> {
    pub fn size(&self) -> usize {
        self.centroids.len()
    }

    pub fn dimension(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest word id.
    pub fn quantize(&self, feature: &[T]) -> Result<usize> {
        if feature.len() != self.dimension() {
            return Err(VocabError::DimensionMismatch {
                expected: self.dimension(),
                found: feature.len(),
            });
        }
        Ok(nearest(&self.centroids, feature).0)
    }
}

#[inline]
pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Index and squared distance of the closest centroid (lowest index on ties).
pub(crate) fn nearest<T: Scalar>(centroids: &[Vec<T>], x: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (k, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// One feature per latent cell, row-major, holding that cell's channel activations.
pub fn slice_lca<T: Scalar>(lca: &Lca<T>, t: u64) -> Vec<FeatureVector<T>> {
    let (h, w, _) = lca.dims();
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            out.push(FeatureVector {
                values: lca.grid.pixel(row, col).to_vec(),
                row,
                col,
                t,
            });
        }
    }
    out
}

pub fn quantize<T: Scalar>(codebook: &Codebook<T>, feature: &[T]) -> Result<usize> {
    codebook.quantize(feature)
}

/// Quantizes a list of descriptors, carrying positions and time through.
pub fn features_to_words<T: Scalar>(
    codebook: &Codebook<T>,
    features: &[FeatureVector<T>],
) -> Result<Vec<WordObservation>> {
    features
        .iter()
        .map(|f| {
            Ok(WordObservation {
                v: codebook.quantize(&f.values)?,
                row: f.row,
                col: f.col,
                t: f.t,
            })
        })
        .collect()
}

/// Encoder pass, slicing and quantization for one frame.
pub fn frame_to_words<T: Scalar>(
    net: &CaeNetwork<T>,
    codebook: &Codebook<T>,
    frame: &Frame<T>,
) -> Result<Vec<WordObservation>> {
    let lca = net.extract_lca(frame)?;
    features_to_words(codebook, &slice_lca(&lca, frame.t))
}
