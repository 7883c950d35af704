//! Lloyd's algorithm with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{nearest, squared_distance, Codebook, Result, VocabError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

fn distinct_count<T: Scalar>(points: &[&[T]]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| (v.as_f64() + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn assign<T: Scalar>(points: &[&[T]], centroids: &[Vec<T>]) -> Vec<(usize, T)> {
    points.par_iter().map(|p| nearest(centroids, p)).collect()
}

fn plus_plus_seed<T: Scalar>(points: &[&[T]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]).as_f64())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        chosen = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // Rounding can exhaust the scan; fall back to the last positive weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            break;
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans_fit<T: Scalar>(features: &[&[T]], params: &KmeansParams) -> Result<Codebook<T>> {
    kmeans_fit_with_history(features, params).map(|(c, _)| c)
}

/// Like [`kmeans_fit`], also returning the inertia after each assignment step.
pub fn kmeans_fit_with_history<T: Scalar>(
    features: &[&[T]],
    params: &KmeansParams,
) -> Result<(Codebook<T>, Vec<T>)> {
    if features.is_empty() {
        return Err(VocabError::Empty);
    }
    if params.k == 0 {
        return Err(VocabError::ZeroVocabulary);
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(VocabError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let distinct = distinct_count(features);
    if params.k > distinct {
        return Err(VocabError::TooFewDistinct { k: params.k, distinct });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_seed(features, params.k, &mut rng);
    let mut history = Vec::new();
    let mut assignment = assign(features, &centroids);

    for _ in 0..params.max_iters {
        history.push(assignment.iter().fold(T::zero(), |acc, a| acc + a.1));

        let mut sums = vec![vec![T::zero(); dim]; params.k];
        let mut counts = vec![0usize; params.k];
        for (p, &(k, _)) in features.iter().zip(&assignment) {
            counts[k] += 1;
            sums[k].iter_mut().zip(p.iter()).for_each(|(s, &v)| *s += v);
        }
        let mut next: Vec<Option<Vec<T>>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| {
                (n > 0).then(|| {
                    let n = T::from_usize(n).unwrap();
                    s.into_iter().map(|v| v / n).collect()
                })
            })
            .collect();
        // Two clusters collapsing onto one mean are treated like an empty cluster.
        for k in 0..params.k {
            if let Some(c) = &next[k] {
                if next[..k].iter().flatten().any(|o| o == c) {
                    next[k] = None;
                }
            }
        }

        // Empty clusters take the point farthest from its assigned centroid.
        let mut distances: Vec<(usize, T)> = assignment.iter().map(|a| a.1).enumerate().collect();
        let mut reseeded = Vec::new();
        for k in 0..params.k {
            if next[k].is_some() {
                continue;
            }
            let (far, _) = distances
                .iter()
                .copied()
                .fold((usize::MAX, T::neg_infinity()), |best, (i, d)| {
                    if d > best.1 && !reseeded.contains(&i) {
                        (i, d)
                    } else {
                        best
                    }
                });
            let point = features[far].to_vec();
            distances[far].1 = T::zero();
            reseeded.push(far);
            next[k] = Some(point);
        }
        let next: Vec<Vec<T>> = next.into_iter().map(Option::unwrap).collect();

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b).as_f64().sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        assignment = assign(features, &centroids);
        if shift < params.tol {
            break;
        }
    }

    let inertia = assignment.iter().fold(T::zero(), |acc, a| acc + a.1);
    history.push(inertia);
    Ok((
        Codebook {
            centroids,
            seed: params.seed,
            inertia,
        },
        history,
    ))
}
