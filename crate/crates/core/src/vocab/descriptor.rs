//! Dense gradient-orientation histograms, the hand-crafted baseline feature.

use std::f64::consts::TAU;

use super::{FeatureVector, Result, VocabError};
use crate::imageio::Frame;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorParams {
    /// Keypoints per side of the dense grid.
    pub grid: usize,
    pub patch: usize,
    pub bins: usize,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            grid: 25,
            patch: 16,
            bins: 8,
        }
    }
}

/// Evenly spaced patch origins so that every patch lies inside `[0, n)`.
fn origins(n: usize, patch: usize, grid: usize) -> Vec<usize> {
    if grid == 1 {
        return vec![(n - patch) / 2];
    }
    (0..grid)
        .map(|i| ((i * (n - patch)) as f64 / (grid - 1) as f64).round() as usize)
        .collect()
}

/// Magnitude-weighted orientation histogram over each patch of a dense keypoint grid,
/// L2-normalized (all-zero when the patch has no gradient). Orientation is
/// `atan2(dy, dx)` in `[0, 2π)` split into equal bins, so bin 0 holds left-to-right
/// intensity increases.
pub fn baseline_descriptors<T: Scalar>(
    frame: &Frame<T>,
    params: &DescriptorParams,
) -> Result<Vec<FeatureVector<T>>> {
    let (h, w, ch) = frame.pixels.dims();
    if h < params.patch || w < params.patch || params.patch == 0 {
        return Err(VocabError::FrameTooSmall {
            height: h,
            width: w,
            patch: params.patch,
        });
    }
    let gray: Vec<f64> = (0..h * w)
        .map(|i| frame.pixels.pixel(i / w, i % w).iter().map(|v| v.as_f64()).sum::<f64>() / ch as f64)
        .collect();
    let at = |r: usize, c: usize| gray[r * w + c];

    // Per-pixel orientation bin and magnitude from central differences.
    let mut bin = vec![0usize; h * w];
    let mut mag = vec![0.0f64; h * w];
    for r in 0..h {
        for c in 0..w {
            let dx = (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1))) * 0.5;
            let dy = (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c)) * 0.5;
            let m = (dx * dx + dy * dy).sqrt();
            if m > 0.0 {
                let angle = dy.atan2(dx).rem_euclid(TAU);
                let b = ((angle / TAU * params.bins as f64 + 1e-9).floor() as usize) % params.bins;
                bin[r * w + c] = b;
                mag[r * w + c] = m;
            }
        }
    }

    let rows = origins(h, params.patch, params.grid);
    let cols = origins(w, params.patch, params.grid);
    let mut out = Vec::with_capacity(params.grid * params.grid);
    for (gi, &r0) in rows.iter().enumerate() {
        for (gj, &c0) in cols.iter().enumerate() {
            let mut hist = vec![0.0f64; params.bins];
            for r in r0..r0 + params.patch {
                for c in c0..c0 + params.patch {
                    hist[bin[r * w + c]] += mag[r * w + c];
                }
            }
            let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
            let values = hist
                .iter()
                .map(|&v| T::lit(if norm > 0.0 { v / norm } else { 0.0 }))
                .collect();
            out.push(FeatureVector {
                values,
                row: gi,
                col: gj,
                t: frame.t,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    #[test]
    fn constant_image_has_zero_histograms() {
        let f = Frame::new(0, 3, Tensor3::<f32>::filled(64, 64, 3, 0.4));
        let d = baseline_descriptors(&f, &DescriptorParams::default()).unwrap();
        assert_eq!(d.len(), 625);
        assert!(d.iter().all(|fv| fv.values.iter().all(|&v| v == 0.0) && fv.t == 3));
        assert_eq!((d[624].row, d[624].col), (24, 24));
    }

    #[test]
    fn vertical_edge_fills_horizontal_bins() {
        let f = Frame::new(0, 0, Tensor3::<f64>::from_fn(64, 64, 1, |_, c, _| if c < 32 { 0.0 } else { 1.0 }));
        let d = baseline_descriptors(&f, &DescriptorParams::default()).unwrap();
        let mut total = vec![0.0; 8];
        for fv in &d {
            for (t, v) in total.iter_mut().zip(&fv.values) {
                *t += v;
            }
        }
        let horizontal = total[0] + total[4];
        let sum: f64 = total.iter().sum();
        assert!(sum > 0.0);
        assert!(horizontal / sum > 0.99, "{total:?}");
        // Patches that straddle the edge carry a unit-norm histogram.
        assert!(d.iter().any(|fv| (fv.values[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn small_frame_rejected() {
        let f = Frame::new(0, 0, Tensor3::<f32>::zeros(10, 40, 3));
        assert!(matches!(
            baseline_descriptors(&f, &DescriptorParams::default()),
            Err(VocabError::FrameTooSmall { .. })
        ));
    }
}
