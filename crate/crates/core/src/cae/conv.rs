//! Strided "same"-padded convolution, its exact adjoint, and the filter gradient kernel.

use crate::scalar::Scalar;
use crate::tensor::Tensor3;

use super::CaeError;

/// Filter bank laid out `[ky][kx][in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter<T> {
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Filter<T> {
    pub fn zeros(size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            size,
            in_channels,
            out_channels,
            data: vec![T::zero(); size * size * in_channels * out_channels],
        }
    }

    pub fn from_fn(
        size: usize,
        in_channels: usize,
        out_channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(size * size * in_channels * out_channels);
        for ky in 0..size {
            for kx in 0..size {
                for i in 0..in_channels {
                    for o in 0..out_channels {
                        data.push(f(ky, kx, i, o));
                    }
                }
            }
        }
        Self {
            size,
            in_channels,
            out_channels,
            data,
        }
    }

    #[inline]
    pub fn get(&self, ky: usize, kx: usize, i: usize, o: usize) -> T {
        self.data[self.tap(ky, kx) + i * self.out_channels + o]
    }

    /// Offset of the `in × out` block for one spatial tap.
    #[inline]
    fn tap(&self, ky: usize, kx: usize) -> usize {
        (ky * self.size + kx) * self.in_channels * self.out_channels
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }
}

/// Spatial geometry of one strided layer with "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub size: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Output dim is `ceil(in / stride)`; padding is split with the extra pixel at the end.
    pub fn same(in_h: usize, in_w: usize, size: usize, stride: usize) -> Self {
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad = |out: usize, inp: usize| ((out - 1) * stride + size).saturating_sub(inp) / 2;
        Self {
            in_h,
            in_w,
            out_h,
            out_w,
            size,
            stride,
            pad_top: pad(out_h, in_h),
            pad_left: pad(out_w, in_w),
        }
    }

    /// Input coordinate touched by output `o` through tap `k`, if inside the image.
    #[inline]
    fn source(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
        let p = o * stride + k;
        if p < pad || p - pad >= n {
            None
        } else {
            Some(p - pad)
        }
    }

    /// Calls `f(oy, ox, ky, kx, iy, ix)` for every in-bounds (output, tap) pair.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        for oy in 0..self.out_h {
            for ky in 0..self.size {
                let Some(iy) = Self::source(oy, ky, self.stride, self.pad_top, self.in_h) else {
                    continue;
                };
                for ox in 0..self.out_w {
                    for kx in 0..self.size {
                        let Some(ix) = Self::source(ox, kx, self.stride, self.pad_left, self.in_w)
                        else {
                            continue;
                        };
                        f(oy, ox, ky, kx, iy, ix);
                    }
                }
            }
        }
    }
}

/// Pre-activation convolution `y = W * x` (no bias, no ReLU).
pub fn conv_linear<T: Scalar>(input: &Tensor3<T>, filter: &Filter<T>, geom: &ConvGeometry) -> Tensor3<T> {
    debug_assert_eq!(input.dims(), (geom.in_h, geom.in_w, filter.in_channels));
    let (ci, co) = (filter.in_channels, filter.out_channels);
    let mut out = Tensor3::zeros(geom.out_h, geom.out_w, co);
    geom.for_each_tap(|oy, ox, ky, kx, iy, ix| {
        let x = input.pixel(iy, ix);
        let w = &filter.data[filter.tap(ky, kx)..filter.tap(ky, kx) + ci * co];
        let y = out.pixel_mut(oy, ox);
        for (i, &xv) in x.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let row = &w[i * co..(i + 1) * co];
            for (acc, &wv) in y.iter_mut().zip(row) {
                *acc += xv * wv;
            }
        }
    });
    out
}

/// Adjoint of [`conv_linear`]: scatters each latent pixel back through the same taps.
/// Equivalent to convolving with the spatially flipped filter with in/out axes swapped.
pub fn conv_transpose_linear<T: Scalar>(
    latent: &Tensor3<T>,
    filter: &Filter<T>,
    geom: &ConvGeometry,
) -> Tensor3<T> {
    debug_assert_eq!(latent.dims(), (geom.out_h, geom.out_w, filter.out_channels));
    let (ci, co) = (filter.in_channels, filter.out_channels);
    let mut out = Tensor3::zeros(geom.in_h, geom.in_w, ci);
    geom.for_each_tap(|oy, ox, ky, kx, iy, ix| {
        let y = latent.pixel(oy, ox);
        if y.iter().all(|&v| v == T::zero()) {
            return;
        }
        let w = &filter.data[filter.tap(ky, kx)..filter.tap(ky, kx) + ci * co];
        let x = out.pixel_mut(iy, ix);
        for (i, acc) in x.iter_mut().enumerate() {
            let row = &w[i * co..(i + 1) * co];
            *acc += row.iter().zip(y).fold(T::zero(), |s, (&wv, &yv)| s + wv * yv);
        }
    });
    out
}

/// Accumulates `grad[ky,kx,i,o] += Σ a[iy,ix,i] · b[oy,ox,o]` over all taps, where `a`
/// lives on the input grid and `b` on the output grid.
pub fn accumulate_filter_grad<T: Scalar>(
    a: &Tensor3<T>,
    b: &Tensor3<T>,
    geom: &ConvGeometry,
    grad: &mut Filter<T>,
) {
    let (ci, co) = (grad.in_channels, grad.out_channels);
    geom.for_each_tap(|oy, ox, ky, kx, iy, ix| {
        let bv = b.pixel(oy, ox);
        if bv.iter().all(|&v| v == T::zero()) {
            return;
        }
        let av = a.pixel(iy, ix);
        let base = grad.tap(ky, kx);
        let g = &mut grad.data[base..base + ci * co];
        for (i, &x) in av.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (acc, &y) in g[i * co..(i + 1) * co].iter_mut().zip(bv) {
                *acc += x * y;
            }
        }
    });
}

fn add_bias_relu<T: Scalar>(t: &mut Tensor3<T>, bias: &[T], relu: bool) {
    let c = t.channels();
    for (idx, v) in t.as_mut_slice().iter_mut().enumerate() {
        let z = *v + bias[idx % c];
        *v = if relu { z.max(T::zero()) } else { z };
    }
}

/// One encoder layer: same-padded strided convolution, bias, ReLU.
pub fn conv_forward<T: Scalar>(
    input: &Tensor3<T>,
    filter: &Filter<T>,
    bias: &[T],
    stride: usize,
) -> Result<Tensor3<T>, CaeError> {
    if input.channels() != filter.in_channels {
        return Err(CaeError::ChannelMismatch {
            expected: filter.in_channels,
            found: input.channels(),
        });
    }
    if bias.len() != filter.out_channels {
        return Err(CaeError::ShapeMismatch(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            filter.out_channels
        )));
    }
    let geom = ConvGeometry::same(input.height(), input.width(), filter.size, stride);
    let mut out = conv_linear(input, filter, &geom);
    add_bias_relu(&mut out, bias, true);
    Ok(out)
}

/// One decoder layer: transposed convolution with the tied encoder filter back to
/// `output_hw`, plus the decoder bias; ReLU unless `linear`.
pub fn deconv_forward<T: Scalar>(
    latent: &Tensor3<T>,
    filter: &Filter<T>,
    bias: &[T],
    stride: usize,
    output_hw: (usize, usize),
    linear: bool,
) -> Result<Tensor3<T>, CaeError> {
    if latent.channels() != filter.out_channels {
        return Err(CaeError::ChannelMismatch {
            expected: filter.out_channels,
            found: latent.channels(),
        });
    }
    let geom = ConvGeometry::same(output_hw.0, output_hw.1, filter.size, stride);
    if (geom.out_h, geom.out_w) != (latent.height(), latent.width()) {
        return Err(CaeError::ShapeMismatch(format!(
            "latent {}x{} does not map back to {}x{} with stride {stride}",
            latent.height(),
            latent.width(),
            output_hw.0,
            output_hw.1
        )));
    }
    if bias.len() != filter.in_channels {
        return Err(CaeError::ShapeMismatch(format!(
            "decoder bias has {} entries for {} channels",
            bias.len(),
            filter.in_channels
        )));
    }
    let mut out = conv_transpose_linear(latent, filter, &geom);
    add_bias_relu(&mut out, bias, !linear);
    Ok(out)
}
