use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Output extent of a strided, padded window along one axis.
pub fn conv_out_extent(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn check_bias(op: &'static str, bias: Option<&[f32]>, out_ch: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != out_ch => {
            Err(Error::dim(op, format!("bias has {} entries for {out_ch} output channels", b.len())))
        }
        _ => Ok(()),
    }
}

/// Grouped 2-D cross-correlation.
///
/// `weights` is (out_ch, in_ch / groups, kh, kw). Plain convolution is
/// `groups = 1`, depthwise is `groups = in_ch = out_ch`.
pub fn conv2d_grouped(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor> {
    let is = input.shape();
    let ws = weights.shape();
    let (out_ch, kh, kw) = (ws.batch, ws.height, ws.width);
    if groups == 0 || !is.channels.is_multiple_of(groups) || out_ch % groups != 0 {
        return Err(Error::dim("conv2d", format!("input {is} and weights {ws} cannot be split into {groups} groups")));
    }
    let in_per_group = is.channels / groups;
    if ws.channels != in_per_group {
        return Err(Error::dim("conv2d", format!("input {is} does not match weights {ws} (groups = {groups})")));
    }
    if stride == 0 {
        return Err(Error::Config("conv2d stride must be positive".into()));
    }
    check_bias("conv2d", bias, out_ch)?;
    let (Some(oh), Some(ow)) =
        (conv_out_extent(is.height, kh, stride, padding), conv_out_extent(is.width, kw, stride, padding))
    else {
        return Err(Error::dim("conv2d", format!("kernel of weights {ws} does not fit padded input {is}")));
    };

    let out_shape = Shape::new(is.batch, out_ch, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let out_per_group = out_ch / groups;
    let plane_out = oh * ow;
    let pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
    let geo = Geometry { h: is.height, w: is.width, oh, ow, kh, kw, stride, padding };

    out.data_mut().par_chunks_mut(plane_out.max(1)).enumerate().for_each_init(
        || vec![0f64; plane_out],
        |acc, (idx, dst)| {
            let b = idx / out_ch;
            let oc = idx % out_ch;
            let g = oc / out_per_group;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let first = g * in_per_group;
            if pointwise {
                let wrow = &weights.data()[oc * in_per_group..(oc + 1) * in_per_group];
                pointwise_plane(acc, input, b, first, in_per_group, wrow);
            } else {
                for icg in 0..in_per_group {
                    let kbase = (oc * in_per_group + icg) * kh * kw;
                    let kern = &weights.data()[kbase..kbase + kh * kw];
                    window_plane(acc, input.plane(b, first + icg), kern, &geo);
                }
            }
            let bv = bias.map_or(0.0, |b| b[oc] as f64);
            for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                *d = (a + bv) as f32;
            }
        },
    );
    Ok(out)
}

struct Geometry {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
}

/// Accumulates one input plane through a `kh x kw` window into `acc`.
fn window_plane(acc: &mut [f64], src: &[f32], kern: &[f32], g: &Geometry) {
    let (h, w, oh, ow, stride, padding) = (g.h, g.w, g.oh, g.ow, g.stride, g.padding);
    for ky in 0..g.kh {
        for kx in 0..g.kw {
            let wv = kern[ky * g.kw + kx] as f64;
            // Columns whose tap lands inside the input.
            let lo = padding.saturating_sub(kx).div_ceil(stride);
            let hi = ((w + padding).saturating_sub(kx)).div_ceil(stride).min(ow);
            if lo >= hi {
                continue;
            }
            for oy in 0..oh {
                let iy = oy * stride + ky;
                if iy < padding || iy - padding >= h {
                    continue;
                }
                let row = &src[(iy - padding) * w..(iy - padding + 1) * w];
                let arow = &mut acc[oy * ow..(oy + 1) * ow];
                if stride == 1 {
                    let start = lo + kx - padding;
                    let xs = &row[start..start + (hi - lo)];
                    for (a, &x) in arow[lo..hi].iter_mut().zip(xs) {
                        *a += wv * x as f64;
                    }
                } else {
                    for ox in lo..hi {
                        arow[ox] += wv * row[ox * stride + kx - padding] as f64;
                    }
                }
            }
        }
    }
}

/// Accumulates a 1x1 conv over `count` input planes starting at `first`,
/// four planes per pass to cut accumulator traffic.
fn pointwise_plane(acc: &mut [f64], input: &Tensor, b: usize, first: usize, count: usize, w: &[f32]) {
    let mut ic = 0;
    while ic + 4 <= count {
        let (x0, x1, x2, x3) = (
            input.plane(b, first + ic),
            input.plane(b, first + ic + 1),
            input.plane(b, first + ic + 2),
            input.plane(b, first + ic + 3),
        );
        let (w0, w1, w2, w3) = (w[ic] as f64, w[ic + 1] as f64, w[ic + 2] as f64, w[ic + 3] as f64);
        for (p, a) in acc.iter_mut().enumerate() {
            *a += w0 * x0[p] as f64 + w1 * x1[p] as f64 + w2 * x2[p] as f64 + w3 * x3[p] as f64;
        }
        ic += 4;
    }
    for i in ic..count {
        let x = input.plane(b, first + i);
        let wv = w[i] as f64;
        for (a, &v) in acc.iter_mut().zip(x) {
            *a += wv * v as f64;
        }
    }
}

pub fn conv2d(input: &Tensor, weights: &Tensor, bias: Option<&[f32]>, stride: usize, padding: usize) -> Result<Tensor> {
    conv2d_grouped(input, weights, bias, stride, padding, 1)
}

/// Per-channel spatial filter; `weights` is (ch, 1, kh, kw).
pub fn depthwise_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let ch = input.shape().channels;
    if weights.shape().batch != ch || weights.shape().channels != 1 {
        return Err(Error::dim(
            "depthwise_conv2d",
            format!("input {} needs weights ({ch}, 1, kh, kw), got {}", input.shape(), weights.shape()),
        ));
    }
    conv2d_grouped(input, weights, bias, stride, padding, ch)
}

pub fn pointwise_conv2d(input: &Tensor, weights: &Tensor, bias: Option<&[f32]>) -> Result<Tensor> {
    let ws = weights.shape();
    if ws.height != 1 || ws.width != 1 {
        return Err(Error::dim("pointwise_conv2d", format!("expected 1x1 kernel, got weights {ws}")));
    }
    conv2d_grouped(input, weights, bias, 1, 0, 1)
}

/// Fractionally strided convolution (the adjoint of a strided conv).
///
/// `weights` is (in_ch, out_ch, kh, kw). Only configurations whose output
/// is exactly twice the input extent are accepted.
pub fn transposed_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let is = input.shape();
    let ws = weights.shape();
    let (out_ch, kh, kw) = (ws.channels, ws.height, ws.width);
    if ws.batch != is.channels {
        return Err(Error::dim("transposed_conv2d", format!("input {is} does not match weights {ws}")));
    }
    check_bias("transposed_conv2d", bias, out_ch)?;
    let extent = |len: usize, k: usize| -> Option<usize> {
        let full = len.checked_sub(1)? * stride + k;
        full.checked_sub(2 * padding)
    };
    let doubles = |len: usize, k: usize| extent(len, k) == Some(2 * len);
    // Checked on extent 1 as well so the rule holds for every input size.
    if stride == 0 || !doubles(is.height, kh) || !doubles(is.width, kw) || !doubles(1, kh) || !doubles(1, kw) {
        return Err(Error::Config(format!(
            "transposed conv with kernel {kh}x{kw}, stride {stride}, padding {padding} does not double the resolution"
        )));
    }
    let (h, w) = (is.height, is.width);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(Shape::new(is.batch, out_ch, oh, ow));
    let in_ch = is.channels;

    out.data_mut().par_chunks_mut((oh * ow).max(1)).enumerate().for_each(|(idx, dst)| {
        let b = idx / out_ch;
        let oc = idx % out_ch;
        let mut acc = vec![0f64; oh * ow];
        for ic in 0..in_ch {
            let src = input.plane(b, ic);
            let kbase = (ic * out_ch + oc) * kh * kw;
            let kern = &weights.data()[kbase..kbase + kh * kw];
            for iy in 0..h {
                for ky in 0..kh {
                    let oy = iy * stride + ky;
                    if oy < padding || oy - padding >= oh {
                        continue;
                    }
                    let oy = oy - padding;
                    for ix in 0..w {
                        let x = src[iy * w + ix] as f64;
                        for kx in 0..kw {
                            let ox = ix * stride + kx;
                            if ox < padding || ox - padding >= ow {
                                continue;
                            }
                            acc[oy * ow + ox - padding] += x * kern[ky * kw + kx] as f64;
                        }
                    }
                }
            }
        }
        let bv = bias.map_or(0.0, |b| b[oc] as f64);
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = (a + bv) as f32;
        }
    });
    Ok(out)
}
