//! Brute-force reference implementations shared by the integration suites.
//!
//! Everything here is written for clarity, in f64, straight from the textbook
//! definitions. Nothing calls into the crate's kernels.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod kernel_cases;
pub mod loss_cases;

use meter::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    let data = uniform(rng, shape.numel(), -1.0, 1.0);
    Tensor::new(shape, data).unwrap()
}

pub fn max_abs(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).abs()).fold(0.0, f64::max)
}

fn get(t: &Tensor, b: usize, c: usize, y: i64, x: i64) -> f64 {
    let s = t.shape();
    if y < 0 || x < 0 || y >= s.height as i64 || x >= s.width as i64 {
        0.0
    } else {
        t.at(b, c, y as usize, x as usize) as f64
    }
}

/// Grouped cross-correlation, zero padding. Weights (out, in/groups, kh, kw).
pub fn conv(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> (Shape, Vec<f64>) {
    let xs = x.shape();
    let ws = w.shape();
    let oh = (xs.height + 2 * pad - ws.height) / stride + 1;
    let ow = (xs.width + 2 * pad - ws.width) / stride + 1;
    let out_shape = Shape::new(xs.batch, ws.batch, oh, ow);
    let opg = ws.batch / groups;
    let mut out = Vec::with_capacity(out_shape.numel());
    for b in 0..xs.batch {
        for oc in 0..ws.batch {
            let g = oc / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |v| v[oc] as f64);
                    for ci in 0..ws.channels {
                        let ic = g * ws.channels + ci;
                        for ky in 0..ws.height {
                            for kx in 0..ws.width {
                                let iy = (oy * stride + ky) as i64 - pad as i64;
                                let ix = (ox * stride + kx) as i64 - pad as i64;
                                acc += w.at(oc, ci, ky, kx) as f64 * get(x, b, ic, iy, ix);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (out_shape, out)
}

/// Transposed convolution written as a gather: output pixel `o` collects
/// every input pixel `i` and tap `k` with `i * stride + k - pad == o`.
/// Weights (in, out, kh, kw); output extent is twice the input.
pub fn transposed(x: &Tensor, w: &Tensor, bias: Option<&[f32]>, stride: usize, pad: usize) -> (Shape, Vec<f64>) {
    let xs = x.shape();
    let ws = w.shape();
    let (oh, ow) = (2 * xs.height, 2 * xs.width);
    let shape = Shape::new(xs.batch, ws.channels, oh, ow);
    let mut out = Vec::with_capacity(shape.numel());
    for b in 0..xs.batch {
        for oc in 0..ws.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |v| v[oc] as f64);
                    for ic in 0..xs.channels {
                        for ky in 0..ws.height {
                            let ny = oy as i64 + pad as i64 - ky as i64;
                            if ny < 0 || ny % stride as i64 != 0 {
                                continue;
                            }
                            for kx in 0..ws.width {
                                let nx = ox as i64 + pad as i64 - kx as i64;
                                if nx < 0 || nx % stride as i64 != 0 {
                                    continue;
                                }
                                let v = get(x, b, ic, ny / stride as i64, nx / stride as i64);
                                acc += v * w.at(ic, oc, ky, kx) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (shape, out)
}

pub fn batchnorm(x: &Tensor, mean: &[f32], var: &[f32], gamma: &[f32], beta: &[f32], eps: f32) -> Vec<f64> {
    let s = x.shape();
    let mut out = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        for c in 0..s.channels {
            for y in 0..s.height {
                for xx in 0..s.width {
                    let v = x.at(b, c, y, xx) as f64;
                    let norm = (v - mean[c] as f64) / (var[c] as f64 + eps as f64).sqrt();
                    out.push(norm * gamma[c] as f64 + beta[c] as f64);
                }
            }
        }
    }
    out
}

/// Layer norm over rows of a `rows x dim` matrix.
pub fn layernorm(rows: &[f32], dim: usize, gamma: &[f32], beta: &[f32], eps: f32) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows.chunks(dim) {
        let n = dim as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        for (i, &v) in row.iter().enumerate() {
            out.push((v as f64 - mean) / (var + eps as f64).sqrt() * gamma[i] as f64 + beta[i] as f64);
        }
    }
    out
}

/// `x W^T + b` for a `rows x in` matrix and a (out, in, 1, 1) weight.
pub fn affine(rows: &[f64], inp: usize, w: &Tensor, b: &[f32]) -> Vec<f64> {
    let out_dim = w.shape().batch;
    let mut out = Vec::new();
    for row in rows.chunks(inp) {
        for o in 0..out_dim {
            let mut acc = b[o] as f64;
            for (i, &r) in row.iter().enumerate() {
                acc += w.at(o, i, 0, 0) as f64 * r;
            }
            out.push(acc);
        }
    }
    out
}

pub struct Projections {
    pub wq: Tensor,
    pub bq: Vec<f32>,
    pub wk: Tensor,
    pub bk: Vec<f32>,
    pub wv: Tensor,
    pub bv: Vec<f32>,
    pub wo: Tensor,
    pub bo: Vec<f32>,
}

/// Scaled dot-product multi-head attention over one `len x dim` sequence.
pub fn attention(seq: &[f32], dim: usize, heads: usize, p: &Projections) -> Vec<f64> {
    let x: Vec<f64> = seq.iter().map(|&v| v as f64).collect();
    let q = affine(&x, dim, &p.wq, &p.bq);
    let k = affine(&x, dim, &p.wk, &p.bk);
    let v = affine(&x, dim, &p.wv, &p.bv);
    let len = seq.len() / dim;
    let dh = dim / heads;
    let mut ctx = vec![0.0; len * dim];
    for h in 0..heads {
        for i in 0..len {
            let scores: Vec<f64> = (0..len)
                .map(|j| {
                    (0..dh).map(|t| q[i * dim + h * dh + t] * k[j * dim + h * dh + t]).sum::<f64>() / (dh as f64).sqrt()
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for j in 0..len {
                let a = scores[j].exp() / z;
                for t in 0..dh {
                    ctx[i * dim + h * dh + t] += a * v[j * dim + h * dh + t];
                }
            }
        }
    }
    affine(&ctx, dim, &p.wo, &p.bo)
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Sobel derivatives with edge replication, one plane.
pub fn sobel(z: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: i64, x: i64| z[(y.clamp(0, h as i64 - 1) as usize) * w + x.clamp(0, w as i64 - 1) as usize];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as i64 {
        for j in 0..w as i64 {
            let o = i as usize * w + j as usize;
            gx[o] = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            gy[o] = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
        }
    }
    (gx, gy)
}

pub fn l_depth(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

/// Edge term; `absolute` takes |.| of each Sobel response before averaging.
pub fn l_grad(y: &[f64], p: &[f64], h: usize, w: usize, absolute: bool) -> f64 {
    let e: Vec<f64> = y.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
    let (gx, gy) = sobel(&e, h, w);
    let f = |v: f64| if absolute { v.abs() } else { v };
    gx.iter().zip(&gy).map(|(&a, &b)| f(a) + f(b)).sum::<f64>() / e.len() as f64
}

pub fn l_norm(y: &[f64], p: &[f64], h: usize, w: usize) -> f64 {
    let (yx, yy) = sobel(y, h, w);
    let (px, py) = sobel(p, h, w);
    let mut acc = 0.0;
    for i in 0..y.len() {
        let dot = px[i] * yx[i] + py[i] * yy[i] + 1.0;
        let a = (px[i] * px[i] + py[i] * py[i] + 1.0).sqrt();
        let b = (yx[i] * yx[i] + yy[i] * yy[i] + 1.0).sqrt();
        acc += 1.0 - dot / (a * b);
    }
    acc / y.len() as f64
}

/// `1 - mean SSIM` over valid 7x7 windows, population moments.
pub fn l_ssim(y: &[f64], p: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);
    let mut sum = 0.0;
    let mut windows = 0usize;
    for top in 0..=h - 7 {
        for left in 0..=w - 7 {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for r in top..top + 7 {
                for c in left..left + 7 {
                    a.push(p[r * w + c]);
                    b.push(y[r * w + c]);
                }
            }
            let n = 49.0;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = a.iter().zip(&b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    1.0 - sum / windows as f64
}

/// Central-difference gradient of `f` at `p`.
pub fn numeric_grad(p: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + step;
            let up = f(&q);
            q[i] = p[i] - step;
            let down = f(&q);
            q[i] = p[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6)).fold(0.0, f64::max)
}

/// Ground truth in [0.5, 5) and a prediction kept at least 0.1 away from it,
/// so no pixel sits on the |y - p| kink.
pub fn loss_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
    let p = y
        .iter()
        .map(|&v| {
            let off: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v + off
            } else {
                v - off.min(v - 0.05)
            }
        })
        .collect();
    (y, p)
}
