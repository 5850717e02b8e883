//! Built-in consistency checks: kernels against naive loops, loss gradients
//! against finite differences of independently written loss values, patch
//! round trips, and the parameter/MAC table of the three variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::KvReport;
use crate::kernels::{self, AttentionWeights};
use crate::loss::{self, GradMode, LossWeights, MapDims, Sobel};
use crate::model::{InputSize, MeterModel, ModelConfig, Variant};
use crate::tensor::{PatchSequence, Shape, Tensor};

pub const KERNEL_TOL: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-3;
pub const VALUE_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;

/// Deliberate defects for exercising the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one Sobel coefficient inside the loss under test.
    Sobel,
}

impl std::str::FromStr for Fault {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sobel" => Ok(Fault::Sobel),
            _ => Err(crate::Error::Config(format!("unknown fault `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheckOptions {
    pub seed: u64,
    pub instances: usize,
    pub fault: Option<Fault>,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        SelfCheckOptions { seed: 42, instances: 10, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn within(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured.is_finite() && measured <= tolerance,
            detail: String::new(),
        }
    }

    fn failed(name: &str, detail: String) -> Self {
        CheckResult { name: name.to_string(), measured: f64::NAN, tolerance: 0.0, passed: false, detail }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

pub fn summary(results: &[CheckResult]) -> KvReport {
    let mut r = KvReport::new();
    let width = results.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in results {
        let mut line = format!(
            "{:pad$}{} measured={:.3e} tolerance={:.1e}",
            "",
            if c.passed { "PASS" } else { "FAIL" },
            c.measured,
            c.tolerance,
            pad = width - c.name.len()
        );
        if !c.detail.is_empty() {
            line.push_str(&format!(" detail={}", c.detail));
        }
        r.push(format!("check.{}", c.name), line);
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    r.push("checks_total", results.len());
    r.push("checks_failed", failed);
    r.push("status", if failed == 0 { "PASS" } else { "FAIL" });
    r
}

pub fn run(opts: &SelfCheckOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.instances.max(1);
    let sobel = match opts.fault {
        Some(Fault::Sobel) => {
            let mut k = Sobel::STANDARD;
            k.kx[1][2] = 2.2;
            k
        }
        None => Sobel::STANDARD,
    };
    let mut out = vec![
        check_conv(&mut rng, n),
        check_depthwise(&mut rng, n),
        check_pointwise(&mut rng, n),
        check_transposed(&mut rng, n),
        check_batchnorm(&mut rng, n),
        check_layernorm(&mut rng, n),
        check_attention(&mut rng, n),
        check_fold_unfold(&mut rng, n),
        check_sobel(&mut rng, n, &sobel),
    ];
    out.extend(check_loss(&mut rng, n, &sobel));
    out.extend(check_table());
    out
}

fn rand_tensor(rng: &mut ChaCha8Rng, s: Shape) -> Tensor {
    Tensor::new(s, (0..s.numel()).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).expect("sized")
}

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

fn record(name: &str, errs: impl IntoIterator<Item = crate::Result<f64>>, tol: f64) -> CheckResult {
    let mut worst = 0.0f64;
    for e in errs {
        match e {
            Ok(v) => worst = if v.is_nan() { f64::NAN } else { worst.max(v) },
            Err(e) => return CheckResult::failed(name, e.to_string()),
        }
    }
    CheckResult::within(name, worst, tol)
}

/// Zero-padded grouped cross-correlation, one output element at a time.
fn naive_conv(x: &Tensor, w: &Tensor, bias: Option<&[f32]>, stride: usize, pad: usize, groups: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (co, cig, k) = (ws.batch, ws.channels, ws.height);
    let oh = (xs.height + 2 * pad - k) / stride + 1;
    let ow = (xs.width + 2 * pad - k) / stride + 1;
    let cog = co / groups;
    let mut out = Vec::with_capacity(xs.batch * co * oh * ow);
    for b in 0..xs.batch {
        for o in 0..co {
            let g = o / cog;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o] as f64);
                    for ci in 0..cig {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= xs.height as isize || ix >= xs.width as isize {
                                    continue;
                                }
                                acc +=
                                    x.at(b, g * cig + ci, iy as usize, ix as usize) as f64 * w.at(o, ci, ky, kx) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn check_conv(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let (ci, co) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let stride = rng.gen_range(1..3);
            let x = {
                let s = Shape::new(rng.gen_range(1..3), ci, rng.gen_range(k..9), rng.gen_range(k..9));
                rand_tensor(rng, s)
            };
            let w = rand_tensor(rng, Shape::new(co, ci, k, k));
            let b: Vec<f32> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = kernels::conv2d(&x, &w, Some(&b), stride, k / 2)?;
            Ok(max_abs_diff(got.data(), &naive_conv(&x, &w, Some(&b), stride, k / 2, 1)))
        })
        .collect();
    record("kernel.conv2d", errs, KERNEL_TOL)
}

fn check_depthwise(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let c = rng.gen_range(1..6);
            let stride = rng.gen_range(1..3);
            let x = {
                let s = Shape::new(1, c, rng.gen_range(3..10), rng.gen_range(3..10));
                rand_tensor(rng, s)
            };
            let w = rand_tensor(rng, Shape::new(c, 1, 3, 3));
            let got = kernels::depthwise_conv2d(&x, &w, None, stride, 1)?;
            Ok(max_abs_diff(got.data(), &naive_conv(&x, &w, None, stride, 1, c)))
        })
        .collect();
    record("kernel.depthwise_conv2d", errs, KERNEL_TOL)
}

fn check_pointwise(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let (ci, co) = (rng.gen_range(1..9), rng.gen_range(1..9));
            let x = {
                let s = Shape::new(rng.gen_range(1..3), ci, rng.gen_range(1..7), rng.gen_range(1..7));
                rand_tensor(rng, s)
            };
            let w = rand_tensor(rng, Shape::new(co, ci, 1, 1));
            let b: Vec<f32> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = kernels::pointwise_conv2d(&x, &w, Some(&b))?;
            Ok(max_abs_diff(got.data(), &naive_conv(&x, &w, Some(&b), 1, 0, 1)))
        })
        .collect();
    record("kernel.pointwise_conv2d", errs, KERNEL_TOL)
}

/// Scatter form: every input pixel stamps the kernel onto the output.
fn naive_transposed(x: &Tensor, w: &Tensor, bias: &[f32], stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (co, k) = (ws.channels, ws.height);
    let (oh, ow) = ((xs.height - 1) * stride + k - 2 * pad, (xs.width - 1) * stride + k - 2 * pad);
    let mut out = vec![0.0f64; xs.batch * co * oh * ow];
    for b in 0..xs.batch {
        for o in 0..co {
            for v in &mut out[(b * co + o) * oh * ow..(b * co + o + 1) * oh * ow] {
                *v = bias[o] as f64;
            }
            for ci in 0..xs.channels {
                for iy in 0..xs.height {
                    for ix in 0..xs.width {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * co + o) * oh + oy as usize) * ow + ox as usize] +=
                                    x.at(b, ci, iy, ix) as f64 * w.at(ci, o, ky, kx) as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_transposed(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let (ci, co) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let (k, pad) = if rng.gen_bool(0.5) { (2, 0) } else { (4, 1) };
            let x = {
                let s = Shape::new(1, ci, rng.gen_range(1..6), rng.gen_range(1..6));
                rand_tensor(rng, s)
            };
            let w = rand_tensor(rng, Shape::new(ci, co, k, k));
            let b: Vec<f32> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = kernels::transposed_conv2d(&x, &w, Some(&b), 2, pad)?;
            Ok(max_abs_diff(got.data(), &naive_transposed(&x, &w, &b, 2, pad)))
        })
        .collect();
    record("kernel.transposed_conv2d", errs, KERNEL_TOL)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn check_batchnorm(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let c = rng.gen_range(1..6);
            let x = {
                let s = Shape::new(rng.gen_range(1..3), c, rng.gen_range(1..6), rng.gen_range(1..6));
                rand_tensor(rng, s)
            };
            let (m, v) = (rand_vec(rng, c, -1.0, 1.0), rand_vec(rng, c, 0.1, 2.0));
            let (g, b) = (rand_vec(rng, c, -2.0, 2.0), rand_vec(rng, c, -1.0, 1.0));
            let got = kernels::batchnorm_inference(&x, &m, &v, &g, &b, 1e-5)?;
            let s = x.shape();
            let want: Vec<f64> = (0..x.numel())
                .map(|i| {
                    let ch = i / s.plane() % c;
                    (x.data()[i] as f64 - m[ch] as f64) / (v[ch] as f64 + 1e-5f32 as f64).sqrt() * g[ch] as f64
                        + b[ch] as f64
                })
                .collect();
            Ok(max_abs_diff(got.data(), &want))
        })
        .collect();
    record("kernel.batchnorm", errs, KERNEL_TOL)
}

fn rand_seq(rng: &mut ChaCha8Rng, dim: usize) -> crate::Result<PatchSequence> {
    let x = {
        let s = Shape::new(rng.gen_range(1..3), dim, 2 * rng.gen_range(1..4), 2 * rng.gen_range(1..4));
        rand_tensor(rng, s)
    };
    kernels::unfold(&x, (2, 2))
}

fn check_layernorm(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let d = rng.gen_range(2..9);
            let seq = rand_seq(rng, d)?;
            let (g, b) = (rand_vec(rng, d, -2.0, 2.0), rand_vec(rng, d, -1.0, 1.0));
            let got = kernels::layernorm(&seq, &g, &b, 1e-5)?;
            let mut want = Vec::with_capacity(seq.data.len());
            for tok in seq.data.chunks(d) {
                let mean = tok.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
                let var = tok.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + 1e-5f32 as f64).sqrt();
                want.extend(tok.iter().enumerate().map(|(c, &v)| (v as f64 - mean) * inv * g[c] as f64 + b[c] as f64));
            }
            Ok(max_abs_diff(&got.data, &want))
        })
        .collect();
    record("kernel.layernorm", errs, KERNEL_TOL)
}

fn affine(w: &Tensor, b: &[f32], x: &[f64]) -> Vec<f64> {
    let (o, i) = (w.shape().batch, w.shape().channels);
    (0..o).map(|r| b[r] as f64 + (0..i).map(|c| w.data()[r * i + c] as f64 * x[c]).sum::<f64>()).collect()
}

fn check_attention(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let heads = rng.gen_range(1..4);
            let d = heads * rng.gen_range(1..4);
            let seq = rand_seq(rng, d)?;
            let ws: Vec<Tensor> = (0..4).map(|_| rand_tensor(rng, Shape::new(d, d, 1, 1))).collect();
            let bs: Vec<Vec<f32>> = (0..4).map(|_| rand_vec(rng, d, -0.5, 0.5)).collect();
            let aw = AttentionWeights {
                wq: &ws[0],
                bq: Some(&bs[0]),
                wk: &ws[1],
                bk: Some(&bs[1]),
                wv: &ws[2],
                bv: Some(&bs[2]),
                wo: &ws[3],
                bo: Some(&bs[3]),
            };
            let got = kernels::multihead_self_attention(&seq, &aw, heads)?;
            let (len, dh) = (seq.tokens(), d / heads);
            let mut want = Vec::with_capacity(seq.data.len());
            for s in 0..seq.sequences() {
                let toks: Vec<Vec<f64>> =
                    seq.sequence(s).chunks(d).map(|t| t.iter().map(|&v| v as f64).collect()).collect();
                let q: Vec<_> = toks.iter().map(|t| affine(&ws[0], &bs[0], t)).collect();
                let k: Vec<_> = toks.iter().map(|t| affine(&ws[1], &bs[1], t)).collect();
                let v: Vec<_> = toks.iter().map(|t| affine(&ws[2], &bs[2], t)).collect();
                for qi in 0..len {
                    let mut mixed = vec![0.0; d];
                    for h in 0..heads {
                        let r = h * dh..(h + 1) * dh;
                        let logits: Vec<f64> = (0..len)
                            .map(|ki| r.clone().map(|c| q[qi][c] * k[ki][c]).sum::<f64>() / (dh as f64).sqrt())
                            .collect();
                        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                        let z: f64 = e.iter().sum();
                        for c in r {
                            mixed[c] = (0..len).map(|ki| e[ki] / z * v[ki][c]).sum();
                        }
                    }
                    want.extend(affine(&ws[3], &bs[3], &mixed));
                }
            }
            Ok(max_abs_diff(&got.data, &want))
        })
        .collect();
    record("kernel.attention", errs, KERNEL_TOL)
}

fn check_fold_unfold(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let mut mismatches = 0usize;
    for _ in 0..n {
        let (ph, pw) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let x = {
            let s = Shape::new(
                rng.gen_range(1..3),
                rng.gen_range(1..5),
                ph * rng.gen_range(1..4),
                pw * rng.gen_range(1..4),
            );
            rand_tensor(rng, s)
        };
        match kernels::unfold(&x, (ph, pw)).and_then(|s| kernels::fold(&s)) {
            Ok(back) if back == x => {}
            Ok(_) => mismatches += 1,
            Err(e) => return CheckResult::failed("kernel.fold_unfold", e.to_string()),
        }
    }
    CheckResult::within("kernel.fold_unfold", mismatches as f64, 0.0)
}

/// Replicate-padded Sobel straight from its definition.
fn naive_sobel(z: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: isize, x: isize| z[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let o = i as usize * w + j as usize;
            gx[o] = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            gy[o] = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
        }
    }
    (gx, gy)
}

fn check_sobel(rng: &mut ChaCha8Rng, n: usize, k: &Sobel) -> CheckResult {
    let errs: Vec<_> = (0..n)
        .map(|_| {
            let (h, w) = (rng.gen_range(3..9), rng.gen_range(3..9));
            let z: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..5.0)).collect();
            let (gx, gy) = loss::sobel_f64_with(&z, MapDims { planes: 1, height: h, width: w }, k)?;
            let (ox, oy) = naive_sobel(&z, h, w);
            Ok(gx.iter().chain(&gy).zip(ox.iter().chain(&oy)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect();
    record("loss.sobel", errs, KERNEL_TOL)
}

/// Independent value-only definitions of the loss terms.
mod oracle {
    use super::naive_sobel;

    pub fn depth(y: &[f64], p: &[f64]) -> f64 {
        y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
    }

    pub fn grad(y: &[f64], p: &[f64], h: usize, w: usize) -> f64 {
        let e: Vec<f64> = y.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
        let (gx, gy) = naive_sobel(&e, h, w);
        gx.iter().zip(&gy).map(|(a, b)| a + b).sum::<f64>() / e.len() as f64
    }

    pub fn norm(y: &[f64], p: &[f64], h: usize, w: usize) -> f64 {
        let (yx, yy) = naive_sobel(y, h, w);
        let (px, py) = naive_sobel(p, h, w);
        let mut acc = 0.0;
        for i in 0..y.len() {
            let u = [-px[i], -py[i], 1.0];
            let v = [-yx[i], -yy[i], 1.0];
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            acc += 1.0 - dot / (nu * nv);
        }
        acc / y.len() as f64
    }

    pub fn ssim(y: &[f64], p: &[f64], h: usize, w: usize, range: f64) -> f64 {
        let k = 7;
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..=h - k {
            for j in 0..=w - k {
                let idx: Vec<usize> = (0..k * k).map(|t| (i + t / k) * w + j + t % k).collect();
                let mean = |v: &[f64]| idx.iter().map(|&o| v[o]).sum::<f64>() / idx.len() as f64;
                let (mx, my) = (mean(p), mean(y));
                let n = idx.len() as f64;
                let vx = idx.iter().map(|&o| (p[o] - mx).powi(2)).sum::<f64>() / n;
                let vy = idx.iter().map(|&o| (y[o] - my).powi(2)).sum::<f64>() / n;
                let cxy = idx.iter().map(|&o| (p[o] - mx) * (y[o] - my)).sum::<f64>() / n;
                total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        1.0 - total / count
    }
}

/// Ground truth and a prediction that stays at least 0.1 away from it.
pub fn gradcheck_pair(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = (0..len).map(|_| rng.gen_range(0.5..5.0)).collect();
    let p = y
        .iter()
        .map(|&v| {
            let off = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v + off
            } else {
                (v - off).max(0.05)
            }
        })
        .collect();
    (y, p)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn gradcheck(analytic: &[f64], p: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut q = p.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        q[i] = p[i] + FD_STEP;
        let up = f(&q);
        q[i] = p[i] - FD_STEP;
        let down = f(&q);
        q[i] = p[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn check_loss(rng: &mut ChaCha8Rng, n: usize, k: &Sobel) -> Vec<CheckResult> {
    let (h, w) = (8, 8);
    let dims = MapDims { planes: 1, height: h, width: w };
    let range = 10.0;
    let lw = LossWeights::default();
    let blf = |y: &[f64], p: &[f64]| {
        oracle::depth(y, p)
            + lw.lambda1 * oracle::grad(y, p, h, w)
            + lw.lambda2 * oracle::norm(y, p, h, w)
            + lw.lambda3 * oracle::ssim(y, p, h, w, range)
    };
    let names = ["l_depth", "l_grad", "l_norm", "l_ssim", "balanced"];
    let mut grad_err = [0.0f64; 5];
    let mut value_err = [0.0f64; 5];
    for _ in 0..n {
        let (y, p) = gradcheck_pair(rng, h * w);
        let terms = (|| -> crate::Result<[(f64, Vec<f64>); 5]> {
            let d = loss::depth_term(&y, &p, dims)?;
            let g = loss::grad_term_with(&y, &p, dims, GradMode::Literal, k)?;
            let nn = loss::norm_term_with(&y, &p, dims, k)?;
            let s = loss::ssim_term(&y, &p, dims, range)?;
            let (r, bg) = loss::balanced_loss_f64_with(&y, &p, dims, &lw, range, GradMode::Literal, k)?;
            Ok([(d.value, d.grad), (g.value, g.grad), (nn.value, nn.grad), (s.value, s.grad), (r.total, bg)])
        })();
        let terms = match terms {
            Ok(t) => t,
            Err(e) => {
                return names.iter().map(|t| CheckResult::failed(&format!("gradcheck.{t}"), e.to_string())).collect()
            }
        };
        let oracles: [&dyn Fn(&[f64]) -> f64; 5] = [
            &|q| oracle::depth(&y, q),
            &|q| oracle::grad(&y, q, h, w),
            &|q| oracle::norm(&y, q, h, w),
            &|q| oracle::ssim(&y, q, h, w, range),
            &|q| blf(&y, q),
        ];
        for (i, ((value, grad), f)) in terms.iter().zip(oracles).enumerate() {
            grad_err[i] = grad_err[i].max(gradcheck(grad, &p, f));
            value_err[i] = value_err[i].max(rel_err(*value, f(&p)));
        }
    }
    let mut out = Vec::new();
    for i in 0..5 {
        out.push(CheckResult::within(&format!("value.{}", names[i]), value_err[i], VALUE_TOL));
        out.push(CheckResult::within(&format!("gradcheck.{}", names[i]), grad_err[i], GRAD_TOL));
    }
    out
}

/// Published sizes: params (M), MACs at 256x192 and 636x192 (G).
pub const PUBLISHED: [(Variant, f64, f64, f64); 3] =
    [(Variant::S, 3.29, 0.975, 2.432), (Variant::XS, 1.45, 0.579, 1.444), (Variant::XXS, 0.71, 0.186, 0.464)];

fn check_table() -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (v, params, indoor, outdoor) in PUBLISHED {
        let model = match MeterModel::zeroed(ModelConfig::preset(v)) {
            Ok(m) => m,
            Err(e) => {
                out.push(CheckResult::failed(&format!("table.{v}"), e.to_string()));
                continue;
            }
        };
        let dev = |got: f64, want: f64| (got - want).abs() / want;
        out.push(CheckResult::within(
            &format!("table.params_{v}"),
            dev(model.param_count() as f64 / 1e6, params),
            0.05,
        ));
        for (size, want) in [(InputSize::INDOOR, indoor), (InputSize::OUTDOOR, outdoor)] {
            let name = format!("table.macs_{v}_{size}");
            out.push(match model.mac_count(size) {
                Ok(m) => CheckResult::within(&name, dev(m as f64 / 1e9, want), 0.10),
                Err(e) => CheckResult::failed(&name, e.to_string()),
            });
        }
    }
    out
}
