//! Seeded random instances of every kernel, compared against the oracles.

#![allow(dead_code)]

use meter::kernels::{self, AttentionWeights};
use meter::tensor::PatchSequence;
use meter::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// Worst elementwise |kernel - oracle| of one kernel over its instances.
pub struct KernelStat {
    pub name: &'static str,
    pub instances: usize,
    pub max_err: f64,
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (r.gen_range(1..3), r.gen_range(3..10), r.gen_range(3..10))
}

pub fn conv_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let groups = [1, 2, 3][r.gen_range(0..3)];
    let cin = groups * r.gen_range(1..4);
    let cout = groups * r.gen_range(1..4);
    let k = [1, 3][r.gen_range(0..2)];
    let stride = r.gen_range(1..3);
    let pad = if k == 3 { r.gen_range(0..2) } else { 0 };
    let x = random_tensor(&mut r, Shape::new(b, cin, h, w));
    let wt = random_tensor(&mut r, Shape::new(cout, cin / groups, k, k));
    let bias = uniform(&mut r, cout, -1.0, 1.0);
    let got = kernels::conv2d_grouped(&x, &wt, Some(&bias), stride, pad, groups).unwrap();
    let (shape, want) = conv(&x, &wt, Some(&bias), stride, pad, groups);
    assert_eq!(got.shape(), shape);
    max_abs(got.data(), &want)
}

pub fn depthwise_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let c = r.gen_range(1..6);
    let stride = r.gen_range(1..3);
    let x = random_tensor(&mut r, Shape::new(b, c, h, w));
    let wt = random_tensor(&mut r, Shape::new(c, 1, 3, 3));
    let got = kernels::depthwise_conv2d(&x, &wt, None, stride, 1).unwrap();
    let (shape, want) = conv(&x, &wt, None, stride, 1, c);
    assert_eq!(got.shape(), shape);
    max_abs(got.data(), &want)
}

pub fn pointwise_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let (cin, cout) = (r.gen_range(1..12), r.gen_range(1..12));
    let x = random_tensor(&mut r, Shape::new(b, cin, h, w));
    let wt = random_tensor(&mut r, Shape::new(cout, cin, 1, 1));
    let bias = uniform(&mut r, cout, -1.0, 1.0);
    let got = kernels::pointwise_conv2d(&x, &wt, Some(&bias)).unwrap();
    let (_, want) = conv(&x, &wt, Some(&bias), 1, 0, 1);
    max_abs(got.data(), &want)
}

pub fn transposed_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let (cin, cout) = (r.gen_range(1..5), r.gen_range(1..5));
    let (k, pad) = [(2, 0), (4, 1)][r.gen_range(0..2)];
    let x = random_tensor(&mut r, Shape::new(b, cin, h, w));
    let wt = random_tensor(&mut r, Shape::new(cin, cout, k, k));
    let bias = uniform(&mut r, cout, -1.0, 1.0);
    let got = kernels::transposed_conv2d(&x, &wt, Some(&bias), 2, pad).unwrap();
    let (shape, want) = transposed(&x, &wt, Some(&bias), 2, pad);
    assert_eq!(got.shape(), shape);
    max_abs(got.data(), &want)
}

pub fn batchnorm_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let c = r.gen_range(1..6);
    let x = random_tensor(&mut r, Shape::new(b, c, h, w));
    let mean = uniform(&mut r, c, -0.5, 0.5);
    let var = uniform(&mut r, c, 0.5, 2.0);
    let gamma = uniform(&mut r, c, 0.5, 1.5);
    let beta = uniform(&mut r, c, -0.5, 0.5);
    let got = kernels::batchnorm_inference(&x, &mean, &var, &gamma, &beta, 1e-5).unwrap();
    max_abs(got.data(), &batchnorm(&x, &mean, &var, &gamma, &beta, 1e-5))
}

fn random_seq(r: &mut ChaCha8Rng, dim: usize) -> PatchSequence {
    let (gh, gw) = (2 * r.gen_range(1..4), 2 * r.gen_range(1..4));
    let b = r.gen_range(1..3);
    let x = random_tensor(r, Shape::new(b, dim, gh, gw));
    kernels::unfold(&x, (2, 2)).unwrap()
}

pub fn layernorm_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.gen_range(2..10);
    let seq = random_seq(&mut r, dim);
    let gamma = uniform(&mut r, dim, 0.5, 1.5);
    let beta = uniform(&mut r, dim, -0.5, 0.5);
    let got = kernels::layernorm(&seq, &gamma, &beta, 1e-5).unwrap();
    max_abs(&got.data, &layernorm(&seq.data, dim, &gamma, &beta, 1e-5))
}

pub fn linear_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (din, dout) = (r.gen_range(1..10), r.gen_range(1..10));
    let seq = random_seq(&mut r, din);
    let wt = random_tensor(&mut r, Shape::new(dout, din, 1, 1));
    let bias = uniform(&mut r, dout, -1.0, 1.0);
    let got = kernels::linear(&seq, &wt, Some(&bias)).unwrap();
    let x: Vec<f64> = seq.data.iter().map(|&v| v as f64).collect();
    max_abs(&got.data, &affine(&x, din, &wt, &bias))
}

pub fn attention_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let heads = r.gen_range(1..4);
    let dim = heads * r.gen_range(1..4);
    let seq = random_seq(&mut r, dim);
    let mut proj = || (random_tensor(&mut r, Shape::new(dim, dim, 1, 1)), uniform(&mut r, dim, -0.5, 0.5));
    let ((wq, bq), (wk, bk), (wv, bv), (wo, bo)) = (proj(), proj(), proj(), proj());
    let p = Projections { wq, bq, wk, bk, wv, bv, wo, bo };
    let weights = AttentionWeights {
        wq: &p.wq,
        bq: Some(&p.bq),
        wk: &p.wk,
        bk: Some(&p.bk),
        wv: &p.wv,
        bv: Some(&p.bv),
        wo: &p.wo,
        bo: Some(&p.bo),
    };
    let got = kernels::multihead_self_attention(&seq, &weights, heads).unwrap();
    let mut want = Vec::new();
    for s in 0..seq.sequences() {
        want.extend(attention(seq.sequence(s), dim, heads, &p));
    }
    max_abs(&got.data, &want)
}

pub fn activation_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = Tensor::new(Shape::new(1, 2, 4, 5), uniform(&mut r, 40, -6.0, 6.0)).unwrap();
    let relu: Vec<f64> = x.data().iter().map(|&v| (v as f64).max(0.0)).collect();
    let silu_want: Vec<f64> = x.data().iter().map(|&v| silu(v as f64)).collect();
    max_abs(kernels::relu(&x).data(), &relu).max(max_abs(kernels::silu(&x).data(), &silu_want))
}

/// Unfold against a direct index formula; fold must then invert it exactly.
pub fn patch_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (ph, pw) = (r.gen_range(1..4), r.gen_range(1..4));
    let (b, c) = (r.gen_range(1..3), r.gen_range(1..5));
    let (h, w) = (ph * r.gen_range(1..5), pw * r.gen_range(1..5));
    let x = random_tensor(&mut r, Shape::new(b, c, h, w));
    let seq = kernels::unfold(&x, (ph, pw)).unwrap();
    let tokens = (h / ph) * (w / pw);
    let mut worst = 0.0f64;
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let sidx = bi * ph * pw + (y % ph) * pw + xx % pw;
                let tok = (y / ph) * (w / pw) + xx / pw;
                for ch in 0..c {
                    let got = seq.sequence(sidx)[tok * c + ch];
                    worst = worst.max((got - x.at(bi, ch, y, xx)).abs() as f64);
                }
            }
        }
    }
    assert_eq!(seq.tokens(), tokens);
    let back = kernels::fold(&seq).unwrap();
    if back.data().iter().zip(x.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return f64::INFINITY;
    }
    worst
}

pub fn concat_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, h, w) = dims(&mut r);
    let (ca, cb) = (r.gen_range(1..4), r.gen_range(1..4));
    let a = random_tensor(&mut r, Shape::new(b, ca, h, w));
    let bt = random_tensor(&mut r, Shape::new(b, cb, h, w));
    let got = kernels::concat_channels(&a, &bt).unwrap();
    let mut want = Vec::new();
    for bi in 0..b {
        want.extend(a.data()[bi * ca * h * w..(bi + 1) * ca * h * w].iter().map(|&v| v as f64));
        want.extend(bt.data()[bi * cb * h * w..(bi + 1) * cb * h * w].iter().map(|&v| v as f64));
    }
    max_abs(got.data(), &want)
}

type Case = (&'static str, fn(u64) -> f64);

pub const CASES: [Case; 12] = [
    ("conv2d", conv_case),
    ("depthwise_conv2d", depthwise_case),
    ("pointwise_conv2d", pointwise_case),
    ("transposed_conv2d", transposed_case),
    ("batchnorm", batchnorm_case),
    ("layernorm", layernorm_case),
    ("linear", linear_case),
    ("attention", attention_case),
    ("activation", activation_case),
    ("unfold_fold", patch_case),
    ("concat", concat_case),
    ("conv2d_dense", conv_dense_case),
];

/// Plain convolution at the stem's shape class: 3 input channels, stride 2.
pub fn conv_dense_case(seed: u64) -> f64 {
    let mut r = rng(seed ^ 0x5eed);
    let (h, w, cout) = (r.gen_range(4..12), r.gen_range(4..12), r.gen_range(1..8));
    let x = random_tensor(&mut r, Shape::new(1, 3, h, w));
    let wt = random_tensor(&mut r, Shape::new(cout, 3, 3, 3));
    let got = kernels::conv2d(&x, &wt, None, 2, 1).unwrap();
    let (_, want) = conv(&x, &wt, None, 2, 1, 1);
    max_abs(got.data(), &want)
}

pub fn run_suite(instances: u64) -> Vec<KernelStat> {
    CASES
        .iter()
        .map(|&(name, case)| KernelStat {
            name,
            instances: instances as usize,
            max_err: (0..instances).map(case).fold(0.0, f64::max),
        })
        .collect()
}
