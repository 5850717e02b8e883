//! Finite-difference checks of the loss gradients on seeded 8x8 pairs.

#![allow(dead_code)]

use meter::loss::{self, GradMode, LossWeights, MapDims};

use super::*;

pub const H: usize = 8;
pub const W: usize = 8;
pub const RANGE: f64 = 10.0;
pub const STEP: f64 = 1e-6;
const DIMS: MapDims = MapDims { planes: 1, height: H, width: W };

pub struct GradStat {
    pub name: &'static str,
    pub pairs: usize,
    /// Worst relative gradient error over all pairs.
    pub grad_err: f64,
    /// Worst relative error between the analytic value and the oracle value.
    pub value_err: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Smallest |Sobel response| of the absolute error map; the absolute edge
/// term has a kink wherever one of them crosses zero.
fn min_response(y: &[f64], p: &[f64]) -> f64 {
    let e: Vec<f64> = y.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
    let (gx, gy) = sobel(&e, H, W);
    gx.iter().chain(&gy).map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

fn stat(
    name: &'static str,
    pairs: &[(Vec<f64>, Vec<f64>)],
    analytic: impl Fn(&[f64], &[f64]) -> (f64, Vec<f64>),
    oracle: impl Fn(&[f64], &[f64]) -> f64,
) -> GradStat {
    let mut grad_err = 0.0f64;
    let mut value_err = 0.0f64;
    for (y, p) in pairs {
        let (value, grad) = analytic(y, p);
        let numeric = numeric_grad(p, STEP, |q| oracle(y, q));
        grad_err = grad_err.max(max_rel_err(&grad, &numeric));
        value_err = value_err.max(rel(value, oracle(y, p)));
    }
    GradStat { name, pairs: pairs.len(), grad_err, value_err }
}

pub fn pairs(seed: u64, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut r = rng(seed);
    (0..n).map(|_| loss_pair(&mut r, H * W)).collect()
}

/// Pairs whose edge responses all stay at least `margin` away from zero.
pub fn kink_free_pairs(seed: u64, n: usize, margin: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let (y, p) = loss_pair(&mut r, H * W);
        if min_response(&y, &p) > margin {
            out.push((y, p));
        }
    }
    out
}

pub fn run_suite(seed: u64, n: usize) -> Vec<GradStat> {
    let ps = pairs(seed, n);
    let lw = LossWeights::default();
    let blf = move |y: &[f64], p: &[f64]| {
        l_depth(y, p)
            + lw.lambda1 * l_grad(y, p, H, W, false)
            + lw.lambda2 * l_norm(y, p, H, W)
            + lw.lambda3 * l_ssim(y, p, H, W, RANGE)
    };
    let term = |t: loss::Term| (t.value, t.grad);
    vec![
        stat("l_depth", &ps, |y, p| term(loss::depth_term(y, p, DIMS).unwrap()), l_depth),
        stat(
            "l_grad",
            &ps,
            |y, p| term(loss::grad_term(y, p, DIMS, GradMode::Literal).unwrap()),
            |y, p| l_grad(y, p, H, W, false),
        ),
        stat("l_norm", &ps, |y, p| term(loss::norm_term(y, p, DIMS).unwrap()), |y, p| l_norm(y, p, H, W)),
        stat("l_ssim", &ps, |y, p| term(loss::ssim_term(y, p, DIMS, RANGE).unwrap()), |y, p| l_ssim(y, p, H, W, RANGE)),
        stat(
            "balanced",
            &ps,
            |y, p| {
                let (r, g) = loss::balanced_loss_f64(y, p, DIMS, &lw, RANGE, GradMode::Literal).unwrap();
                (r.total, g)
            },
            blf,
        ),
        stat(
            "l_grad_absolute",
            &kink_free_pairs(seed ^ 0xab5, n, 1e-3),
            |y, p| term(loss::grad_term(y, p, DIMS, GradMode::Absolute).unwrap()),
            |y, p| l_grad(y, p, H, W, true),
        ),
    ]
}
