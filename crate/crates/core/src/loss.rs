//! Balanced depth loss: L1 depth, Sobel edge, surface-normal and SSIM terms.
//!
//! Every term returns its value and its gradient with respect to the
//! prediction. Internally all arithmetic is `f64`; the `*_f64` entry points
//! take raw planes so gradient checks never round through `f32`.

use serde::{Deserialize, Serialize};

use crate::augment::DepthUnit;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 7;

const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Horizontal and vertical derivative stencils used by the edge and normal
/// terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sobel {
    pub kx: [[f64; 3]; 3],
    pub ky: [[f64; 3]; 3],
}

impl Sobel {
    pub const STANDARD: Sobel = Sobel { kx: KX, ky: KY };
}

impl Default for Sobel {
    fn default() -> Self {
        Sobel::STANDARD
    }
}

/// Scale of the depth values fed to the loss; picks the edge/SSIM weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthScale {
    Meters,
    Decimeters,
    Centimeters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2), ("lambda3", lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} = {v} must be a non-negative number")));
            }
        }
        Ok(LossWeights { lambda1, lambda2, lambda3 })
    }

    pub fn for_scale(scale: DepthScale) -> Self {
        let l = match scale {
            DepthScale::Meters => 1.0,
            DepthScale::Decimeters => 10.0,
            DepthScale::Centimeters => 100.0,
        };
        LossWeights { lambda1: 0.5, lambda2: l, lambda3: l }
    }

    pub fn for_unit(unit: DepthUnit) -> Self {
        match unit {
            DepthUnit::IndoorCm => LossWeights::for_scale(DepthScale::Centimeters),
            DepthUnit::OutdoorDm => LossWeights::for_scale(DepthScale::Decimeters),
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::for_scale(DepthScale::Meters)
    }
}

/// How the edge term reduces Sobel responses of the error map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GradMode {
    /// Plain mean of the signed responses.
    #[default]
    Literal,
    /// Mean of absolute responses.
    Absolute,
}

/// Layout of a stack of 2-D maps stored contiguously.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapDims {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
}

impl MapDims {
    pub fn of(t: &Tensor) -> Self {
        let s = t.shape();
        MapDims { planes: s.batch * s.channels, height: s.height, width: s.width }
    }

    pub fn len(&self) -> usize {
        self.planes * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Value of one term and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub l_depth: f64,
    pub l_grad: f64,
    pub l_norm: f64,
    pub l_ssim: f64,
    /// d total / d prediction, shaped like the prediction.
    pub gradient: Option<Tensor>,
}

fn check(y: &[f64], yhat: &[f64], dims: MapDims) -> Result<()> {
    if y.len() != dims.len() || yhat.len() != dims.len() {
        return Err(Error::dim(
            "loss",
            format!("maps of {} and {} values for {} expected", y.len(), yhat.len(), dims.len()),
        ));
    }
    if dims.is_empty() {
        return Err(Error::Validation("loss needs a non-empty map".into()));
    }
    Ok(())
}

fn check_sobel(dims: MapDims) -> Result<()> {
    if dims.height < 3 || dims.width < 3 {
        return Err(Error::dim("sobel", format!("map {}x{} is smaller than the 3x3 stencil", dims.height, dims.width)));
    }
    Ok(())
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// 3x3 cross-correlation of one plane with replicate padding.
fn stencil(z: &[f64], h: usize, w: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (a, row) in k.iter().enumerate() {
                let y = (i + a).saturating_sub(1).min(h - 1);
                for (b, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        let x = (j + b).saturating_sub(1).min(w - 1);
                        acc += kv * z[y * w + x];
                    }
                }
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Adjoint of [`stencil`]: scatters `g` back onto the input plane.
fn stencil_adjoint(g: &[f64], h: usize, w: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let gv = g[i * w + j];
            if gv == 0.0 {
                continue;
            }
            for (a, row) in k.iter().enumerate() {
                let y = (i + a).saturating_sub(1).min(h - 1);
                for (b, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        let x = (j + b).saturating_sub(1).min(w - 1);
                        out[y * w + x] += kv * gv;
                    }
                }
            }
        }
    }
    out
}

/// Sobel derivatives of every plane.
pub fn sobel_f64(z: &[f64], dims: MapDims) -> Result<(Vec<f64>, Vec<f64>)> {
    sobel_f64_with(z, dims, &Sobel::STANDARD)
}

pub fn sobel_f64_with(z: &[f64], dims: MapDims, k: &Sobel) -> Result<(Vec<f64>, Vec<f64>)> {
    check_sobel(dims)?;
    if z.len() != dims.len() {
        return Err(Error::dim("sobel", format!("{} values for {} expected", z.len(), dims.len())));
    }
    let (h, w, p) = (dims.height, dims.width, dims.plane());
    let mut gx = Vec::with_capacity(z.len());
    let mut gy = Vec::with_capacity(z.len());
    for plane in z.chunks(p) {
        gx.extend(stencil(plane, h, w, &k.kx));
        gy.extend(stencil(plane, h, w, &k.ky));
    }
    Ok((gx, gy))
}

pub fn sobel_gradients(z: &Tensor) -> Result<(Tensor, Tensor)> {
    let (gx, gy) = sobel_f64(&to_f64(z), MapDims::of(z))?;
    let back = |v: Vec<f64>| Tensor::new(z.shape(), v.into_iter().map(|x| x as f32).collect());
    Ok((back(gx)?, back(gy)?))
}

fn sobel_adjoint(gx: &[f64], gy: &[f64], dims: MapDims, k: &Sobel) -> Vec<f64> {
    let (h, w, p) = (dims.height, dims.width, dims.plane());
    let mut out = Vec::with_capacity(dims.len());
    for (px, py) in gx.chunks(p).zip(gy.chunks(p)) {
        let ax = stencil_adjoint(px, h, w, &k.kx);
        let ay = stencil_adjoint(py, h, w, &k.ky);
        out.extend(ax.iter().zip(&ay).map(|(a, b)| a + b));
    }
    out
}

/// Mean absolute error.
pub fn depth_term(y: &[f64], yhat: &[f64], dims: MapDims) -> Result<Term> {
    check(y, yhat, dims)?;
    let n = dims.len() as f64;
    let value = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let grad = y.iter().zip(yhat).map(|(a, b)| -sign(a - b) / n).collect();
    Ok(Term { value, grad })
}

/// Mean Sobel response of the absolute error map.
pub fn grad_term(y: &[f64], yhat: &[f64], dims: MapDims, mode: GradMode) -> Result<Term> {
    grad_term_with(y, yhat, dims, mode, &Sobel::STANDARD)
}

pub fn grad_term_with(y: &[f64], yhat: &[f64], dims: MapDims, mode: GradMode, k: &Sobel) -> Result<Term> {
    check(y, yhat, dims)?;
    check_sobel(dims)?;
    let n = dims.len() as f64;
    let err: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).collect();
    let (gx, gy) = sobel_f64_with(&err, dims, k)?;
    let (value, ux, uy) = match mode {
        GradMode::Literal => {
            (gx.iter().zip(&gy).map(|(a, b)| a + b).sum::<f64>() / n, vec![1.0 / n; gx.len()], vec![1.0 / n; gy.len()])
        }
        GradMode::Absolute => (
            gx.iter().zip(&gy).map(|(a, b)| a.abs() + b.abs()).sum::<f64>() / n,
            gx.iter().map(|&v| sign(v) / n).collect(),
            gy.iter().map(|&v| sign(v) / n).collect(),
        ),
    };
    let d_err = sobel_adjoint(&ux, &uy, dims, k);
    let grad = d_err.iter().zip(y.iter().zip(yhat)).map(|(g, (a, b))| -g * sign(a - b)).collect();
    Ok(Term { value, grad })
}

/// Mean of `1 - cos` between surface normals `(-gx, -gy, 1)`.
pub fn norm_term(y: &[f64], yhat: &[f64], dims: MapDims) -> Result<Term> {
    norm_term_with(y, yhat, dims, &Sobel::STANDARD)
}

pub fn norm_term_with(y: &[f64], yhat: &[f64], dims: MapDims, k: &Sobel) -> Result<Term> {
    check(y, yhat, dims)?;
    check_sobel(dims)?;
    let n = dims.len() as f64;
    let (yx, yy) = sobel_f64_with(y, dims, k)?;
    let (px, py) = sobel_f64_with(yhat, dims, k)?;
    let mut value = 0.0;
    let mut da = vec![0.0; dims.len()];
    let mut db = vec![0.0; dims.len()];
    for i in 0..dims.len() {
        let u = [-px[i], -py[i], 1.0];
        let v = [-yx[i], -yy[i], 1.0];
        let uu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let uv = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let (nu, nv) = (uu.sqrt(), vv.sqrt());
        let cos = uv / (nu * nv);
        value += 1.0 - cos;
        // d cos / d u_c, then d u_c / d gx = -1 and the leading minus of the term cancel.
        let dcos = |c: usize| v[c] / (nu * nv) - uv * u[c] / (uu * nu * nv);
        da[i] = dcos(0) / n;
        db[i] = dcos(1) / n;
    }
    let grad = sobel_adjoint(&da, &db, dims, k);
    Ok(Term { value: value / n, grad })
}

/// `1 - mean SSIM` over every valid 7x7 window, population statistics.
pub fn ssim_term(y: &[f64], yhat: &[f64], dims: MapDims, dynamic_range: f64) -> Result<Term> {
    check(y, yhat, dims)?;
    let k = SSIM_WINDOW;
    if dims.height < k || dims.width < k {
        return Err(Error::Validation(format!(
            "SSIM window {k}x{k} is larger than the {}x{} map",
            dims.height, dims.width
        )));
    }
    if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
        return Err(Error::Validation(format!("SSIM dynamic range {dynamic_range} must be positive")));
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let (h, w, p) = (dims.height, dims.width, dims.plane());
    let (wh, ww) = (h - k + 1, w - k + 1);
    let windows = (dims.planes * wh * ww) as f64;
    let nw = (k * k) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; dims.len()];
    for plane in 0..dims.planes {
        let yo = &y[plane * p..(plane + 1) * p];
        let xo = &yhat[plane * p..(plane + 1) * p];
        let go = &mut grad[plane * p..(plane + 1) * p];
        for i in 0..wh {
            for j in 0..ww {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for a in 0..k {
                    for b in 0..k {
                        let o = (i + a) * w + j + b;
                        let (xv, yv) = (xo[o], yo[o]);
                        sx += xv;
                        sy += yv;
                        sxx += xv * xv;
                        syy += yv * yv;
                        sxy += xv * yv;
                    }
                }
                let (mx, my) = (sx / nw, sy / nw);
                let vx = sxx / nw - mx * mx;
                let vy = syy / nw - my * my;
                let cxy = sxy / nw - mx * my;
                let a1 = 2.0 * mx * my + c1;
                let a2 = 2.0 * cxy + c2;
                let b1 = mx * mx + my * my + c1;
                let b2 = vx + vy + c2;
                let den = b1 * b2;
                let s = a1 * a2 / den;
                total += s;
                // dS/dx_k = (alpha + gamma*y_k - beta*x_k) with the constants below.
                let scale = -1.0 / windows;
                let alpha = (2.0 * my / nw * a2 - a1 * 2.0 * my / nw) / den
                    - s * (2.0 * mx / nw * b2 - b1 * 2.0 * mx / nw) / den;
                let gamma = a1 * 2.0 / nw / den;
                let beta = s * b1 * 2.0 / nw / den;
                for a in 0..k {
                    for b in 0..k {
                        let o = (i + a) * w + j + b;
                        go[o] += scale * (alpha + gamma * yo[o] - beta * xo[o]);
                    }
                }
            }
        }
    }
    Ok(Term { value: 1.0 - total / windows, grad })
}

/// Full balanced loss on `f64` planes. The report carries no tensor gradient;
/// the gradient is returned separately at full precision.
pub fn balanced_loss_f64(
    y: &[f64],
    yhat: &[f64],
    dims: MapDims,
    weights: &LossWeights,
    dynamic_range: f64,
    mode: GradMode,
) -> Result<(LossReport, Vec<f64>)> {
    balanced_loss_f64_with(y, yhat, dims, weights, dynamic_range, mode, &Sobel::STANDARD)
}

pub fn balanced_loss_f64_with(
    y: &[f64],
    yhat: &[f64],
    dims: MapDims,
    weights: &LossWeights,
    dynamic_range: f64,
    mode: GradMode,
    k: &Sobel,
) -> Result<(LossReport, Vec<f64>)> {
    let d = depth_term(y, yhat, dims)?;
    let g = grad_term_with(y, yhat, dims, mode, k)?;
    let n = norm_term_with(y, yhat, dims, k)?;
    let s = ssim_term(y, yhat, dims, dynamic_range)?;
    let total = d.value + weights.lambda1 * g.value + weights.lambda2 * n.value + weights.lambda3 * s.value;
    let grad = (0..dims.len())
        .map(|i| d.grad[i] + weights.lambda1 * g.grad[i] + weights.lambda2 * n.grad[i] + weights.lambda3 * s.grad[i])
        .collect();
    Ok((
        LossReport { total, l_depth: d.value, l_grad: g.value, l_norm: n.value, l_ssim: s.value, gradient: None },
        grad,
    ))
}

fn pair(y: &Tensor, yhat: &Tensor) -> Result<(Vec<f64>, Vec<f64>, MapDims)> {
    if y.shape() != yhat.shape() {
        return Err(Error::dim("loss", format!("ground truth {} vs prediction {}", y.shape(), yhat.shape())));
    }
    Ok((to_f64(y), to_f64(yhat), MapDims::of(y)))
}

fn grad_tensor(like: &Tensor, g: &[f64]) -> Result<Tensor> {
    Tensor::new(like.shape(), g.iter().map(|&v| v as f32).collect())
}

pub fn l_depth(y: &Tensor, yhat: &Tensor) -> Result<Term> {
    let (a, b, d) = pair(y, yhat)?;
    depth_term(&a, &b, d)
}

pub fn l_grad(y: &Tensor, yhat: &Tensor, mode: GradMode) -> Result<Term> {
    let (a, b, d) = pair(y, yhat)?;
    grad_term(&a, &b, d, mode)
}

pub fn l_norm(y: &Tensor, yhat: &Tensor) -> Result<Term> {
    let (a, b, d) = pair(y, yhat)?;
    norm_term(&a, &b, d)
}

pub fn l_ssim(y: &Tensor, yhat: &Tensor, dynamic_range: f64) -> Result<Term> {
    let (a, b, d) = pair(y, yhat)?;
    ssim_term(&a, &b, d, dynamic_range)
}

/// Balanced loss with the literal edge term; gradient included.
pub fn balanced_loss(y: &Tensor, yhat: &Tensor, weights: &LossWeights, dynamic_range: f64) -> Result<LossReport> {
    balanced_loss_with(y, yhat, weights, dynamic_range, GradMode::Literal)
}

pub fn balanced_loss_with(
    y: &Tensor,
    yhat: &Tensor,
    weights: &LossWeights,
    dynamic_range: f64,
    mode: GradMode,
) -> Result<LossReport> {
    let (a, b, d) = pair(y, yhat)?;
    let (mut report, grad) = balanced_loss_f64(&a, &b, d, weights, dynamic_range, mode)?;
    report.gradient = Some(grad_tensor(yhat, &grad)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(h: usize, w: usize) -> MapDims {
        MapDims { planes: 1, height: h, width: w }
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.5..5.0)).collect()
    }

    #[test]
    fn constant_offset_l1() {
        let t = depth_term(&[2.0; 16], &[3.0; 16], dims(4, 4)).unwrap();
        assert_eq!(t.value, 1.0);
    }

    #[test]
    fn ramp_sobel_interior() {
        let z: Vec<f64> = (0..25).map(|i| (i % 5) as f64 * 0.5).collect();
        let (gx, gy) = sobel_f64(&z, dims(5, 5)).unwrap();
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(gx[i * 5 + j], 8.0 * 0.5);
                assert_eq!(gy[i * 5 + j], 0.0);
            }
        }
        let zt: Vec<f64> = (0..25).map(|i| (i / 5) as f64 * 0.5).collect();
        let (gx, gy) = sobel_f64(&zt, dims(5, 5)).unwrap();
        assert_eq!(gy[12], 4.0);
        assert_eq!(gx[12], 0.0);
    }

    #[test]
    fn sobel_rejects_tiny_map() {
        assert!(sobel_f64(&[0.0; 4], dims(2, 2)).is_err());
    }

    #[test]
    fn stencil_adjoint_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w) = (5, 6);
        let u = random(&mut rng, h * w);
        let v = random(&mut rng, h * w);
        for k in [&KX, &KY] {
            let lhs: f64 = stencil(&u, h, w, k).iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(stencil_adjoint(&v, h, w, k)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn reflected_map_pushes_ssim_loss_above_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random(&mut rng, 64);
        let yhat: Vec<f64> = y.iter().map(|v| 5.5 - v).collect();
        let t = ssim_term(&y, &yhat, dims(8, 8), 10.0).unwrap();
        assert!(t.value > 1.0, "{}", t.value);
    }

    #[test]
    fn ssim_window_too_large() {
        assert!(matches!(ssim_term(&[1.0; 36], &[1.0; 36], dims(6, 6), 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn unit_weights() {
        assert_eq!(LossWeights::for_unit(DepthUnit::IndoorCm).lambda2, 100.0);
        assert_eq!(LossWeights::for_unit(DepthUnit::OutdoorDm).lambda3, 10.0);
        assert_eq!(LossWeights::default().lambda1, 0.5);
        assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn tensor_api_reports_gradient() {
        let y = Tensor::full(Shape::new(1, 1, 8, 8), 2.0);
        let p = Tensor::full(Shape::new(1, 1, 8, 8), 2.5);
        let r = balanced_loss(&y, &p, &LossWeights::default(), 10.0).unwrap();
        assert!((r.l_depth - 0.5).abs() < 1e-12);
        assert_eq!(r.gradient.unwrap().shape(), p.shape());
    }
}
