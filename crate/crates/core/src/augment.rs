//! Training-time augmentation: geometric default policy plus the paired
//! photometric (C) and depth (D) shifts.
//!
//! Every transform owns one ChaCha8 stream derived from the sample seed, so
//! the draws of one transform never depend on whether another one fired.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{resize_bilinear, resize_nearest, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthUnit {
    IndoorCm,
    OutdoorDm,
}

impl DepthUnit {
    /// Largest allowed |S| for the depth shift, meters.
    pub fn shift_bound(self) -> f32 {
        match self {
            DepthUnit::IndoorCm => 0.10,
            DepthUnit::OutdoorDm => 1.0,
        }
    }
}

/// RGB image in [0, 1] with its metric depth map; 0 marks missing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSample {
    pub rgb: Tensor,
    pub depth: Tensor,
    pub unit: DepthUnit,
    pub max_depth: f32,
}

impl DepthSample {
    pub fn new(rgb: Tensor, depth: Tensor, unit: DepthUnit, max_depth: f32) -> Result<Self> {
        let (r, d) = (rgb.shape(), depth.shape());
        if r.batch != 1 || r.channels != 3 || d.batch != 1 || d.channels != 1 {
            return Err(Error::dim("DepthSample", format!("rgb {r} / depth {d} must be 1x3xHxW and 1x1xHxW")));
        }
        if !(max_depth > 0.0 && max_depth.is_finite()) {
            return Err(Error::Validation(format!("max depth {max_depth} must be positive")));
        }
        Ok(DepthSample { rgb, depth, unit, max_depth })
    }

    /// Valid-pixel mask of the depth map.
    pub fn valid_mask(&self) -> Vec<bool> {
        self.depth.data().iter().map(|&v| v > 0.0).collect()
    }
}

/// Sampling ranges of the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub apply_prob: f64,
    /// Range shared by brightness, gamma and per-channel color factors.
    pub factor_range: (f32, f32),
    /// Smallest crop side as a fraction of the input.
    pub crop_min: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams { apply_prob: 0.5, factor_range: (0.9, 1.1), crop_min: 0.75 }
    }
}

/// Stream index of each transform.
pub mod stream {
    pub const VFLIP: u64 = 0;
    pub const MIRROR: u64 = 1;
    pub const CROP: u64 = 2;
    pub const CHANNEL_SWAP: u64 = 3;
    pub const C_SHIFT: u64 = 4;
    pub const D_SHIFT: u64 = 5;
}

pub fn transform_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CShift {
    pub beta: f32,
    pub gamma: f32,
    pub eta: [f32; 3],
}

/// Which transforms fired and with which parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentLog {
    pub vflip: bool,
    pub mirror: bool,
    pub crop: Option<CropWindow>,
    pub channel_perm: Option<[usize; 3]>,
    pub c_shift: Option<CShift>,
    pub d_shift: Option<f32>,
}

impl AugmentLog {
    pub fn is_identity(&self) -> bool {
        *self == AugmentLog::default()
    }
}

fn check_factor(name: &str, v: f32) -> Result<()> {
    if !(0.9..=1.1).contains(&v) {
        return Err(Error::Validation(format!("{name} = {v} is outside [0.9, 1.1]")));
    }
    Ok(())
}

/// `clamp(beta * x^gamma * eta_c, 0, 1)` per pixel.
pub fn c_shift(rgb: &Tensor, beta: f32, gamma: f32, eta: [f32; 3]) -> Result<Tensor> {
    check_factor("beta", beta)?;
    check_factor("gamma", gamma)?;
    for (c, &e) in eta.iter().enumerate() {
        check_factor(&format!("eta[{c}]"), e)?;
    }
    let s = rgb.shape();
    if s.channels != 3 {
        return Err(Error::dim("c_shift", format!("expected 3 channels, got {s}")));
    }
    let mut out = rgb.clone();
    for b in 0..s.batch {
        for (c, &e) in eta.iter().enumerate() {
            for v in out.plane_mut(b, c) {
                let x = *v as f64;
                let g = if gamma == 1.0 { x } else { x.max(0.0).powf(gamma as f64) };
                *v = (beta as f64 * g * e as f64).clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}

/// Adds `shift` meters to every valid pixel and clamps to `[0, max_depth]`.
/// Pixels holding the invalid sentinel 0 stay 0.
pub fn d_shift(depth: &Tensor, shift: f32, unit: DepthUnit, max_depth: f32) -> Result<Tensor> {
    let bound = unit.shift_bound();
    if !(shift.abs() <= bound) {
        return Err(Error::Validation(format!("depth shift {shift} m exceeds ±{bound} m")));
    }
    Ok(depth.map(|v| if v == 0.0 { 0.0 } else { (v + shift).clamp(0.0, max_depth) }))
}

pub fn vflip(t: &Tensor) -> Tensor {
    let h = t.shape().height;
    Tensor::from_fn(t.shape(), |b, c, y, x| t.at(b, c, h - 1 - y, x))
}

pub fn mirror(t: &Tensor) -> Tensor {
    let w = t.shape().width;
    Tensor::from_fn(t.shape(), |b, c, y, x| t.at(b, c, y, w - 1 - x))
}

/// Output channel `c` takes input channel `perm[c]`.
pub fn permute_channels(rgb: &Tensor, perm: [usize; 3]) -> Result<Tensor> {
    let mut seen = [false; 3];
    for &p in &perm {
        if p >= 3 || seen[p] {
            return Err(Error::Validation(format!("{perm:?} is not a permutation of 0..3")));
        }
        seen[p] = true;
    }
    Ok(Tensor::from_fn(rgb.shape(), |b, c, y, x| rgb.at(b, perm[c], y, x)))
}

/// Crops both maps and resizes back: bilinear for rgb, nearest for depth.
pub fn crop_resize(sample: &DepthSample, win: CropWindow) -> Result<DepthSample> {
    let s = sample.rgb.shape();
    let rgb = sample.rgb.crop_window(win.top, win.left, win.height, win.width)?;
    let depth = sample.depth.crop_window(win.top, win.left, win.height, win.width)?;
    Ok(DepthSample {
        rgb: resize_bilinear(&rgb, s.height, s.width),
        depth: resize_nearest(&depth, s.height, s.width),
        ..sample.clone()
    })
}

fn fires(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

fn draw_crop(rng: &mut ChaCha8Rng, shape: Shape, crop_min: f64) -> CropWindow {
    let scale = rng.gen_range(crop_min..=1.0);
    let height = ((shape.height as f64 * scale).round() as usize).clamp(1, shape.height);
    let width = ((shape.width as f64 * scale).round() as usize).clamp(1, shape.width);
    let top = rng.gen_range(0..=shape.height - height);
    let left = rng.gen_range(0..=shape.width - width);
    CropWindow { top, left, height, width }
}

fn draw_perm(rng: &mut ChaCha8Rng) -> [usize; 3] {
    let mut perms: Vec<[usize; 3]> = vec![[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms.shuffle(rng);
    perms[0]
}

/// Vertical flip, mirror, crop-and-resize and channel swap, each with
/// probability `apply_prob`.
pub fn default_policy(sample: &DepthSample, seed: u64) -> Result<(DepthSample, AugmentLog)> {
    default_policy_with(sample, seed, &AugmentParams::default())
}

pub fn default_policy_with(
    sample: &DepthSample,
    seed: u64,
    params: &AugmentParams,
) -> Result<(DepthSample, AugmentLog)> {
    let mut out = sample.clone();
    let mut log = AugmentLog::default();
    let p = params.apply_prob;

    if fires(&mut transform_rng(seed, stream::VFLIP), p) {
        out.rgb = vflip(&out.rgb);
        out.depth = vflip(&out.depth);
        log.vflip = true;
    }
    if fires(&mut transform_rng(seed, stream::MIRROR), p) {
        out.rgb = mirror(&out.rgb);
        out.depth = mirror(&out.depth);
        log.mirror = true;
    }
    let mut rng = transform_rng(seed, stream::CROP);
    if fires(&mut rng, p) {
        let win = draw_crop(&mut rng, out.rgb.shape(), params.crop_min);
        out = crop_resize(&out, win)?;
        log.crop = Some(win);
    }
    let mut rng = transform_rng(seed, stream::CHANNEL_SWAP);
    if fires(&mut rng, p) {
        let perm = draw_perm(&mut rng);
        out.rgb = permute_channels(&out.rgb, perm)?;
        log.channel_perm = Some(perm);
    }
    Ok((out, log))
}

/// Default policy followed by the C and D shifts, each with probability `apply_prob`.
pub fn shifting_policy(sample: &DepthSample, seed: u64) -> Result<(DepthSample, AugmentLog)> {
    shifting_policy_with(sample, seed, &AugmentParams::default())
}

pub fn shifting_policy_with(
    sample: &DepthSample,
    seed: u64,
    params: &AugmentParams,
) -> Result<(DepthSample, AugmentLog)> {
    let (mut out, mut log) = default_policy_with(sample, seed, params)?;
    let (lo, hi) = params.factor_range;
    let p = params.apply_prob;

    let mut rng = transform_rng(seed, stream::C_SHIFT);
    if fires(&mut rng, p) {
        let beta = rng.gen_range(lo..=hi);
        let gamma = rng.gen_range(lo..=hi);
        let eta = [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)];
        out.rgb = c_shift(&out.rgb, beta, gamma, eta)?;
        log.c_shift = Some(CShift { beta, gamma, eta });
    }
    let mut rng = transform_rng(seed, stream::D_SHIFT);
    if fires(&mut rng, p) {
        let bound = out.unit.shift_bound();
        let shift = rng.gen_range(-bound..=bound);
        out.depth = d_shift(&out.depth, shift, out.unit, out.max_depth)?;
        log.d_shift = Some(shift);
    }
    Ok((out, log))
}
