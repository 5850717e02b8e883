//! RMSE, REL and δ1 with masks, and per-image averaged dataset evaluation.

use serde::{Deserialize, Serialize};

use crate::augment::DepthSample;
use crate::error::{Error, Result};
use crate::model::MeterModel;
use crate::tensor::{nearest_index, resize_nearest, Shape, Tensor};

pub const DELTA1_THRESHOLD: f64 = 1.25;

fn masked<'a>(
    op: &'static str,
    y: &'a [f32],
    yhat: &'a [f32],
    mask: &'a [bool],
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if y.len() != yhat.len() || y.len() != mask.len() {
        return Err(Error::dim(
            op,
            format!("{} ground-truth, {} predicted and {} mask entries", y.len(), yhat.len(), mask.len()),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Validation(format!("{op}: mask selects no pixels")));
    }
    Ok(y.iter().zip(yhat).zip(mask).filter(|(_, &m)| m).map(|((&a, &b), _)| (a as f64, b as f64)))
}

pub fn rmse(y: &[f32], yhat: &[f32], mask: &[bool]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in masked("rmse", y, yhat, mask)? {
        sum += (a - b) * (a - b);
        n += 1;
    }
    Ok((sum / n as f64).sqrt())
}

pub fn rel(y: &[f32], yhat: &[f32], mask: &[bool]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in masked("rel", y, yhat, mask)? {
        if !(a > 0.0) {
            return Err(Error::Validation(format!("rel: ground truth {a} inside the mask is not positive")));
        }
        sum += (a - b).abs() / a;
        n += 1;
    }
    Ok(sum / n as f64)
}

/// Fraction of masked pixels with `max(y/ŷ, ŷ/y) < thr` (strict).
pub fn delta1(y: &[f32], yhat: &[f32], mask: &[bool], thr: f64) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for (a, b) in masked("delta1", y, yhat, mask)? {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Validation(format!("delta1: non-positive depth ({a}, {b}) inside the mask")));
        }
        if (a / b).max(b / a) < thr {
            hit += 1;
        }
        n += 1;
    }
    Ok(hit as f64 / n as f64)
}

/// Evaluation rectangle in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCrop {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
}

impl EvalCrop {
    pub fn new(top: f64, bottom: f64, left: f64, right: f64) -> Result<Self> {
        let c = EvalCrop { top, bottom, left, right };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64, b: f64| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if !(ok(self.top, self.bottom) && ok(self.left, self.right)) {
            return Err(Error::Validation(format!("crop {self:?} is not a rectangle inside [0, 1]")));
        }
        Ok(())
    }

    /// Pixel-center test for a `height x width` map.
    pub fn contains(&self, y: usize, x: usize, height: usize, width: usize) -> bool {
        let fy = (y as f64 + 0.5) / height as f64;
        let fx = (x as f64 + 0.5) / width as f64;
        fy >= self.top && fy < self.bottom && fx >= self.left && fx < self.right
    }
}

impl std::str::FromStr for EvalCrop {
    type Err = Error;

    /// `top,bottom,left,right`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Validation(format!("crop `{s}` is not four numbers")))?;
        match v.as_slice() {
            [t, b, l, r] => EvalCrop::new(*t, *b, *l, *r),
            _ => Err(Error::Validation(format!("crop `{s}` needs top,bottom,left,right"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub rmse_m: f64,
    pub rel: f64,
    pub delta1: f64,
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_m: f64,
    pub rel: f64,
    pub delta1: f64,
    pub pixels_evaluated: u64,
    pub images_evaluated: usize,
    pub crop: Option<EvalCrop>,
    pub per_image: Vec<ImageMetrics>,
    pub failures: Vec<SampleFailure>,
}

/// Anything that maps a sample to a (1, 1, h, w) metric depth prediction.
pub trait DepthPredictor {
    fn predict(&self, sample: &DepthSample) -> Result<Tensor>;
}

impl DepthPredictor for MeterModel {
    fn predict(&self, sample: &DepthSample) -> Result<Tensor> {
        Ok(self.forward(&sample.rgb)?.values)
    }
}

/// Predicts one depth everywhere at half the rgb resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDepth(pub f32);

impl DepthPredictor for ConstantDepth {
    fn predict(&self, sample: &DepthSample) -> Result<Tensor> {
        let s = sample.rgb.shape();
        Ok(Tensor::full(Shape::new(1, 1, (s.height / 2).max(1), (s.width / 2).max(1)), self.0))
    }
}

/// Returns the sample's own ground truth, downsampled like a model output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundTruthOracle;

impl DepthPredictor for GroundTruthOracle {
    fn predict(&self, sample: &DepthSample) -> Result<Tensor> {
        let s = sample.depth.shape();
        Ok(resize_nearest(&sample.depth, (s.height / 2).max(1), (s.width / 2).max(1)))
    }
}

/// Metrics of one prediction; ground truth is nearest-downsampled to the
/// prediction extent and zero depths are masked out.
pub fn evaluate_prediction(pred: &Tensor, gt: &Tensor, crop: Option<EvalCrop>) -> Result<ImageMetrics> {
    let ps = pred.shape();
    let gs = gt.shape();
    if ps.batch != 1 || ps.channels != 1 || gs.batch != 1 || gs.channels != 1 {
        return Err(Error::dim("evaluate", format!("prediction {ps} / ground truth {gs} must be single maps")));
    }
    let (h, w) = (ps.height, ps.width);
    let gt_small: Vec<f32> = (0..h * w)
        .map(|i| gt.at(0, 0, nearest_index(i / w, h, gs.height), nearest_index(i % w, w, gs.width)))
        .collect();
    let mask: Vec<bool> =
        (0..h * w).map(|i| gt_small[i] > 0.0 && crop.is_none_or(|c| c.contains(i / w, i % w, h, w))).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::Validation("no valid ground-truth pixels".into()));
    }
    Ok(ImageMetrics {
        rmse_m: rmse(&gt_small, pred.data(), &mask)?,
        rel: rel(&gt_small, pred.data(), &mask)?,
        delta1: delta1(&gt_small, pred.data(), &mask, DELTA1_THRESHOLD)?,
        pixels: mask.iter().filter(|&&m| m).count() as u64,
    })
}

/// Mean of per-image metrics over `samples`, in order. Failing samples are
/// recorded and skipped; if none succeed the whole evaluation fails.
pub fn evaluate_samples<I>(predictor: &dyn DepthPredictor, samples: I, crop: Option<EvalCrop>) -> Result<MetricsReport>
where
    I: IntoIterator<Item = (String, Result<DepthSample>)>,
{
    if let Some(c) = &crop {
        c.validate()?;
    }
    let mut per_image = Vec::new();
    let mut failures = Vec::new();
    for (index, (label, sample)) in samples.into_iter().enumerate() {
        let outcome = sample.and_then(|s| {
            let pred = predictor.predict(&s)?;
            evaluate_prediction(&pred, &s.depth, crop)
        });
        match outcome {
            Ok(m) => per_image.push(m),
            Err(e) => failures.push(SampleFailure { index, label, reason: e.to_string() }),
        }
    }
    if per_image.is_empty() {
        let why = match failures.first() {
            Some(f) => format!("{} sample(s) failed, first: {}: {}", failures.len(), f.label, f.reason),
            None => "dataset has no entries".to_string(),
        };
        return Err(Error::EmptyDataset(why));
    }
    let n = per_image.len() as f64;
    let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        rmse_m: mean(|m| m.rmse_m),
        rel: mean(|m| m.rel),
        delta1: mean(|m| m.delta1),
        pixels_evaluated: per_image.iter().map(|m| m.pixels).sum(),
        images_evaluated: per_image.len(),
        crop,
        per_image,
        failures,
    })
}

pub fn evaluate_dataset(
    predictor: &dyn DepthPredictor,
    dataset: &crate::io::Dataset,
    crop: Option<EvalCrop>,
) -> Result<MetricsReport> {
    let crop = crop.or(dataset.manifest().eval_crop);
    evaluate_samples(predictor, dataset.iter_labeled(), crop)
}
