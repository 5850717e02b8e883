//! Parameter, MAC and latency profiling.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::KvReport;
use crate::model::{InputSize, LayerRecord, MeterModel, Variant};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub iterations: usize,
    pub warmup: usize,
}

impl Latency {
    pub fn fps(&self) -> f64 {
        1000.0 / self.mean_ms
    }

    pub fn from_samples(samples_ms: &[f64], warmup: usize) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::Validation("latency needs at least one sample".into()));
        }
        let n = samples_ms.len() as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let var = samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Ok(Latency {
            mean_ms: mean,
            std_ms: var.sqrt(),
            min_ms: samples_ms.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            iterations: samples_ms.len(),
            warmup,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub variant: Variant,
    pub input_size: Option<InputSize>,
    pub params_total: u64,
    pub macs_total: Option<u64>,
    pub per_layer: Vec<LayerRecord>,
    pub fps: Option<f64>,
    pub latency: Option<Latency>,
    /// All stored tensors, running statistics included, as `f32`.
    pub weight_bytes: u64,
    /// Sum of every layer output at batch 1, as `f32`.
    pub activation_bytes: Option<u64>,
}

impl ProfileReport {
    fn empty(model: &MeterModel) -> Self {
        ProfileReport {
            variant: model.variant(),
            input_size: None,
            params_total: model.param_count(),
            macs_total: None,
            per_layer: Vec::new(),
            fps: None,
            latency: None,
            weight_bytes: model.named_weights().iter().map(|(_, t)| t.numel() as u64 * 4).sum(),
            activation_bytes: None,
        }
    }

    pub fn with_latency(mut self, latency: Latency) -> Self {
        self.fps = Some(latency.fps());
        self.latency = Some(latency);
        self
    }

    pub fn to_kv(&self) -> KvReport {
        let mut r = KvReport::new();
        r.push("variant", self.variant);
        if let Some(s) = self.input_size {
            r.push("input_size", s);
        }
        let width = self.per_layer.iter().map(|l| l.name.len()).max().unwrap_or(0);
        for l in &self.per_layer {
            let d = l.output;
            r.push(
                format!("layer.{}", l.name),
                format!(
                    "{:pad$}kind={:<10} params={:>9} macs={:>12} out={}x{}x{}x{}",
                    "",
                    l.kind,
                    l.params,
                    l.macs,
                    d[0],
                    d[1],
                    d[2],
                    d[3],
                    pad = width - l.name.len()
                ),
            );
        }
        r.push("params_total", self.params_total);
        r.push("params_m", format!("{:.3}", self.params_total as f64 / 1e6));
        if let Some(m) = self.macs_total {
            r.push("macs_total", m);
            r.push("macs_g", format!("{:.3}", m as f64 / 1e9));
        }
        r.push("weight_bytes", self.weight_bytes);
        if let Some(a) = self.activation_bytes {
            r.push("activation_bytes", a);
        }
        if let Some(l) = &self.latency {
            r.push("latency_mean_ms", format!("{:.3}", l.mean_ms));
            r.push("latency_std_ms", format!("{:.3}", l.std_ms));
            r.push("latency_min_ms", format!("{:.3}", l.min_ms));
            r.push("latency_max_ms", format!("{:.3}", l.max_ms));
            r.push("iterations", l.iterations);
            r.push("warmup", l.warmup);
        }
        if let Some(fps) = self.fps {
            r.push("fps", format!("{fps:.3}"));
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn count_params(model: &MeterModel) -> ProfileReport {
    ProfileReport::empty(model)
}

/// Per-layer closed-form costs for a batch-1 input of `size`.
pub fn count_macs(model: &MeterModel, size: InputSize) -> Result<ProfileReport> {
    let per_layer = model.layer_records(size)?;
    let activation = per_layer.iter().map(|l| l.output.iter().product::<usize>() as u64 * 4).sum();
    Ok(ProfileReport {
        input_size: Some(size),
        macs_total: Some(per_layer.iter().map(|l| l.macs).sum()),
        activation_bytes: Some(activation),
        per_layer,
        ..ProfileReport::empty(model)
    })
}

/// Seeded uniform image in [0, 1].
pub fn random_image(size: InputSize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * size.pixels()).map(|_| rng.gen::<f32>()).collect();
    Tensor::new(Shape::new(1, 3, size.height, size.width), data).expect("sized")
}

/// Wall-clock latency of single-image forwards after `warmup` discarded runs.
pub fn bench_latency(model: &MeterModel, size: InputSize, iterations: usize, warmup: usize) -> Result<Latency> {
    if iterations == 0 {
        return Err(Error::Validation("benchmark needs at least one iteration".into()));
    }
    let image = random_image(size, 0);
    for _ in 0..warmup {
        model.forward(&image)?;
    }
    let mut samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        let out = model.forward(&image)?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    Latency::from_samples(&samples, warmup)
}
