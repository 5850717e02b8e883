//! METER encoder-decoder: configuration, weights and forward inference.

mod config;
mod graph;
pub mod layers;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{check_input_size, stage_extents, Activation, InputSize, ModelConfig, Variant};
pub use graph::{conv_record, LayerRecord, TraceEvent};
pub use layers::ParamKind;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use graph::{Compute, Count};
use layers::{Conv, Decoder, Encoder, MeterBlock, Mv2, UpBlock};

/// Predicted depth in meters, shaped (batch, 1, H/2, W/2).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Tensor,
    pub valid_mask: Option<Vec<bool>>,
}

/// Everything observed during an instrumented forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub output: DepthMap,
    pub events: Vec<TraceEvent>,
    /// Weight names in the order they were consumed.
    pub weights_used: Vec<String>,
    /// Attention probabilities per transformer, (sequence, head, query, key).
    pub attention: Vec<(String, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeterModel {
    config: ModelConfig,
    pub(crate) encoder: Encoder,
    pub(crate) decoder: Decoder,
}

impl MeterModel {
    /// Model with every weight zero and identity normalization statistics.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let act = config.activation;
        let e = config.mv2_expansion;
        let (d, heads, patch) = (config.transformer_dims, config.heads, config.patch);
        let encoder = Encoder {
            stem: Conv::new(3, c[0], 3, 2, 1).act(act),
            mv2: vec![
                Mv2::new(c[0], c[1], 1, e, act),
                Mv2::new(c[1], c[2], 2, e, act),
                Mv2::new(c[2], c[2], 1, e, act),
                Mv2::new(c[2], c[2], 1, e, act),
                Mv2::new(c[2], c[3], 2, e, act),
                Mv2::new(c[3], c[3], 2, e, act),
                Mv2::new(c[3], c[4], 1, e, act),
            ],
            meter: vec![
                MeterBlock::new(c[3], d[0], config.ffn_mult[0], heads, patch, act),
                MeterBlock::new(c[4], d[1], config.ffn_mult[1], heads, patch, act),
            ],
            head: Conv::new(c[4], c[5], 1, 1, 1).act(act),
        };
        let decoder = Decoder {
            entry: Conv::new(c[5], c[6], 1, 1, 1).act(act),
            up: vec![
                UpBlock::new(c[6], c[7], c[3], act),
                UpBlock::new(c[7], c[8], c[2], act),
                UpBlock::new(c[8], c[9], c[1], act),
            ],
            exit: Conv::biased(c[9], 1, 3),
        };
        Ok(MeterModel { config, encoder, decoder })
    }

    /// Seeded fan-in-scaled uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// drawn in canonical weight order from one ChaCha8 stream.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = MeterModel::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.visit_mut(&mut |_, t, kind| {
            if let ParamKind::Weight { fan_in } = kind {
                let a = (6.0 / fan_in as f64).sqrt() as f32;
                for v in t.data_mut() {
                    *v = rng.gen_range(-a..=a);
                }
            }
        });
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor, ParamKind)) {
        self.encoder.visit(f);
        self.decoder.visit(f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut Tensor, ParamKind)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }

    /// Every stored tensor, including batch-norm running statistics, in canonical order.
    pub fn named_weights(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |n, t, _| out.push((n, t)));
        out
    }

    pub fn named_weights_with_kind(&self) -> Vec<(String, &Tensor, ParamKind)> {
        let mut out = Vec::new();
        self.visit(&mut |n, t, k| out.push((n, t, k)));
        out
    }

    pub fn weight(&self, name: &str) -> Option<&Tensor> {
        self.named_weights().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Mutable access to one tensor by name; shapes must be preserved by the caller.
    pub fn weight_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let mut found = None;
        self.visit_mut(&mut |n, t, _| {
            if n == name {
                found = Some(t);
            }
        });
        found
    }

    /// Replaces every tensor from `weights`, which must hold exactly the
    /// model's names with matching shapes.
    pub fn load_named(&mut self, mut weights: BTreeMap<String, Tensor>) -> Result<()> {
        let mut failure = None;
        self.visit_mut(&mut |name, t, _| {
            if failure.is_some() {
                return;
            }
            match weights.remove(&name) {
                None => failure = Some(Error::MissingTensor(name)),
                Some(w) if w.shape() != t.shape() => {
                    failure = Some(Error::Malformed {
                        what: "weight archive",
                        detail: format!("tensor `{name}` has shape {}, model expects {}", w.shape(), t.shape()),
                    })
                }
                Some(w) => *t = w,
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some(extra) = weights.into_keys().next() {
            return Err(Error::UnexpectedTensor(extra));
        }
        Ok(())
    }

    /// Trainable parameters: weights, biases and normalization affine terms.
    pub fn param_count(&self) -> u64 {
        layers::trainable_count(|f| self.visit(f))
    }

    /// Closed-form per-layer cost records for a batch-1 input of `size`.
    pub fn layer_records(&self, size: InputSize) -> Result<Vec<LayerRecord>> {
        check_input_size(size, self.config.patch)?;
        let mut be = Count::default();
        let x = Shape::new(1, 3, size.height, size.width);
        let (b, skips) = graph::encode(&mut be, &self.encoder, &x)?;
        graph::decode(&mut be, &self.decoder, &b, &skips)?;
        Ok(be.records)
    }

    pub fn mac_count(&self, size: InputSize) -> Result<u64> {
        Ok(self.layer_records(size)?.iter().map(|r| r.macs).sum())
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let s = image.shape();
        if s.channels != 3 || s.batch == 0 {
            return Err(Error::dim("forward", format!("expected (b, 3, H, W) image, got {s}")));
        }
        check_input_size(InputSize::new(s.width, s.height), self.config.patch)
            .map_err(|e| Error::dim("forward", e.to_string()))
    }

    /// Bottleneck at 1/16 scale and skips at 1/2, 1/4, 1/8.
    pub fn encoder_forward(&self, image: &Tensor) -> Result<(Tensor, [Tensor; 3])> {
        self.check_image(image)?;
        graph::encode(&mut Compute::default(), &self.encoder, image)
    }

    pub fn decoder_forward(&self, bottleneck: &Tensor, skips: &[Tensor; 3]) -> Result<DepthMap> {
        let raw = graph::decode(&mut Compute::default(), &self.decoder, bottleneck, skips)?;
        Ok(self.clamp(raw))
    }

    pub fn forward(&self, image: &Tensor) -> Result<DepthMap> {
        Ok(self.clamp(self.forward_raw(image)?))
    }

    /// Exit-conv output before clamping to the depth range.
    pub fn forward_raw(&self, image: &Tensor) -> Result<Tensor> {
        self.check_image(image)?;
        let mut be = Compute::default();
        let (b, skips) = graph::encode(&mut be, &self.encoder, image)?;
        graph::decode(&mut be, &self.decoder, &b, &skips)
    }

    pub fn forward_traced(&self, image: &Tensor) -> Result<ForwardTrace> {
        self.check_image(image)?;
        let mut be = Compute::traced();
        let (b, skips) = graph::encode(&mut be, &self.encoder, image)?;
        let raw = graph::decode(&mut be, &self.decoder, &b, &skips)?;
        Ok(ForwardTrace {
            output: self.clamp(raw),
            events: be.trace.unwrap_or_default(),
            weights_used: be.touched.unwrap_or_default(),
            attention: be.attention.unwrap_or_default(),
        })
    }

    fn clamp(&self, raw: Tensor) -> DepthMap {
        let (lo, hi) = self.config.depth_range;
        DepthMap { values: raw.map(|v| if v.is_nan() { lo } else { v.clamp(lo, hi) }), valid_mask: None }
    }

    /// Runs one MV2 block of the encoder by index, for composition tests.
    pub fn mv2_block(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let blk = self.encoder.mv2.get(index).ok_or_else(|| Error::Config(format!("no MV2 block {index}")))?;
        graph_mv2(blk, x)
    }

    /// Runs METER block `index` (0 at 1/16 after mv2_5, 1 after mv2_6).
    pub fn meter_block(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let blk = self.encoder.meter.get(index).ok_or_else(|| Error::Config(format!("no METER block {index}")))?;
        graph::meter_block(&mut Compute::default(), "meter", blk, x)
    }

    pub fn meter_block_traced(&self, index: usize, x: &Tensor) -> Result<(Tensor, Vec<TraceEvent>)> {
        let blk = self.encoder.meter.get(index).ok_or_else(|| Error::Config(format!("no METER block {index}")))?;
        let mut be = Compute::traced();
        let y = graph::meter_block(&mut be, &format!("encoder.meter_{index}"), blk, x)?;
        Ok((y, be.trace.unwrap_or_default()))
    }
}

fn graph_mv2(blk: &Mv2, x: &Tensor) -> Result<Tensor> {
    let y = graph::conv_forward(&blk.expand, x)?;
    let y = graph::conv_forward(&blk.depthwise, &y)?;
    let y = graph::conv_forward(&blk.project, &y)?;
    if blk.residual() {
        x.add(&y)
    } else {
        Ok(y)
    }
}
