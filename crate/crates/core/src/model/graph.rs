//! The network graph, written once against an abstract backend.
//!
//! [`Compute`] runs the kernels on real tensors; [`Count`] propagates shapes
//! only and emits one cost record per layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, AttentionWeights};
use crate::model::layers::{
    trainable_count, Conv, Decoder, Encoder, MeterBlock, Mv2, Transformer, UpBlock, Upsample, BN_EPS, LN_EPS,
};
use crate::tensor::{PatchSequence, Shape, Tensor};

/// Cost of one layer for a given input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub kind: String,
    pub params: u64,
    pub macs: u64,
    pub output: [usize; 4],
}

pub(crate) trait Backend {
    type T: Clone;

    fn shape(&self, x: &Self::T) -> Shape;
    fn conv(&mut self, path: &str, layer: &Conv, x: &Self::T) -> Result<Self::T>;
    fn upsample(&mut self, path: &str, layer: &Upsample, x: &Self::T) -> Result<Self::T>;
    /// Unfold, one transformer layer, fold.
    fn transformer(&mut self, path: &str, layer: &Transformer, x: &Self::T) -> Result<Self::T>;
    fn concat(&mut self, path: &str, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn add(&mut self, path: &str, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn crop(&mut self, x: Self::T, height: usize, width: usize) -> Result<Self::T>;
}

fn mv2<B: Backend>(be: &mut B, p: &str, blk: &Mv2, x: &B::T) -> Result<B::T> {
    let y = be.conv(&format!("{p}.expand"), &blk.expand, x)?;
    let y = be.conv(&format!("{p}.depthwise"), &blk.depthwise, &y)?;
    let y = be.conv(&format!("{p}.project"), &blk.project, &y)?;
    if blk.residual() {
        be.add(&format!("{p}.residual"), x, &y)
    } else {
        Ok(y)
    }
}

pub(crate) fn meter_block<B: Backend>(be: &mut B, p: &str, blk: &MeterBlock, x: &B::T) -> Result<B::T> {
    let y = be.conv(&format!("{p}.local.conv3"), &blk.local_conv, x)?;
    let y = be.conv(&format!("{p}.local.proj"), &blk.local_proj, &y)?;
    let t = be.transformer(&format!("{p}.transformer"), &blk.transformer, &y)?;
    let c = be.concat(&format!("{p}.concat"), x, &t)?;
    let y = be.conv(&format!("{p}.fuse"), &blk.fuse, &c)?;
    let y = be.conv(&format!("{p}.out.conv3"), &blk.out_conv, &y)?;
    be.conv(&format!("{p}.out.proj"), &blk.out_proj, &y)
}

fn up_block<B: Backend>(be: &mut B, p: &str, blk: &UpBlock, x: &B::T, skip: &B::T) -> Result<B::T> {
    let u = be.upsample(&format!("{p}.upsample"), &blk.upsample, x)?;
    let (us, ss) = (be.shape(&u), be.shape(skip));
    // Odd skip extents leave the upsampled map one row/column larger.
    if ss.height > us.height || ss.width > us.width || us.height - ss.height > 1 || us.width - ss.width > 1 {
        return Err(Error::dim("decoder", format!("upsampled map {us} cannot be aligned with skip {ss}")));
    }
    let u = be.crop(u, ss.height, ss.width)?;
    let c = be.concat(&format!("{p}.concat"), &u, skip)?;
    let y = be.conv(&format!("{p}.conv.depthwise"), &blk.depthwise, &c)?;
    be.conv(&format!("{p}.conv.pointwise"), &blk.pointwise, &y)
}

pub(crate) fn encode<B: Backend>(be: &mut B, enc: &Encoder, x: &B::T) -> Result<(B::T, [B::T; 3])> {
    let x = be.conv("encoder.stem", &enc.stem, x)?;
    let s1 = mv2(be, "encoder.mv2_0", &enc.mv2[0], &x)?;
    let mut x = mv2(be, "encoder.mv2_1", &enc.mv2[1], &s1)?;
    x = mv2(be, "encoder.mv2_2", &enc.mv2[2], &x)?;
    let s2 = mv2(be, "encoder.mv2_3", &enc.mv2[3], &x)?;
    let s3 = mv2(be, "encoder.mv2_4", &enc.mv2[4], &s2)?;
    x = mv2(be, "encoder.mv2_5", &enc.mv2[5], &s3)?;
    x = meter_block(be, "encoder.meter_0", &enc.meter[0], &x)?;
    x = mv2(be, "encoder.mv2_6", &enc.mv2[6], &x)?;
    x = meter_block(be, "encoder.meter_1", &enc.meter[1], &x)?;
    let bottleneck = be.conv("encoder.head", &enc.head, &x)?;
    Ok((bottleneck, [s1, s2, s3]))
}

/// Decoder up to the exit conv; clamping is left to the caller.
pub(crate) fn decode<B: Backend>(be: &mut B, dec: &Decoder, bottleneck: &B::T, skips: &[B::T; 3]) -> Result<B::T> {
    let mut x = be.conv("decoder.entry", &dec.entry, bottleneck)?;
    for (i, blk) in dec.up.iter().enumerate() {
        x = up_block(be, &format!("decoder.up_{i}"), blk, &x, &skips[2 - i])?;
    }
    be.conv("decoder.exit", &dec.exit, &x)
}

/// Event captured by [`Compute`] when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub name: String,
    pub kind: &'static str,
    pub inputs: Vec<Shape>,
    pub output: Shape,
}

#[derive(Debug, Default)]
pub(crate) struct Compute {
    pub trace: Option<Vec<TraceEvent>>,
    /// Weight names in the order the forward pass touched them.
    pub touched: Option<Vec<String>>,
    /// Attention probabilities per transformer, when requested.
    pub attention: Option<Vec<(String, Vec<f32>)>>,
}

impl Compute {
    pub fn traced() -> Self {
        Compute { trace: Some(Vec::new()), touched: Some(Vec::new()), attention: Some(Vec::new()) }
    }

    fn log(&mut self, name: &str, kind: &'static str, inputs: &[&Tensor], out: &Tensor) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent {
                name: name.to_string(),
                kind,
                inputs: inputs.iter().map(|x| x.shape()).collect(),
                output: out.shape(),
            });
        }
    }

    fn touch(&mut self, names: impl FnOnce(&mut Vec<String>)) {
        if let Some(t) = &mut self.touched {
            names(t);
        }
    }
}

pub(crate) fn conv_forward(layer: &Conv, x: &Tensor) -> Result<Tensor> {
    let mut y = kernels::conv2d_grouped(
        x,
        &layer.weight,
        layer.bias.as_ref().map(|b| b.data()),
        layer.stride,
        layer.padding,
        layer.groups,
    )?;
    if let Some(bn) = &layer.bn {
        y = kernels::batchnorm_inference(&y, bn.mean.data(), bn.var.data(), bn.gamma.data(), bn.beta.data(), BN_EPS)?;
    }
    if let Some(act) = layer.act {
        act.apply_inplace(y.data_mut());
    }
    Ok(y)
}

fn add_into(seq: &mut PatchSequence, other: &PatchSequence) {
    for (a, b) in seq.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}

/// Transformer layer on an already unfolded sequence.
pub(crate) fn transformer_seq(layer: &Transformer, seq: &PatchSequence) -> Result<(PatchSequence, Vec<f32>)> {
    let h = kernels::layernorm(seq, layer.ln1.gamma.data(), layer.ln1.beta.data(), LN_EPS)?;
    let w = AttentionWeights {
        wq: &layer.q.weight,
        bq: Some(layer.q.bias.data()),
        wk: &layer.k.weight,
        bk: Some(layer.k.bias.data()),
        wv: &layer.v.weight,
        bv: Some(layer.v.bias.data()),
        wo: &layer.o.weight,
        bo: Some(layer.o.bias.data()),
    };
    let (a, probs) = kernels::multihead_self_attention_with_probs(&h, &w, layer.heads)?;
    let mut x = seq.clone();
    add_into(&mut x, &a);
    let h = kernels::layernorm(&x, layer.ln2.gamma.data(), layer.ln2.beta.data(), LN_EPS)?;
    let mut f = kernels::linear(&h, &layer.fc1.weight, Some(layer.fc1.bias.data()))?;
    layer.act.apply_inplace(&mut f.data);
    let f = kernels::linear(&f, &layer.fc2.weight, Some(layer.fc2.bias.data()))?;
    add_into(&mut x, &f);
    Ok((x, probs))
}

impl Backend for Compute {
    type T = Tensor;

    fn shape(&self, x: &Tensor) -> Shape {
        x.shape()
    }

    fn conv(&mut self, path: &str, layer: &Conv, x: &Tensor) -> Result<Tensor> {
        let y = conv_forward(layer, x)?;
        self.log(path, "conv", &[x], &y);
        self.touch(|t| layer.visit(path, &mut |n, _, _| t.push(n)));
        Ok(y)
    }

    fn upsample(&mut self, path: &str, layer: &Upsample, x: &Tensor) -> Result<Tensor> {
        let y = kernels::transposed_conv2d(x, &layer.weight, Some(layer.bias.data()), 2, 0)?;
        self.log(path, "upsample", &[x], &y);
        self.touch(|t| {
            t.push(format!("{path}.weight"));
            t.push(format!("{path}.bias"));
        });
        Ok(y)
    }

    fn transformer(&mut self, path: &str, layer: &Transformer, x: &Tensor) -> Result<Tensor> {
        let seq = kernels::unfold(x, layer.patch)?;
        let (out, probs) = transformer_seq(layer, &seq)?;
        let y = kernels::fold(&out)?;
        self.log(path, "transformer", &[x], &y);
        self.touch(|t| {
            layer.visit_attention(path, &mut |n, _, _| t.push(n));
            layer.visit_ffn(path, &mut |n, _, _| t.push(n));
        });
        if let Some(a) = &mut self.attention {
            a.push((path.to_string(), probs));
        }
        Ok(y)
    }

    fn concat(&mut self, path: &str, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let y = kernels::concat_channels(a, b)?;
        self.log(path, "concat", &[a, b], &y);
        Ok(y)
    }

    fn add(&mut self, path: &str, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let y = a.add(b)?;
        self.log(path, "add", &[a, b], &y);
        Ok(y)
    }

    fn crop(&mut self, x: Tensor, height: usize, width: usize) -> Result<Tensor> {
        let s = x.shape();
        if (s.height, s.width) == (height, width) {
            return Ok(x);
        }
        x.crop_spatial(height, width)
    }
}

/// Shape-only backend producing closed-form cost records.
#[derive(Debug, Default)]
pub(crate) struct Count {
    pub records: Vec<LayerRecord>,
}

impl Count {
    fn push(&mut self, name: String, kind: &str, params: u64, macs: u64, out: Shape) {
        self.records.push(LayerRecord { name, kind: kind.to_string(), params, macs, output: out.dims() });
    }
}

/// Cost record of a single convolution layer on `input`.
pub fn conv_record(name: &str, layer: &Conv, input: Shape) -> Result<LayerRecord> {
    let mut be = Count::default();
    be.conv(name, layer, &input)?;
    Ok(be.records.pop().expect("conv emits one record"))
}

impl Backend for Count {
    type T = Shape;

    fn shape(&self, x: &Shape) -> Shape {
        *x
    }

    fn conv(&mut self, path: &str, layer: &Conv, x: &Shape) -> Result<Shape> {
        let (k, st, pad) = (layer.kernel(), layer.stride, layer.padding);
        if x.channels != layer.in_channels() {
            return Err(Error::dim("conv2d", format!("input {x} does not match weights {}", layer.weight.shape())));
        }
        let (Some(oh), Some(ow)) =
            (kernels::conv_out_extent(x.height, k, st, pad), kernels::conv_out_extent(x.width, k, st, pad))
        else {
            return Err(Error::dim("conv2d", format!("kernel does not fit input {x}")));
        };
        let out = Shape::new(x.batch, layer.out_channels(), oh, ow);
        let per_out = (layer.in_channels() / layer.groups) * k * k;
        let kind = if layer.groups > 1 {
            "depthwise"
        } else if k == 1 {
            "pointwise"
        } else {
            "conv"
        };
        let params = trainable_count(|f| layer.visit(path, f));
        self.push(path.to_string(), kind, params, (out.numel() * per_out) as u64, out);
        Ok(out)
    }

    fn upsample(&mut self, path: &str, layer: &Upsample, x: &Shape) -> Result<Shape> {
        let ws = layer.weight.shape();
        if x.channels != ws.batch {
            return Err(Error::dim("transposed_conv2d", format!("input {x} does not match weights {ws}")));
        }
        let out = Shape::new(x.batch, ws.channels, 2 * x.height, 2 * x.width);
        let macs = x.numel() * ws.channels * ws.height * ws.width;
        let params = (layer.weight.numel() + layer.bias.numel()) as u64;
        self.push(path.to_string(), "upsample", params, macs as u64, out);
        Ok(out)
    }

    fn transformer(&mut self, path: &str, layer: &Transformer, x: &Shape) -> Result<Shape> {
        let (ph, pw) = layer.patch;
        if !x.height.is_multiple_of(ph) || !x.width.is_multiple_of(pw) {
            return Err(Error::dim("unfold", format!("{x} is not divisible by patch {ph}x{pw}")));
        }
        let d = layer.dim();
        if x.channels != d {
            return Err(Error::dim("transformer", format!("input {x} does not match dim {d}")));
        }
        let tokens = x.batch * x.plane();
        let area = ph * pw;
        let len = x.plane() / area;
        let sequences = x.batch * area;
        let attn_macs = tokens * 4 * d * d + 2 * sequences * len * len * d;
        let ffn_macs = 2 * tokens * d * layer.hidden();
        let attn_params = trainable_count(|f| layer.visit_attention(path, f));
        let ffn_params = trainable_count(|f| layer.visit_ffn(path, f));
        self.push(format!("{path}.attention"), "attention", attn_params, attn_macs as u64, *x);
        self.push(format!("{path}.ffn"), "ffn", ffn_params, ffn_macs as u64, *x);
        Ok(*x)
    }

    fn concat(&mut self, path: &str, a: &Shape, b: &Shape) -> Result<Shape> {
        if (a.batch, a.height, a.width) != (b.batch, b.height, b.width) {
            return Err(Error::dim("concat_channels", format!("{a} vs {b}")));
        }
        let out = Shape::new(a.batch, a.channels + b.channels, a.height, a.width);
        self.push(path.to_string(), "concat", 0, 0, out);
        Ok(out)
    }

    fn add(&mut self, _path: &str, a: &Shape, b: &Shape) -> Result<Shape> {
        if a != b {
            return Err(Error::dim("add", format!("{a} vs {b}")));
        }
        Ok(*a)
    }

    fn crop(&mut self, x: Shape, height: usize, width: usize) -> Result<Shape> {
        Ok(Shape::new(x.batch, x.channels, height, width))
    }
}
