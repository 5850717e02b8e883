//! Parameter containers for every layer type in the network.

use crate::model::Activation;
use crate::tensor::{Shape, Tensor};

pub(crate) const BN_EPS: f32 = 1e-5;
pub(crate) const LN_EPS: f32 = 1e-5;

/// Role of a stored tensor, used for initialization and parameter counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight { fan_in: usize },
    Bias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    /// Running statistics are stored but not trained.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

pub(crate) type Visit<'a, 'b> = &'b mut dyn FnMut(String, &'a Tensor, ParamKind);
pub(crate) type VisitMut<'a, 'b> = &'b mut dyn FnMut(String, &'a mut Tensor, ParamKind);

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub mean: Tensor,
    pub var: Tensor,
}

impl BatchNorm {
    fn new(ch: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(Shape::vector(ch), 1.0),
            beta: Tensor::zeros(Shape::vector(ch)),
            mean: Tensor::zeros(Shape::vector(ch)),
            var: Tensor::full(Shape::vector(ch), 1.0),
        }
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        f(format!("{p}.bn.gamma"), &self.gamma, ParamKind::NormScale);
        f(format!("{p}.bn.beta"), &self.beta, ParamKind::NormShift);
        f(format!("{p}.bn.running_mean"), &self.mean, ParamKind::RunningMean);
        f(format!("{p}.bn.running_var"), &self.var, ParamKind::RunningVar);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        f(format!("{p}.bn.gamma"), &mut self.gamma, ParamKind::NormScale);
        f(format!("{p}.bn.beta"), &mut self.beta, ParamKind::NormShift);
        f(format!("{p}.bn.running_mean"), &mut self.mean, ParamKind::RunningMean);
        f(format!("{p}.bn.running_var"), &mut self.var, ParamKind::RunningVar);
    }
}

/// Convolution with optional bias, batch norm and activation, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub bn: Option<BatchNorm>,
    pub act: Option<Activation>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv {
    pub(crate) fn new(ci: usize, co: usize, k: usize, stride: usize, groups: usize) -> Self {
        Conv {
            weight: Tensor::zeros(Shape::new(co, ci / groups, k, k)),
            bias: None,
            bn: Some(BatchNorm::new(co)),
            act: None,
            stride,
            padding: k / 2,
            groups,
        }
    }

    pub(crate) fn act(mut self, act: Activation) -> Self {
        self.act = Some(act);
        self
    }

    /// Plain conv with bias and no normalization.
    pub fn biased(ci: usize, co: usize, k: usize) -> Self {
        Conv { bias: Some(Tensor::zeros(Shape::vector(co))), bn: None, ..Conv::new(ci, co, k, 1, 1) }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().channels * self.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().batch
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().height
    }

    fn fan_in(&self) -> usize {
        let s = self.weight.shape();
        s.channels * s.height * s.width
    }

    pub(crate) fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        f(format!("{p}.weight"), &self.weight, ParamKind::Weight { fan_in: self.fan_in() });
        if let Some(b) = &self.bias {
            f(format!("{p}.bias"), b, ParamKind::Bias);
        }
        if let Some(bn) = &self.bn {
            bn.visit(p, f);
        }
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        let fan_in = self.fan_in();
        f(format!("{p}.weight"), &mut self.weight, ParamKind::Weight { fan_in });
        if let Some(b) = &mut self.bias {
            f(format!("{p}.bias"), b, ParamKind::Bias);
        }
        if let Some(bn) = &mut self.bn {
            bn.visit_mut(p, f);
        }
    }
}

/// Stride-2, kernel-2 transposed convolution; weights are (in, out, 2, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct Upsample {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Upsample {
    fn new(ci: usize, co: usize) -> Self {
        Upsample { weight: Tensor::zeros(Shape::new(ci, co, 2, 2)), bias: Tensor::zeros(Shape::vector(co)) }
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        let fan_in = self.weight.shape().batch;
        f(format!("{p}.weight"), &self.weight, ParamKind::Weight { fan_in });
        f(format!("{p}.bias"), &self.bias, ParamKind::Bias);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        let fan_in = self.weight.shape().batch;
        f(format!("{p}.weight"), &mut self.weight, ParamKind::Weight { fan_in });
        f(format!("{p}.bias"), &mut self.bias, ParamKind::Bias);
    }
}

/// Dense layer; weight stored as (out, in, 1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn new(i: usize, o: usize) -> Self {
        Linear { weight: Tensor::zeros(Shape::new(o, i, 1, 1)), bias: Tensor::zeros(Shape::vector(o)) }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape().batch
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        let fan_in = self.weight.shape().channels;
        f(format!("{p}.weight"), &self.weight, ParamKind::Weight { fan_in });
        f(format!("{p}.bias"), &self.bias, ParamKind::Bias);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        let fan_in = self.weight.shape().channels;
        f(format!("{p}.weight"), &mut self.weight, ParamKind::Weight { fan_in });
        f(format!("{p}.bias"), &mut self.bias, ParamKind::Bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        LayerNorm { gamma: Tensor::full(Shape::vector(d), 1.0), beta: Tensor::zeros(Shape::vector(d)) }
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        f(format!("{p}.gamma"), &self.gamma, ParamKind::NormScale);
        f(format!("{p}.beta"), &self.beta, ParamKind::NormShift);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        f(format!("{p}.gamma"), &mut self.gamma, ParamKind::NormScale);
        f(format!("{p}.beta"), &mut self.beta, ParamKind::NormShift);
    }
}

/// Pre-norm transformer layer: attention then feed-forward, each residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub heads: usize,
    pub patch: (usize, usize),
    pub act: Activation,
}

impl Transformer {
    fn new(d: usize, hidden: usize, heads: usize, patch: (usize, usize), act: Activation) -> Self {
        Transformer {
            ln1: LayerNorm::new(d),
            q: Linear::new(d, d),
            k: Linear::new(d, d),
            v: Linear::new(d, d),
            o: Linear::new(d, d),
            ln2: LayerNorm::new(d),
            fc1: Linear::new(d, hidden),
            fc2: Linear::new(hidden, d),
            heads,
            patch,
            act,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.out_dim()
    }

    pub fn hidden(&self) -> usize {
        self.fc1.out_dim()
    }

    pub(crate) fn visit_attention<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.ln1.visit(&format!("{p}.ln1"), f);
        self.q.visit(&format!("{p}.attn.q"), f);
        self.k.visit(&format!("{p}.attn.k"), f);
        self.v.visit(&format!("{p}.attn.v"), f);
        self.o.visit(&format!("{p}.attn.out"), f);
    }

    pub(crate) fn visit_ffn<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.ln2.visit(&format!("{p}.ln2"), f);
        self.fc1.visit(&format!("{p}.ffn.fc1"), f);
        self.fc2.visit(&format!("{p}.ffn.fc2"), f);
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.visit_attention(p, f);
        self.visit_ffn(p, f);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        self.ln1.visit_mut(&format!("{p}.ln1"), f);
        self.q.visit_mut(&format!("{p}.attn.q"), f);
        self.k.visit_mut(&format!("{p}.attn.k"), f);
        self.v.visit_mut(&format!("{p}.attn.v"), f);
        self.o.visit_mut(&format!("{p}.attn.out"), f);
        self.ln2.visit_mut(&format!("{p}.ln2"), f);
        self.fc1.visit_mut(&format!("{p}.ffn.fc1"), f);
        self.fc2.visit_mut(&format!("{p}.ffn.fc2"), f);
    }
}

/// Inverted residual: 1x1 expand, 3x3 depthwise (strided), 1x1 project.
#[derive(Debug, Clone, PartialEq)]
pub struct Mv2 {
    pub expand: Conv,
    pub depthwise: Conv,
    pub project: Conv,
}

impl Mv2 {
    pub(crate) fn new(ci: usize, co: usize, stride: usize, expansion: usize, act: Activation) -> Self {
        let hid = ci * expansion;
        Mv2 {
            expand: Conv::new(ci, hid, 1, 1, 1).act(act),
            depthwise: Conv::new(hid, hid, 3, stride, hid).act(act),
            project: Conv::new(hid, co, 1, 1, 1),
        }
    }

    pub fn residual(&self) -> bool {
        self.depthwise.stride == 1 && self.expand.in_channels() == self.project.out_channels()
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.expand.visit(&format!("{p}.expand"), f);
        self.depthwise.visit(&format!("{p}.depthwise"), f);
        self.project.visit(&format!("{p}.project"), f);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        self.expand.visit_mut(&format!("{p}.expand"), f);
        self.depthwise.visit_mut(&format!("{p}.depthwise"), f);
        self.project.visit_mut(&format!("{p}.project"), f);
    }
}

/// Conv block, transformer over unfolded patches, input concat and fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterBlock {
    pub local_conv: Conv,
    pub local_proj: Conv,
    pub transformer: Transformer,
    pub fuse: Conv,
    pub out_conv: Conv,
    pub out_proj: Conv,
}

impl MeterBlock {
    pub(crate) fn new(
        ch: usize,
        dim: usize,
        ffn_mult: usize,
        heads: usize,
        patch: (usize, usize),
        act: Activation,
    ) -> Self {
        MeterBlock {
            local_conv: Conv::new(ch, ch, 3, 1, 1).act(act),
            local_proj: Conv::new(ch, dim, 1, 1, 1).act(act),
            transformer: Transformer::new(dim, dim * ffn_mult, heads, patch, act),
            fuse: Conv::new(ch + dim, ch, 1, 1, 1).act(act),
            out_conv: Conv::new(ch, ch, 3, 1, 1).act(act),
            out_proj: Conv::new(ch, ch, 1, 1, 1).act(act),
        }
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.local_conv.visit(&format!("{p}.local.conv3"), f);
        self.local_proj.visit(&format!("{p}.local.proj"), f);
        self.transformer.visit(&format!("{p}.transformer"), f);
        self.fuse.visit(&format!("{p}.fuse"), f);
        self.out_conv.visit(&format!("{p}.out.conv3"), f);
        self.out_proj.visit(&format!("{p}.out.proj"), f);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        self.local_conv.visit_mut(&format!("{p}.local.conv3"), f);
        self.local_proj.visit_mut(&format!("{p}.local.proj"), f);
        self.transformer.visit_mut(&format!("{p}.transformer"), f);
        self.fuse.visit_mut(&format!("{p}.fuse"), f);
        self.out_conv.visit_mut(&format!("{p}.out.conv3"), f);
        self.out_proj.visit_mut(&format!("{p}.out.proj"), f);
    }
}

/// Transposed-conv upsampling, skip concat, separable conv block.
#[derive(Debug, Clone, PartialEq)]
pub struct UpBlock {
    pub upsample: Upsample,
    pub depthwise: Conv,
    pub pointwise: Conv,
}

impl UpBlock {
    pub(crate) fn new(ci: usize, co: usize, skip: usize, act: Activation) -> Self {
        let cat = co + skip;
        UpBlock {
            upsample: Upsample::new(ci, co),
            depthwise: Conv::new(cat, cat, 3, 1, cat).act(act),
            pointwise: Conv::new(cat, co, 1, 1, 1).act(act),
        }
    }

    fn visit<'a>(&'a self, p: &str, f: Visit<'a, '_>) {
        self.upsample.visit(&format!("{p}.upsample"), f);
        self.depthwise.visit(&format!("{p}.conv.depthwise"), f);
        self.pointwise.visit(&format!("{p}.conv.pointwise"), f);
    }

    fn visit_mut<'a>(&'a mut self, p: &str, f: VisitMut<'a, '_>) {
        self.upsample.visit_mut(&format!("{p}.upsample"), f);
        self.depthwise.visit_mut(&format!("{p}.conv.depthwise"), f);
        self.pointwise.visit_mut(&format!("{p}.conv.pointwise"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub stem: Conv,
    /// mv2_0 .. mv2_6 in execution order.
    pub mv2: Vec<Mv2>,
    pub meter: Vec<MeterBlock>,
    pub head: Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub entry: Conv,
    pub up: Vec<UpBlock>,
    pub exit: Conv,
}

impl Encoder {
    pub(crate) fn visit<'a>(&'a self, f: Visit<'a, '_>) {
        self.stem.visit("encoder.stem", f);
        for (i, m) in self.mv2.iter().enumerate() {
            m.visit(&format!("encoder.mv2_{i}"), f);
            // METER blocks follow mv2_5 and mv2_6.
            if i >= 5 {
                self.meter[i - 5].visit(&format!("encoder.meter_{}", i - 5), f);
            }
        }
        self.head.visit("encoder.head", f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, f: VisitMut<'a, '_>) {
        self.stem.visit_mut("encoder.stem", f);
        let mut meters = self.meter.iter_mut();
        for (i, m) in self.mv2.iter_mut().enumerate() {
            m.visit_mut(&format!("encoder.mv2_{i}"), f);
            if i >= 5 {
                if let Some(b) = meters.next() {
                    b.visit_mut(&format!("encoder.meter_{}", i - 5), f);
                }
            }
        }
        self.head.visit_mut("encoder.head", f);
    }
}

impl Decoder {
    pub(crate) fn visit<'a>(&'a self, f: Visit<'a, '_>) {
        self.entry.visit("decoder.entry", f);
        for (i, u) in self.up.iter().enumerate() {
            u.visit(&format!("decoder.up_{i}"), f);
        }
        self.exit.visit("decoder.exit", f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, f: VisitMut<'a, '_>) {
        self.entry.visit_mut("decoder.entry", f);
        for (i, u) in self.up.iter_mut().enumerate() {
            u.visit_mut(&format!("decoder.up_{i}"), f);
        }
        self.exit.visit_mut("decoder.exit", f);
    }
}

/// Element count of the trainable tensors reached by `visit`.
pub(crate) fn trainable_count<'a>(visit: impl FnOnce(Visit<'a, '_>)) -> u64 {
    let mut n = 0u64;
    visit(&mut |_, t, kind| {
        if kind.trainable() {
            n += t.numel() as u64;
        }
    });
    n
}
