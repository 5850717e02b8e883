use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    S,
    XS,
    XXS,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::S, Variant::XS, Variant::XXS];

    /// Channel plan C1..C10.
    pub fn channels(self) -> [usize; 10] {
        match self {
            Variant::S => [16, 32, 64, 128, 160, 320, 128, 64, 32, 16],
            Variant::XS => [16, 32, 48, 80, 96, 192, 128, 64, 32, 16],
            Variant::XXS => [16, 16, 24, 64, 80, 160, 64, 32, 16, 8],
        }
    }

    /// Embedding width of the two transformer layers.
    pub fn transformer_dims(self) -> [usize; 2] {
        match self {
            Variant::S => [128, 368],
            Variant::XS => [80, 256],
            Variant::XXS => [48, 176],
        }
    }

    pub fn mv2_expansion(self) -> usize {
        match self {
            Variant::S | Variant::XS => 3,
            Variant::XXS => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S => "S",
            Variant::XS => "XS",
            Variant::XXS => "XXS",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(Variant::S),
            "xs" => Ok(Variant::XS),
            "xxs" => Ok(Variant::XXS),
            _ => Err(Error::Config(format!("unknown variant `{s}` (expected s, xs or xxs)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    SiLU,
}

impl Activation {
    pub fn apply_inplace(self, values: &mut [f32]) {
        match self {
            Activation::ReLU => crate::kernels::relu_inplace(values),
            Activation::SiLU => crate::kernels::silu_inplace(values),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::ReLU => "relu",
            Activation::SiLU => "silu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::ReLU),
            "silu" => Ok(Activation::SiLU),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

/// Spatial input extent, width first as written on the command line (`256x192`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputSize {
    pub width: usize,
    pub height: usize,
}

impl InputSize {
    pub const INDOOR: InputSize = InputSize { width: 256, height: 192 };
    pub const OUTDOOR: InputSize = InputSize { width: 636, height: 192 };

    pub const fn new(width: usize, height: usize) -> Self {
        InputSize { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Extent of the predicted depth map.
    pub fn output(&self) -> InputSize {
        InputSize::new(self.width / 2, self.height / 2)
    }
}

impl fmt::Display for InputSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for InputSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("input size `{s}` is not of the form WxH"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width = w.trim().parse().map_err(|_| bad())?;
        let height = h.trim().parse().map_err(|_| bad())?;
        Ok(InputSize { width, height })
    }
}

/// Extents after each stride-2 stage (1/2, 1/4, 1/8, 1/16).
pub fn stage_extents(len: usize) -> [usize; 4] {
    let half = |v: usize| v.div_ceil(2);
    let a = half(len);
    let b = half(a);
    let c = half(b);
    [a, b, c, half(c)]
}

/// Checks that `size` can run through the network: even extents, and a
/// 1/16 grid that tiles into whole patches.
pub fn check_input_size(size: InputSize, patch: (usize, usize)) -> Result<()> {
    let (ph, pw) = patch;
    let fail = |why: &str| Err(Error::Config(format!("input size {size} is unusable: {why}")));
    if size.width == 0 || size.height == 0 {
        return fail("zero extent");
    }
    if !size.width.is_multiple_of(2) || !size.height.is_multiple_of(2) {
        return fail("width and height must be even");
    }
    let gh = stage_extents(size.height)[3];
    let gw = stage_extents(size.width)[3];
    if ph == 0 || pw == 0 || !gh.is_multiple_of(ph) || !gw.is_multiple_of(pw) {
        return fail(&format!("the 1/16 feature map is {gw}x{gh}, which does not tile into {pw}x{ph} patches"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub channels: [usize; 10],
    pub activation: Activation,
    pub patch: (usize, usize),
    pub heads: usize,
    pub transformer_dims: [usize; 2],
    /// Feed-forward hidden width as a multiple of the embedding, per block.
    pub ffn_mult: [usize; 2],
    pub mv2_expansion: usize,
    /// Nominal input extent used for profiling; forward accepts any valid size.
    pub input_size: InputSize,
    /// Output clamp in meters.
    pub depth_range: (f32, f32),
}

impl ModelConfig {
    /// Indoor preset: 256x192 input, depth clamped to (1e-3, 10) m.
    pub fn preset(variant: Variant) -> Self {
        ModelConfig {
            variant,
            channels: variant.channels(),
            activation: Activation::ReLU,
            patch: (2, 2),
            heads: 4,
            transformer_dims: variant.transformer_dims(),
            ffn_mult: [2, 4],
            mv2_expansion: variant.mv2_expansion(),
            input_size: InputSize::INDOOR,
            depth_range: (1e-3, 10.0),
        }
    }

    /// Outdoor preset: 636x192 input, depth clamped to (1e-3, 80) m.
    pub fn outdoor(variant: Variant) -> Self {
        ModelConfig { input_size: InputSize::OUTDOOR, depth_range: (1e-3, 80.0), ..ModelConfig::preset(variant) }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_input_size(mut self, size: InputSize) -> Self {
        self.input_size = size;
        self
    }

    pub fn with_depth_range(mut self, min_m: f32, max_m: f32) -> Self {
        self.depth_range = (min_m, max_m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.channels.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("channel C{} is zero", i + 1)));
        }
        if self.heads == 0 {
            return Err(Error::Config("head count must be positive".into()));
        }
        for d in self.transformer_dims {
            if d == 0 || d % self.heads != 0 {
                return Err(Error::Config(format!("transformer dim {d} is not divisible by {} heads", self.heads)));
            }
        }
        if self.ffn_mult.contains(&0) || self.mv2_expansion == 0 {
            return Err(Error::Config("expansion factors must be positive".into()));
        }
        let (lo, hi) = self.depth_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(Error::Config(format!(
                "depth range ({lo}, {hi}) is not an increasing range of non-negative meters"
            )));
        }
        check_input_size(self.input_size, self.patch)
    }

    /// Extent of the depth map for an input of `size`.
    pub fn output_size(&self, size: InputSize) -> Result<InputSize> {
        check_input_size(size, self.patch)?;
        Ok(size.output())
    }
}
