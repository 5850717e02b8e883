//! Dense rank-4 `f32` tensor in row-major (batch, channel, height, width) order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape { batch, channels, height, width }
    }

    /// Shape used for 1-D parameter vectors (biases, norm statistics).
    pub const fn vector(len: usize) -> Self {
        Shape::new(len, 1, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub fn from_dims(dims: [usize; 4]) -> Self {
        Shape::new(dims[0], dims[1], dims[2], dims[3])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.batch, self.channels, self.height, self.width)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("len", &self.data.len()).finish()
    }
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::dim(
                "Tensor::new",
                format!("shape {shape} needs {} values, got {}", shape.numel(), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    /// Builds a tensor by evaluating `f(b, c, y, x)` at every position.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn from_vec(values: Vec<f32>) -> Self {
        let shape = Shape::vector(values.len());
        Tensor { shape, data: values }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.channels + c) * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: f32) {
        let o = self.offset(b, c, y, x);
        self.data[o] = v;
    }

    /// One (height × width) plane.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (b * self.shape.channels + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let p = self.shape.plane();
        let start = (b * self.shape.channels + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.data.len() {
            return Err(Error::dim("reshape", format!("cannot view {} as {shape}", self.shape)));
        }
        Ok(Tensor { shape, data: self.data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim("add", format!("{} vs {}", self.shape, other.shape)));
        }
        Ok(Tensor { shape: self.shape, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() })
    }

    /// Copy of batch element `b` as a batch-1 tensor.
    pub fn batch_item(&self, b: usize) -> Tensor {
        let per = self.shape.channels * self.shape.plane();
        Tensor {
            shape: Shape::new(1, self.shape.channels, self.shape.height, self.shape.width),
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Stacks tensors with identical (c, h, w) along the batch axis.
    pub fn stack_batch(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::dim("stack_batch", "no tensors to stack"))?.shape;
        let mut data = Vec::new();
        let mut batch = 0;
        for t in items {
            let s = t.shape;
            if (s.channels, s.height, s.width) != (first.channels, first.height, first.width) {
                return Err(Error::dim("stack_batch", format!("{first} vs {s}")));
            }
            batch += s.batch;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape: Shape::new(batch, first.channels, first.height, first.width), data })
    }

    /// Top-left window of the spatial extent.
    pub fn crop_spatial(&self, height: usize, width: usize) -> Result<Tensor> {
        self.crop_window(0, 0, height, width)
    }

    pub fn crop_window(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
        let s = self.shape;
        if top + height > s.height || left + width > s.width {
            return Err(Error::dim("crop", format!("window {height}x{width} at ({top},{left}) exceeds {s}")));
        }
        if top == 0 && left == 0 && height == s.height && width == s.width {
            return Ok(self.clone());
        }
        let out_shape = Shape::new(s.batch, s.channels, height, width);
        Ok(Tensor::from_fn(out_shape, |b, c, y, x| self.at(b, c, y + top, x + left)))
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        let mut it = self.data.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Bilinear resampling with half-pixel centers (`align_corners = false`).
pub fn resize_bilinear(input: &Tensor, height: usize, width: usize) -> Tensor {
    let s = input.shape();
    let out = Shape::new(s.batch, s.channels, height, width);
    let sy = s.height as f64 / height as f64;
    let sx = s.width as f64 / width as f64;
    Tensor::from_fn(out, |b, c, y, x| {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (s.height - 1) as f64);
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (s.width - 1) as f64);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(s.height - 1);
        let x1 = (x0 + 1).min(s.width - 1);
        let ty = fy - y0 as f64;
        let tx = fx - x0 as f64;
        let v00 = input.at(b, c, y0, x0) as f64;
        let v01 = input.at(b, c, y0, x1) as f64;
        let v10 = input.at(b, c, y1, x0) as f64;
        let v11 = input.at(b, c, y1, x1) as f64;
        let top = v00 + (v01 - v00) * tx;
        let bottom = v10 + (v11 - v10) * tx;
        (top + (bottom - top) * ty) as f32
    })
}

/// Nearest-neighbour resampling; source index is `floor((dst + 0.5) * scale)`.
pub fn resize_nearest(input: &Tensor, height: usize, width: usize) -> Tensor {
    let s = input.shape();
    let out = Shape::new(s.batch, s.channels, height, width);
    Tensor::from_fn(out, |b, c, y, x| {
        let sy = nearest_index(y, height, s.height);
        let sx = nearest_index(x, width, s.width);
        input.at(b, c, sy, sx)
    })
}

#[inline]
pub(crate) fn nearest_index(dst: usize, dst_len: usize, src_len: usize) -> usize {
    let f = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64;
    (f.floor() as usize).min(src_len - 1)
}

/// Token sequences produced by [`crate::kernels::unfold`].
///
/// Layout is (batch, patch_area, tokens, dim): position `p = py * pw + px`
/// inside a patch selects one sequence, and every patch contributes one token
/// to each of the `patch_area` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub batch: usize,
    pub patch: (usize, usize),
    /// Spatial extent of the folded map.
    pub grid: (usize, usize),
    pub dim: usize,
    pub data: Vec<f32>,
}

impl PatchSequence {
    pub fn patch_area(&self) -> usize {
        self.patch.0 * self.patch.1
    }

    pub fn tokens(&self) -> usize {
        self.grid.0 * self.grid.1 / self.patch_area()
    }

    pub fn sequences(&self) -> usize {
        self.batch * self.patch_area()
    }

    /// Rows of one sequence, `tokens * dim` values.
    pub fn sequence(&self, index: usize) -> &[f32] {
        let len = self.tokens() * self.dim;
        &self.data[index * len..(index + 1) * len]
    }

    pub fn same_layout(&self, data: Vec<f32>, dim: usize) -> PatchSequence {
        PatchSequence { batch: self.batch, patch: self.patch, grid: self.grid, dim, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.patch_area(), self.tokens(), self.dim]
    }
}
