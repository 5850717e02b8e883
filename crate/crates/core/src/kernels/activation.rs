use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn silu(input: &Tensor) -> Tensor {
    input.map(silu_scalar)
}

#[inline]
pub fn silu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (x / (1.0 + (-x).exp())) as f32
}

pub fn relu_inplace(values: &mut [f32]) {
    for v in values {
        *v = v.max(0.0);
    }
}

pub fn silu_inplace(values: &mut [f32]) {
    for v in values {
        *v = silu_scalar(*v);
    }
}
