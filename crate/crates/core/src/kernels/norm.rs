use crate::error::{Error, Result};
use crate::tensor::{PatchSequence, Tensor};

/// Per-channel affine normalization with stored statistics.
pub fn batchnorm_inference(
    input: &Tensor,
    mean: &[f32],
    var: &[f32],
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> Result<Tensor> {
    let s = input.shape();
    let c = s.channels;
    for (label, v) in [("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)] {
        if v.len() != c {
            return Err(Error::dim("batchnorm", format!("{label} has {} entries for {c} channels", v.len())));
        }
    }
    if let Some(i) = var.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::Validation(format!("batchnorm variance of channel {i} is {}", var[i])));
    }
    let scale: Vec<f64> = (0..c).map(|i| gamma[i] as f64 / (var[i] as f64 + eps as f64).sqrt()).collect();
    let mut out = input.clone();
    for b in 0..s.batch {
        for ch in 0..c {
            let (m, k, be) = (mean[ch] as f64, scale[ch], beta[ch] as f64);
            for v in out.plane_mut(b, ch) {
                *v = (k * (*v as f64 - m) + be) as f32;
            }
        }
    }
    Ok(out)
}

/// Normalizes every token over its embedding, then applies `gamma`/`beta`.
pub fn layernorm(seq: &PatchSequence, gamma: &[f32], beta: &[f32], eps: f32) -> Result<PatchSequence> {
    let d = seq.dim;
    if gamma.len() != d || beta.len() != d {
        return Err(Error::dim(
            "layernorm",
            format!("affine terms have {}/{} entries for dim {d}", gamma.len(), beta.len()),
        ));
    }
    let mut out = seq.data.clone();
    if d == 0 {
        return Ok(seq.same_layout(out, d));
    }
    for tok in out.chunks_mut(d) {
        let mean = tok.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = tok.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for (i, v) in tok.iter_mut().enumerate() {
            *v = ((*v as f64 - mean) * inv * gamma[i] as f64 + beta[i] as f64) as f32;
        }
    }
    Ok(seq.same_layout(out, d))
}
