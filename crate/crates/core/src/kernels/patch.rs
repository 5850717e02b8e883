use crate::error::{Error, Result};
use crate::tensor::{PatchSequence, Shape, Tensor};

/// Splits a feature map into `ph x pw` patches and regroups pixels by their
/// position inside the patch.
pub fn unfold(input: &Tensor, patch: (usize, usize)) -> Result<PatchSequence> {
    let s = input.shape();
    let (ph, pw) = patch;
    if ph == 0 || pw == 0 || !s.height.is_multiple_of(ph) || !s.width.is_multiple_of(pw) {
        return Err(Error::dim(
            "unfold",
            format!("spatial extent {}x{} is not divisible by patch {ph}x{pw}", s.height, s.width),
        ));
    }
    let (nh, nw) = (s.height / ph, s.width / pw);
    let (area, tokens, dim) = (ph * pw, nh * nw, s.channels);
    let mut data = vec![0f32; s.batch * area * tokens * dim];
    for b in 0..s.batch {
        for c in 0..dim {
            let plane = input.plane(b, c);
            for y in 0..s.height {
                let (iy, py) = (y / ph, y % ph);
                for x in 0..s.width {
                    let (ix, px) = (x / pw, x % pw);
                    let p = py * pw + px;
                    let n = iy * nw + ix;
                    data[((b * area + p) * tokens + n) * dim + c] = plane[y * s.width + x];
                }
            }
        }
    }
    Ok(PatchSequence { batch: s.batch, patch, grid: (s.height, s.width), dim, data })
}

/// Inverse of [`unfold`].
pub fn fold(seq: &PatchSequence) -> Result<Tensor> {
    let (ph, pw) = seq.patch;
    let (h, w) = seq.grid;
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::dim("fold", format!("grid {h}x{w} is not divisible by patch {ph}x{pw}")));
    }
    let (area, tokens, dim) = (ph * pw, (h / ph) * (w / pw), seq.dim);
    if seq.data.len() != seq.batch * area * tokens * dim {
        return Err(Error::dim(
            "fold",
            format!("sequence holds {} values, layout needs {}", seq.data.len(), seq.batch * area * tokens * dim),
        ));
    }
    let nw = w / pw;
    let mut out = Tensor::zeros(Shape::new(seq.batch, dim, h, w));
    for b in 0..seq.batch {
        for c in 0..dim {
            let plane = out.plane_mut(b, c);
            for y in 0..h {
                for x in 0..w {
                    let p = (y % ph) * pw + x % pw;
                    let n = (y / ph) * nw + x / pw;
                    plane[y * w + x] = seq.data[((b * area + p) * tokens + n) * dim + c];
                }
            }
        }
    }
    Ok(out)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.batch, sa.height, sa.width) != (sb.batch, sb.height, sb.width) {
        return Err(Error::dim("concat_channels", format!("{sa} vs {sb}")));
    }
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    let (pa, pb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
    for i in 0..sa.batch {
        data.extend_from_slice(&a.data()[i * pa..(i + 1) * pa]);
        data.extend_from_slice(&b.data()[i * pb..(i + 1) * pb]);
    }
    Tensor::new(Shape::new(sa.batch, sa.channels + sb.channels, sa.height, sa.width), data)
}
