//! Procedural rgb/depth fixtures with known geometry.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{write_depth, write_rgb_png, DatasetManifest, DepthEncoding, ManifestEntry, MANIFEST_VERSION};
use crate::augment::DepthUnit;
use crate::error::{Error, Result};
use crate::metrics::EvalCrop;
use crate::tensor::{Shape, Tensor};

/// A scene in normalized image coordinates; depths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scene {
    Plane {
        depth: f32,
    },
    /// Axis-aligned box `[top, bottom) x [left, right)` in front of a plane.
    Box {
        plane: f32,
        depth: f32,
        top: f32,
        bottom: f32,
        left: f32,
        right: f32,
    },
    /// Depth varying linearly from `near` at the bottom row to `far` at the top.
    Ramp {
        near: f32,
        far: f32,
    },
}

impl Scene {
    pub fn depth_at(&self, y: usize, x: usize, height: usize, width: usize) -> f32 {
        let v = (y as f32 + 0.5) / height as f32;
        let u = (x as f32 + 0.5) / width as f32;
        match *self {
            Scene::Plane { depth } => depth,
            Scene::Box { plane, depth, top, bottom, left, right } => {
                if (top..bottom).contains(&v) && (left..right).contains(&u) {
                    depth
                } else {
                    plane
                }
            }
            Scene::Ramp { near, far } => {
                if height == 1 {
                    near
                } else {
                    far + (near - far) * y as f32 / (height - 1) as f32
                }
            }
        }
    }

    pub fn depth_map(&self, height: usize, width: usize) -> Tensor {
        Tensor::from_fn(Shape::new(1, 1, height, width), |_, _, y, x| quantize_mm(self.depth_at(y, x, height, width)))
    }

    /// Shaded checkerboard whose brightness falls with depth.
    pub fn rgb(&self, height: usize, width: usize, max_depth: f32, tint: [f32; 3]) -> Tensor {
        Tensor::from_fn(Shape::new(1, 3, height, width), |_, c, y, x| {
            let d = self.depth_at(y, x, height, width);
            let shade = 1.0 - 0.7 * (d / max_depth).clamp(0.0, 1.0);
            let check = if (y / 8 + x / 8) % 2 == 0 { 1.0 } else { 0.8 };
            (shade * check * tint[c]).clamp(0.0, 1.0)
        })
    }
}

fn quantize_mm(d: f32) -> f32 {
    ((d as f64 * 1000.0).round() / 1000.0) as f32
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub width: usize,
    pub height: usize,
    pub encoding: DepthEncoding,
    pub unit: DepthUnit,
    pub max_depth_m: f32,
    /// Use this scene for every entry instead of drawing one per entry.
    pub scene: Option<Scene>,
    pub eval_crop: Option<EvalCrop>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            width: 256,
            height: 192,
            encoding: DepthEncoding::Png16Mm,
            unit: DepthUnit::IndoorCm,
            max_depth_m: 10.0,
            scene: None,
            eval_crop: None,
        }
    }
}

/// Draws the scene for entry `index` under `seed`.
pub fn random_scene(seed: u64, index: u64, max_depth: f32) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let depth = |rng: &mut ChaCha8Rng, lo: f32, hi: f32| quantize_mm(rng.gen_range(lo..hi));
    let (lo, hi) = (0.1 * max_depth, 0.8 * max_depth);
    match rng.gen_range(0..3) {
        0 => Scene::Plane { depth: depth(&mut rng, lo, hi) },
        1 => {
            let plane = depth(&mut rng, 0.5 * (lo + hi), hi);
            let top = rng.gen_range(0.1..0.4);
            let left = rng.gen_range(0.1..0.4);
            Scene::Box {
                plane,
                depth: depth(&mut rng, lo, 0.5 * (lo + hi)),
                top,
                bottom: top + rng.gen_range(0.2..0.5),
                left,
                right: left + rng.gen_range(0.2..0.5),
            }
        }
        _ => {
            let near = depth(&mut rng, lo, 0.5 * (lo + hi));
            Scene::Ramp { near, far: depth(&mut rng, 0.5 * (lo + hi), hi) }
        }
    }
}

pub fn generate_synthetic_dataset(n: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    generate_synthetic_dataset_with(n, seed, out_dir, &SynthOptions::default())
}

/// Writes `rgb/NNNN.png`, `depth/NNNN.{png,bin}` and `manifest.json`.
pub fn generate_synthetic_dataset_with(
    n: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
    opts: &SynthOptions,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::Validation("synthetic dataset needs at least one sample".into()));
    }
    if opts.width == 0 || opts.height == 0 {
        return Err(Error::Validation(format!("image size {}x{} is empty", opts.width, opts.height)));
    }
    let out = out_dir.as_ref();
    for sub in ["rgb", "depth"] {
        let p = out.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let scene = opts.scene.unwrap_or_else(|| random_scene(seed, i as u64, opts.max_depth_m));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_7157);
        rng.set_stream(i as u64);
        let tint = [rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0)];
        let rgb_rel = format!("rgb/{i:04}.png");
        let depth_rel = format!("depth/{i:04}.{}", opts.encoding.extension());
        write_rgb_png(out.join(&rgb_rel), &scene.rgb(opts.height, opts.width, opts.max_depth_m, tint))?;
        write_depth(out.join(&depth_rel), &scene.depth_map(opts.height, opts.width), opts.encoding)?;
        entries.push(ManifestEntry { rgb: rgb_rel.into(), depth: depth_rel.into() });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        depth_encoding: opts.encoding,
        max_depth_m: opts.max_depth_m,
        unit: opts.unit,
        eval_crop: opts.eval_crop,
        entries,
    };
    manifest.validate()?;
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}
