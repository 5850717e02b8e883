//! Dataset manifests, depth file encodings and sample loading.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{DepthSample, DepthUnit};
use crate::error::{Error, Result};
use crate::metrics::EvalCrop;
use crate::model::InputSize;
use crate::tensor::{resize_bilinear, Shape, Tensor};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthEncoding {
    /// 16-bit grayscale PNG, millimeters.
    Png16Mm,
    /// `u32` width, `u32` height, then `f32` meters, all little-endian.
    RawF32M,
}

impl DepthEncoding {
    pub fn extension(self) -> &'static str {
        match self {
            DepthEncoding::Png16Mm => "png",
            DepthEncoding::RawF32M => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rgb: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub depth_encoding: DepthEncoding,
    pub max_depth_m: f32,
    pub unit: DepthUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_crop: Option<EvalCrop>,
    /// Paths relative to the manifest's directory unless absolute.
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::Malformed { what: "dataset manifest", detail: d });
        if self.version != MANIFEST_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !(self.max_depth_m > 0.0 && self.max_depth_m.is_finite()) {
            return bad(format!("max_depth_m {} must be positive", self.max_depth_m));
        }
        if let Some(c) = &self.eval_crop {
            c.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Malformed { what: "dataset manifest", detail: e.to_string() })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn decode_err(path: &Path, detail: impl ToString) -> Error {
    Error::Decode { path: path.to_path_buf(), detail: detail.to_string() }
}

pub(crate) fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => decode_err(path, other),
    }
}

/// Reads an 8- or 16-bit image as (1, 3, H, W) in [0, 1].
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(decode_err(path, "image has a zero dimension"));
    }
    let raw = img.into_raw();
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| raw[(y * w + x) * 3 + c].clamp(0.0, 1.0)))
}

/// Writes a (1, 3, H, W) tensor in [0, 1] as 8-bit RGB PNG.
pub fn write_rgb_png(path: impl AsRef<Path>, rgb: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let s = rgb.shape();
    if s.batch != 1 || s.channels != 3 {
        return Err(Error::dim("write_rgb_png", format!("expected 1x3xHxW, got {s}")));
    }
    let mut buf = Vec::with_capacity(s.plane() * 3);
    for y in 0..s.height {
        for x in 0..s.width {
            for c in 0..3 {
                buf.push((rgb.at(0, c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let img = image::RgbImage::from_raw(s.width as u32, s.height as u32, buf).expect("buffer sized");
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}

fn check_depth(op: &'static str, depth: &Tensor) -> Result<()> {
    let s = depth.shape();
    if s.batch != 1 || s.channels != 1 || s.height == 0 || s.width == 0 {
        return Err(Error::dim(op, format!("expected a non-empty 1x1xHxW depth map, got {s}")));
    }
    Ok(())
}

/// Depth in meters to 16-bit millimeters; values beyond 65.535 m are rejected.
pub fn write_png16_depth(path: impl AsRef<Path>, depth: &Tensor) -> Result<()> {
    let path = path.as_ref();
    check_depth("write_png16_depth", depth)?;
    let s = depth.shape();
    let mut buf = Vec::with_capacity(s.plane());
    for &v in depth.data() {
        let mm = (v as f64 * 1000.0).round();
        if !(0.0..=u16::MAX as f64).contains(&mm) {
            return Err(Error::Validation(format!("depth {v} m does not fit a 16-bit millimeter PNG")));
        }
        buf.push(mm as u16);
    }
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(s.width as u32, s.height as u32, buf).expect("buffer sized");
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}

pub fn read_png16_depth(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    if !matches!(img.color(), image::ColorType::L16) {
        return Err(decode_err(path, format!("expected 16-bit grayscale, found {:?}", img.color())));
    }
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(decode_err(path, "depth image has a zero dimension"));
    }
    let data = img.into_raw().into_iter().map(|mm| (mm as f64 / 1000.0) as f32).collect();
    Tensor::new(Shape::new(1, 1, h, w), data)
}

pub fn write_raw_depth(path: impl AsRef<Path>, depth: &Tensor) -> Result<()> {
    let path = path.as_ref();
    check_depth("write_raw_depth", depth)?;
    let s = depth.shape();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    put(&(s.width as u32).to_le_bytes())?;
    put(&(s.height as u32).to_le_bytes())?;
    for v in depth.data() {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw_depth(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(decode_err(path, "raw depth file shorter than its header"));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if w == 0 || h == 0 {
        return Err(decode_err(path, "raw depth has a zero dimension"));
    }
    let body = &bytes[8..];
    if body.len() != w * h * 4 {
        return Err(decode_err(path, format!("{w}x{h} map needs {} bytes, found {}", w * h * 4, body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Tensor::new(Shape::new(1, 1, h, w), data)
}

pub fn read_depth(path: impl AsRef<Path>, encoding: DepthEncoding) -> Result<Tensor> {
    match encoding {
        DepthEncoding::Png16Mm => read_png16_depth(path),
        DepthEncoding::RawF32M => read_raw_depth(path),
    }
}

pub fn write_depth(path: impl AsRef<Path>, depth: &Tensor, encoding: DepthEncoding) -> Result<()> {
    match encoding {
        DepthEncoding::Png16Mm => write_png16_depth(path, depth),
        DepthEncoding::RawF32M => write_raw_depth(path, depth),
    }
}

/// A manifest bound to its directory and a target input size.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: DatasetManifest,
    root: PathBuf,
    input_size: Option<InputSize>,
}

impl Dataset {
    /// `input_size` resizes rgb on load; `None` keeps the stored resolution.
    pub fn open(manifest_path: impl AsRef<Path>, input_size: Option<InputSize>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let manifest = DatasetManifest::load(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { manifest, root, input_size })
    }

    pub fn from_manifest(
        manifest: DatasetManifest,
        root: impl Into<PathBuf>,
        input_size: Option<InputSize>,
    ) -> Result<Self> {
        manifest.validate()?;
        Ok(Dataset { manifest, root: root.into(), input_size })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_sample(&self, index: usize) -> Result<DepthSample> {
        let entry = self
            .manifest
            .entries
            .get(index)
            .ok_or_else(|| Error::Validation(format!("sample {index} is out of range")))?;
        load_sample(&self.resolve(&entry.rgb), &self.resolve(&entry.depth), &self.manifest, self.input_size)
    }

    /// Samples in manifest order, labeled by their rgb path.
    pub fn iter_labeled(&self) -> impl Iterator<Item = (String, Result<DepthSample>)> + '_ {
        self.manifest.entries.iter().enumerate().map(|(i, e)| (e.rgb.display().to_string(), self.load_sample(i)))
    }
}

/// Decodes one rgb/depth pair; rgb is bilinearly resized to `input_size`.
pub fn load_sample(
    rgb_path: &Path,
    depth_path: &Path,
    manifest: &DatasetManifest,
    input_size: Option<InputSize>,
) -> Result<DepthSample> {
    let mut rgb = read_rgb(rgb_path)?;
    let depth = read_depth(depth_path, manifest.depth_encoding)?;
    let (rs, ds) = (rgb.shape(), depth.shape());
    let ra = rs.width as f64 / rs.height as f64;
    let da = ds.width as f64 / ds.height as f64;
    if (ra - da).abs() > 0.02 * da {
        return Err(Error::Validation(format!(
            "rgb {}x{} and depth {}x{} differ in aspect ratio",
            rs.width, rs.height, ds.width, ds.height
        )));
    }
    if let Some(size) = input_size {
        if (rs.width, rs.height) != (size.width, size.height) {
            rgb = resize_bilinear(&rgb, size.height, size.width);
        }
    }
    if let Some(bad) = depth.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(decode_err(depth_path, format!("depth value {bad} is not a non-negative number")));
    }
    DepthSample::new(rgb, depth, manifest.unit, manifest.max_depth_m)
}
