//! Colormapped depth rendering.

use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use image::{Rgb, RgbImage};

use super::dataset::image_err;
use crate::error::{Error, Result};
use crate::model::DepthMap;

/// Color of pixels without a valid depth.
pub const INVALID_COLOR: [u8; 3] = [255, 255, 0];

const PLASMA_TEXT: &str = include_str!("../../resources/plasma.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    /// Near is bright yellow, far is dark blue.
    #[default]
    PlasmaReversed,
    Grayscale,
}

impl FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "plasma-reversed" | "plasma-r" | "plasma" => Ok(Colormap::PlasmaReversed),
            "grayscale" | "gray" | "grey" => Ok(Colormap::Grayscale),
            _ => Err(Error::Config(format!("unknown colormap `{s}` (plasma-reversed, grayscale)"))),
        }
    }
}

fn parse_table(text: &str) -> Result<Vec<[u8; 3]>> {
    let mut out = Vec::with_capacity(256);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let v: Vec<u8> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Malformed { what: "colormap table", detail: format!("bad line `{line}`") })?;
        let [r, g, b] = v.as_slice() else {
            return Err(Error::Malformed { what: "colormap table", detail: format!("bad line `{line}`") });
        };
        out.push([*r, *g, *b]);
    }
    if out.len() != 256 {
        return Err(Error::Malformed {
            what: "colormap table",
            detail: format!("{} entries, expected 256", out.len()),
        });
    }
    Ok(out)
}

fn plasma() -> &'static [[u8; 3]] {
    static TABLE: OnceLock<Vec<[u8; 3]>> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(PLASMA_TEXT).expect("bundled plasma table is well formed"))
}

impl Colormap {
    /// Entry `i` of the 256-step lookup table.
    pub fn color(self, i: u8) -> [u8; 3] {
        match self {
            Colormap::PlasmaReversed => plasma()[255 - i as usize],
            Colormap::Grayscale => [i; 3],
        }
    }

    pub fn table(self) -> Vec<[u8; 3]> {
        (0..=255).map(|i| self.color(i)).collect()
    }
}

/// Table index for `v` after linear normalization to [min_m, max_m].
pub fn colormap_index(v: f32, min_m: f32, max_m: f32) -> u8 {
    let t = ((v as f64 - min_m as f64) / (max_m as f64 - min_m as f64)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

/// Renders the first map of `depth`; masked-out or non-finite pixels use
/// [`INVALID_COLOR`].
pub fn render_depth(depth: &DepthMap, min_m: f32, max_m: f32, cmap: Colormap) -> Result<RgbImage> {
    if !(max_m > min_m) || !min_m.is_finite() || !max_m.is_finite() {
        return Err(Error::Validation(format!("degenerate depth range [{min_m}, {max_m}]")));
    }
    let s = depth.values.shape();
    if s.channels != 1 || s.batch == 0 || s.height == 0 || s.width == 0 {
        return Err(Error::dim("render_depth", format!("expected Bx1xHxW, got {s}")));
    }
    let plane = depth.values.plane(0, 0);
    let mut img = RgbImage::new(s.width as u32, s.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let v = plane[i];
        let valid = v.is_finite() && depth.valid_mask.as_ref().is_none_or(|m| m[i]);
        *px = Rgb(if valid { cmap.color(colormap_index(v, min_m, max_m)) } else { INVALID_COLOR });
    }
    Ok(img)
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}
