//! Heatmap images from attribution maps (PPM always, PNG via `image`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    /// Min-max normalized gray; brightest = most important.
    #[default]
    Gray,
    /// Blue (negative) through white (zero) to red (positive), scaled by the
    /// largest magnitude.
    Diverging,
}

impl std::str::FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grey" => Ok(Colormap::Gray),
            "diverging" => Ok(Colormap::Diverging),
            other => Err(Error::Config(format!("unknown colormap {other:?}"))),
        }
    }
}

const MID_GRAY: [u8; 3] = [128, 128, 128];

/// An RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Heatmap {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::State("pixel buffer does not match image size".into()))?;
        img.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Renders `values` laid out as `image_shape` (`[H, W]` or `[C, H, W]`);
/// channel scores are summed per pixel.
pub fn render(values: &[f64], image_shape: &[usize], colormap: Colormap) -> Result<Heatmap> {
    let (c, h, w) = match *image_shape {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::Argument(format!(
                "heatmap shape must be [H,W] or [C,H,W], got {image_shape:?}"
            )))
        }
    };
    if c * h * w != values.len() || values.is_empty() {
        return Err(Error::Argument(format!(
            "{} attribution values do not fit image shape {image_shape:?}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite attribution value".into()));
    }
    let plane = h * w;
    let per_pixel: Vec<f64> = (0..plane)
        .map(|p| (0..c).map(|ch| values[ch * plane + p]).sum())
        .collect();
    let lo = per_pixel.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_pixel.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let pixels = if hi == lo {
        vec![MID_GRAY; plane]
    } else {
        match colormap {
            Colormap::Gray => per_pixel
                .iter()
                .map(|&v| {
                    let g = ((v - lo) / (hi - lo) * 255.0).round() as u8;
                    [g, g, g]
                })
                .collect(),
            Colormap::Diverging => {
                let scale = lo.abs().max(hi.abs());
                per_pixel
                    .iter()
                    .map(|&v| {
                        let t = v / scale;
                        let fade = (255.0 * (1.0 - t.abs())).round() as u8;
                        if t >= 0.0 {
                            [255, fade, fade]
                        } else {
                            [fade, fade, 255]
                        }
                    })
                    .collect()
            }
        }
    };
    Ok(Heatmap {
        width: w,
        height: h,
        pixels,
    })
}
