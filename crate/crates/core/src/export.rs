//! Windowed 8-bit PNG export of images and sinograms.

use std::path::Path;

use image::GrayImage;
use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};

/// Display window `[low, high]` mapped to gray levels 0..=255.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub low: f64,
    pub high: f64,
}

impl Window {
    /// Normalized window of the reconstruction figures, about `[-1001, 831]` HU.
    pub const RECONSTRUCTION: Window = Window { low: 0.0, high: 0.45 };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && high > low) {
            return Err(Error::Config(format!("invalid display window [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    /// Window spanning the finite range of `values`.
    pub fn full_range(values: ArrayView2<f64>) -> Self {
        let (lo, hi) = values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo.is_finite() && hi > lo {
            Self { low: lo, high: hi }
        } else {
            Self { low: 0.0, high: 1.0 }
        }
    }

    pub fn gray(&self, v: f64) -> u8 {
        let t = ((v - self.low) / (self.high - self.low)).clamp(0.0, 1.0);
        (t * 255.0).round() as u8
    }
}

/// Renders an array; `flip` puts row 0 at the bottom of the picture.
pub fn render(values: ArrayView2<f64>, window: Window, flip: bool) -> GrayImage {
    let (rows, cols) = values.dim();
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let r = if flip { rows - 1 - y as usize } else { y as usize };
        image::Luma([window.gray(values[[r, x as usize]])])
    })
}

fn save(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Writes an image with `y` pointing up.
pub fn write_image_png(image: &Image, window: Window, path: &Path) -> Result<()> {
    save(&render(image.values().view(), window, true), path)
}

/// Writes a sinogram with one row per angle, first angle on top.
pub fn write_sinogram_png(sino: &Sinogram, window: Window, path: &Path) -> Result<()> {
    save(&render(sino.values().view(), window, false), path)
}
