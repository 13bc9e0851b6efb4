//! Full-reference quality metrics: PSNR over the ground-truth data range and
//! windowed SSIM.
//!
//! SSIM uses every fully interior 7×7 window (stride 1) with uniform weights,
//! population (divide-by-49) variances, `K1 = 0.01`, `K2 = 0.03` and
//! `L = max(ground truth)`. Both metrics are asymmetric: the second argument
//! is the reference.

use std::path::Path;

use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes(recon: ArrayView2<f64>, gt: ArrayView2<f64>) -> Result<()> {
    if recon.dim() != gt.dim() {
        return Err(Error::Contract(format!("shape mismatch: {:?} vs {:?}", recon.dim(), gt.dim())));
    }
    if gt.is_empty() {
        return Err(Error::Contract("empty images".into()));
    }
    Ok(())
}

pub fn mse(recon: ArrayView2<f64>, gt: ArrayView2<f64>) -> Result<f64> {
    check_shapes(recon, gt)?;
    let sum = Zip::from(&recon).and(&gt).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
    Ok(sum / gt.len() as f64)
}

/// `10·log10(range(gt)² / MSE)`; `+∞` when the images are identical.
pub fn psnr_values(recon: ArrayView2<f64>, gt: ArrayView2<f64>) -> Result<f64> {
    let err = mse(recon, gt)?;
    let (lo, hi) = gt.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range == 0.0 {
        return Err(Error::UndefinedMetric("PSNR of a constant ground truth".into()));
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / err).log10())
}

pub fn psnr(recon: &Image, gt: &Image) -> Result<f64> {
    psnr_values(recon.values().view(), gt.values().view())
}

pub fn ssim_values(recon: ArrayView2<f64>, gt: ArrayView2<f64>) -> Result<f64> {
    check_shapes(recon, gt)?;
    let (rows, cols) = gt.dim();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Contract(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let l = gt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if l == 0.0 {
        return Err(Error::UndefinedMetric("SSIM with dynamic range L = max(gt) = 0".into()));
    }
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for r in 0..=rows - SSIM_WINDOW {
        for c in 0..=cols - SSIM_WINDOW {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in r..r + SSIM_WINDOW {
                for j in c..c + SSIM_WINDOW {
                    let x = recon[[i, j]];
                    let y = gt[[i, j]];
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    let windows = (rows - SSIM_WINDOW + 1) * (cols - SSIM_WINDOW + 1);
    Ok(total / windows as f64)
}

pub fn ssim(recon: &Image, gt: &Image) -> Result<f64> {
    ssim_values(recon.values().view(), gt.values().view())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-sample metrics and their arithmetic means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: Vec<SampleMetrics>,
}

impl MetricReport {
    pub fn push(&mut self, sample: SampleMetrics) {
        self.samples.push(sample);
    }

    /// `None` for an empty report.
    pub fn mean_psnr(&self) -> Option<f64> {
        (!self.samples.is_empty())
            .then(|| self.samples.iter().map(|s| s.psnr_db).sum::<f64>() / self.samples.len() as f64)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        (!self.samples.is_empty())
            .then(|| self.samples.iter().map(|s| s.ssim).sum::<f64>() / self.samples.len() as f64)
    }

    /// CSV with header `index,psnr_db,ssim`, one row per sample and a final
    /// `mean` row (empty fields for an empty report). Infinite PSNR is `inf`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "psnr_db", "ssim"]).expect("in-memory write");
        for s in &self.samples {
            w.write_record([s.index.to_string(), fmt_value(s.psnr_db), fmt_value(s.ssim)]).expect("in-memory write");
        }
        let opt = |v: Option<f64>| v.map(fmt_value).unwrap_or_default();
        w.write_record(["mean".to_string(), opt(self.mean_psnr()), opt(self.mean_ssim())]).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}
