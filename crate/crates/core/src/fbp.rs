//! Filtered back-projection with the band-limited ramp (Ram-Lak) filter.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, ScanGeometry};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};
use crate::physics::Measurement;
use crate::projector::back_project_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    /// `|ν|` up to the detector Nyquist frequency, no frequency scaling.
    RamLak,
}

impl std::str::FromStr for RampFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ram-lak" | "ramlak" => Ok(RampFilter::RamLak),
            other => Err(Error::Config(format!("unknown filter {other:?}; only ram-lak is available"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpConfig {
    pub filter: RampFilter,
    /// Zero-padded length of each detector row; `None` picks the next power
    /// of two at or above twice the detector count.
    pub padding: Option<usize>,
    pub output_grid: ImageGrid,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self { filter: RampFilter::RamLak, padding: None, output_grid: ImageGrid::reconstruction() }
    }
}

impl FbpConfig {
    pub fn padded_length(&self, num_detectors: usize) -> Result<usize> {
        let min = 2 * num_detectors;
        match self.padding {
            None => Ok(min.next_power_of_two()),
            Some(p) if p >= min => Ok(p),
            Some(p) => Err(Error::Config(format!(
                "padding {p} is shorter than twice the detector count ({min})"
            ))),
        }
    }
}

/// Frequency response of the ramp filter on a padded row of length `len`,
/// built from the band-limited spatial kernel
/// `h(0) = 1/(4Δs²)`, `h(n odd) = -1/(π² n² Δs²)`, `h(n even) = 0`
/// and scaled by `Δs` so that filtering approximates continuous convolution.
pub fn ramp_response(len: usize, pitch: f64) -> Vec<f64> {
    let mut kernel: Vec<Complex<f64>> = (0..len)
        .map(|j| {
            let n = if j <= len / 2 { j as i64 } else { j as i64 - len as i64 };
            let h = if n == 0 {
                1.0 / (4.0 * pitch * pitch)
            } else if n % 2 != 0 {
                -1.0 / (std::f64::consts::PI * std::f64::consts::PI * (n * n) as f64 * pitch * pitch)
            } else {
                0.0
            };
            Complex::new(h * pitch, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    kernel.into_iter().map(|c| c.re).collect()
}

struct RowFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    response: Vec<f64>,
}

impl RowFilter {
    fn new(len: usize, pitch: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            response: ramp_response(len, pitch),
        }
    }

    fn apply(&self, row: &mut [f64]) {
        let len = self.response.len();
        let mut buf: Vec<Complex<f64>> = row.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(len, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / len as f64;
        for (out, b) in row.iter_mut().zip(&buf) {
            *out = b.re * norm;
        }
    }
}

/// Ramp-filters every detector row of the sinogram.
pub fn filter_sinogram(sino: &Sinogram, config: &FbpConfig) -> Result<Sinogram> {
    let geom = sino.geometry();
    let (na, nd) = geom.shape();
    let filter = RowFilter::new(config.padded_length(nd)?, geom.detector_pitch());
    let mut data = sino.values().as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    data.par_chunks_mut(nd).for_each(|row| filter.apply(row));
    Sinogram::new(geom.clone(), Array2::from_shape_vec((na, nd), data).expect("shape"), sino.unit())
}

fn check_coverage(geom: &ScanGeometry, grid: &ImageGrid) -> Result<()> {
    let needed = std::f64::consts::SQRT_2 * grid.extent();
    if needed > geom.detector_half_length() * (1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "detector half-length {} does not cover the output grid diagonal {}",
            geom.detector_half_length(),
            needed
        )));
    }
    Ok(())
}

/// FBP of a sinogram of either unit; the output is not clipped.
pub fn fbp_sinogram(sino: &Sinogram, config: &FbpConfig) -> Result<Image> {
    let geom = sino.geometry();
    check_coverage(geom, &config.output_grid)?;
    let filtered = filter_sinogram(sino, config)?;
    let smeared = back_project_linear(&filtered, geom, &config.output_grid)?;
    let unit = match sino.unit() {
        SinogramUnit::NormalizedPostLog => ImageUnit::Normalized,
        SinogramUnit::LineIntegral => ImageUnit::Dimensionless,
    };
    let weight = geom.angle_step();
    Ok(smeared.map(unit, |v| v * weight))
}

/// Baseline reconstruction of a normalized post-log measurement.
pub fn fbp_reconstruct(meas: &Measurement, config: &FbpConfig) -> Result<Image> {
    fbp_sinogram(meas.sinogram(), config)
}
