//! Scalar fields on the image and sinogram domains.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, ScanGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageUnit {
    /// Hounsfield units.
    Hu,
    /// Linear attenuation in 1/m.
    MuPerM,
    /// Attenuation divided by `mu_max`, clipped to `[0, 1]` for ground truths.
    Normalized,
    /// Unitless values, e.g. analytic phantoms.
    Dimensionless,
}

/// Image on an [`ImageGrid`]; `values[[row, col]]`, row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: ImageGrid,
    values: Array2<f64>,
    unit: ImageUnit,
}

impl Image {
    pub fn new(grid: ImageGrid, values: Array2<f64>, unit: ImageUnit) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::Config(format!(
                "image values have shape {:?}, grid expects {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("image contains non-finite value {v}")));
        }
        Ok(Self { grid, values, unit })
    }

    pub fn zeros(grid: ImageGrid, unit: ImageUnit) -> Self {
        Self { grid, values: Array2::zeros(grid.shape()), unit }
    }

    pub fn from_fn(grid: ImageGrid, unit: ImageUnit, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn(grid.shape(), |(r, c)| {
            let [x, y] = grid.pixel_center(r, c);
            f(x, y)
        });
        Self { grid, values, unit }
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn unit(&self) -> ImageUnit {
        self.unit
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Same values re-tagged with another unit; no conversion is applied.
    pub fn with_unit(mut self, unit: ImageUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn map(&self, unit: ImageUnit, f: impl FnMut(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.mapv(f), unit }
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinogramUnit {
    /// `∫ μ dt`, dimensionless.
    LineIntegral,
    /// `-ln(N1/N0) / mu_max`, the stored observation.
    NormalizedPostLog,
}

/// Values indexed `[angle, detector]` on a [`ScanGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: ScanGeometry,
    values: Array2<f64>,
    unit: SinogramUnit,
}

impl Sinogram {
    pub fn new(geometry: ScanGeometry, values: Array2<f64>, unit: SinogramUnit) -> Result<Self> {
        if values.dim() != geometry.shape() {
            return Err(Error::Config(format!(
                "sinogram values have shape {:?}, geometry expects {:?}",
                values.dim(),
                geometry.shape()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("sinogram contains non-finite value {v}")));
        }
        Ok(Self { geometry, values, unit })
    }

    pub fn zeros(geometry: ScanGeometry, unit: SinogramUnit) -> Self {
        let values = Array2::zeros(geometry.shape());
        Self { geometry, values, unit }
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn unit(&self) -> SinogramUnit {
        self.unit
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn map(&self, unit: SinogramUnit, f: impl FnMut(f64) -> f64) -> Self {
        Self { geometry: self.geometry.clone(), values: self.values.mapv(f), unit }
    }
}
