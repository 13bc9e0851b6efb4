//! Ellipse phantoms with closed-form line integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, ScanGeometry, DOMAIN_HALF_WIDTH};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes along the ellipse's own x and y directions.
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation of the ellipse axes, radians.
    pub rotation: f64,
    /// Added to every point inside.
    pub value: f64,
}

impl Ellipse {
    pub fn disk(center: [f64; 2], radius: f64, value: f64) -> Self {
        Self { center, semi_axes: [radius, radius], rotation: 0.0, value }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.semi_axes).all(|v| v.is_finite())
            && self.rotation.is_finite()
            && self.value.is_finite();
        if !finite || self.semi_axes.iter().any(|&a| a <= 0.0) {
            return Err(Error::Config(format!("invalid ellipse {self:?}")));
        }
        Ok(())
    }

    /// Strict interior test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.rotation.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) < 1.0
    }

    /// Integral of the indicator times `value` along the beam `p·ω(φ) = s`.
    pub fn line_integral(&self, s: f64, phi: f64) -> f64 {
        let (sin, cos) = phi.sin_cos();
        let shifted = s - (self.center[0] * cos + self.center[1] * sin);
        let rel = phi - self.rotation;
        let [a, b] = self.semi_axes;
        let r2 = (a * rel.cos()).powi(2) + (b * rel.sin()).powi(2);
        let d = r2 - shifted * shifted;
        if d <= 0.0 {
            0.0
        } else {
            self.value * 2.0 * a * b * d.sqrt() / r2
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EllipsePhantom {
    ellipses: Vec<Ellipse>,
}

impl EllipsePhantom {
    pub fn new(ellipses: Vec<Ellipse>) -> Result<Self> {
        ellipses.iter().try_for_each(Ellipse::validate)?;
        Ok(Self { ellipses })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ellipses(&self) -> &[Ellipse] {
        &self.ellipses
    }

    /// Centered disk of the given radius and value.
    pub fn disk(radius: f64, value: f64) -> Result<Self> {
        Self::new(vec![Ellipse::disk([0.0, 0.0], radius, value)])
    }

    /// The original Shepp–Logan head phantom, defined on `[-1, 1]²` and
    /// scaled here to `[-half_width, half_width]²`.
    pub fn shepp_logan(half_width: f64) -> Self {
        // (x0, y0, a, b, rotation in degrees, value)
        const TABLE: [[f64; 6]; 10] = [
            [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
            [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
            [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
            [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
            [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
            [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
            [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
            [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
            [0.0, -0.605, 0.023, 0.023, 0.0, 0.01],
            [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
        ];
        let ellipses = TABLE
            .iter()
            .map(|&[x0, y0, a, b, deg, value]| Ellipse {
                center: [x0 * half_width, y0 * half_width],
                semi_axes: [a * half_width, b * half_width],
                rotation: deg.to_radians(),
                value,
            })
            .collect();
        Self { ellipses }
    }

    /// Shepp–Logan on the dataset's `[-0.13, 0.13]²` domain.
    pub fn shepp_logan_default() -> Self {
        Self::shepp_logan(DOMAIN_HALF_WIDTH)
    }

    /// Every ellipse value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let ellipses = self.ellipses.iter().map(|e| Ellipse { value: e.value * factor, ..*e }).collect();
        Self { ellipses }
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum()
    }

    /// Sum of the values of the ellipses containing each pixel center.
    pub fn rasterize(&self, grid: &ImageGrid) -> Image {
        Image::from_fn(*grid, ImageUnit::Dimensionless, |x, y| self.value_at(x, y))
    }

    pub fn line_integral(&self, s: f64, phi: f64) -> f64 {
        self.ellipses.iter().map(|e| e.line_integral(s, phi)).sum()
    }

    /// Exact line integrals over the whole geometry.
    pub fn analytic_sinogram(&self, geom: &ScanGeometry) -> Sinogram {
        let values = ndarray::Array2::from_shape_fn(geom.shape(), |(i, k)| {
            self.line_integral(geom.detector_positions()[k], geom.angles()[i])
        });
        Sinogram::new(geom.clone(), values, SinogramUnit::LineIntegral).expect("finite analytic sinogram")
    }
}
