//! Image grids, parallel-beam scan geometry and the shared coordinate conventions.
//!
//! All lengths are in meters. A beam is the line `{p : p·ω(φ) = s}`, walked by
//! `t` along `ω⊥(φ)`. Image arrays are indexed `[row, col]` with row 0 at the
//! bottom (`y = -extent`) and col 0 at the left (`x = -extent`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Half-width of the square image domain used throughout the dataset.
pub const DOMAIN_HALF_WIDTH: f64 = 0.13;
/// Side length of ground truth and reconstruction images.
pub const RECONSTRUCTION_SIZE: usize = 362;
/// Side length of the upscaled image the measurements are simulated from.
pub const SIMULATION_SIZE: usize = 1000;
pub const DEFAULT_NUM_ANGLES: usize = 1000;
pub const DEFAULT_NUM_DETECTORS: usize = 513;

#[inline]
pub fn omega(phi: f64) -> [f64; 2] {
    [phi.cos(), phi.sin()]
}

#[inline]
pub fn omega_perp(phi: f64) -> [f64; 2] {
    [-phi.sin(), phi.cos()]
}

/// Point `s·ω(φ) + t·ω⊥(φ)` on the beam with offset `s` and angle `phi`.
#[inline]
pub fn beam_point(s: f64, phi: f64, t: f64) -> [f64; 2] {
    let (sin, cos) = phi.sin_cos();
    [s * cos - t * sin, s * sin + t * cos]
}

/// Smallest odd detector count whose pitch resolves a `image_size`-pixel image
/// along its diagonal.
pub fn nyquist_detector_count(image_size: usize) -> usize {
    let min = (std::f64::consts::SQRT_2 * image_size as f64).ceil() as usize;
    if min % 2 == 1 {
        min
    } else {
        min + 1
    }
}

/// Square pixel grid on `[-extent, extent]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImageGrid")]
pub struct ImageGrid {
    width: usize,
    height: usize,
    extent: f64,
}

#[derive(Deserialize)]
struct RawImageGrid {
    width: usize,
    height: usize,
    extent: f64,
}

impl TryFrom<RawImageGrid> for ImageGrid {
    type Error = Error;

    fn try_from(raw: RawImageGrid) -> Result<Self> {
        ImageGrid::new(raw.width, raw.height, raw.extent)
    }
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, extent: f64) -> Result<Self> {
        if width != height {
            return Err(Error::Config(format!("grid must be square, got {width}x{height}")));
        }
        if width == 0 {
            return Err(Error::Config("grid must have at least one pixel".into()));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { width, height, extent })
    }

    pub fn square(size: usize, extent: f64) -> Result<Self> {
        Self::new(size, size, extent)
    }

    /// The 362² grid of ground truths and reconstructions.
    pub fn reconstruction() -> Self {
        Self { width: RECONSTRUCTION_SIZE, height: RECONSTRUCTION_SIZE, extent: DOMAIN_HALF_WIDTH }
    }

    /// The 1000² grid measurements are simulated on.
    pub fn simulation() -> Self {
        Self { width: SIMULATION_SIZE, height: SIMULATION_SIZE, extent: DOMAIN_HALF_WIDTH }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// `(rows, cols)`, the shape of arrays living on this grid.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_pitch(&self) -> f64 {
        2.0 * self.extent / self.width as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_pitch().powi(2)
    }

    /// Physical `(x, y)` of the center of pixel `[row, col]`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let h = self.pixel_pitch();
        [-self.extent + (col as f64 + 0.5) * h, -self.extent + (row as f64 + 0.5) * h]
    }

    pub fn same_extent(&self, other: &ImageGrid) -> bool {
        (self.extent - other.extent).abs() <= 1e-12 * self.extent.max(other.extent)
    }
}

/// How the angles partition `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// `φ_i = (i + ½)·π/N`, cell midpoints.
    Midpoint,
    /// `φ_i = i·π/N`, left cell edges.
    Endpoint,
}

/// Parallel-beam sampling of the sinogram domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScanGeometry")]
pub struct ScanGeometry {
    num_angles: usize,
    angles: Vec<f64>,
    num_detectors: usize,
    detector_positions: Vec<f64>,
    detector_half_length: f64,
    angle_convention: AngleConvention,
}

#[derive(Deserialize)]
struct RawScanGeometry {
    num_angles: usize,
    angles: Vec<f64>,
    num_detectors: usize,
    detector_positions: Vec<f64>,
    detector_half_length: f64,
    angle_convention: AngleConvention,
}

impl TryFrom<RawScanGeometry> for ScanGeometry {
    type Error = Error;

    fn try_from(raw: RawScanGeometry) -> Result<Self> {
        let geom = ScanGeometry::with_convention(
            raw.num_angles,
            raw.num_detectors,
            raw.detector_half_length,
            raw.angle_convention,
        )?;
        if geom.angles != raw.angles || geom.detector_positions != raw.detector_positions {
            return Err(Error::Config(
                "serialized angles or detector positions disagree with the geometry parameters".into(),
            ));
        }
        Ok(geom)
    }
}

impl ScanGeometry {
    /// Uniform geometry with midpoint angles on `[0, π)` and `num_detectors`
    /// equal cells covering `[-half_length, half_length]`.
    pub fn parallel(num_angles: usize, num_detectors: usize, detector_half_length: f64) -> Result<Self> {
        Self::with_convention(num_angles, num_detectors, detector_half_length, AngleConvention::Midpoint)
    }

    pub fn with_convention(
        num_angles: usize,
        num_detectors: usize,
        detector_half_length: f64,
        angle_convention: AngleConvention,
    ) -> Result<Self> {
        if num_angles == 0 || num_detectors == 0 {
            return Err(Error::Config(format!(
                "geometry needs at least one angle and detector, got {num_angles}x{num_detectors}"
            )));
        }
        if !(detector_half_length.is_finite() && detector_half_length > 0.0) {
            return Err(Error::Config(format!(
                "detector half-length must be positive, got {detector_half_length}"
            )));
        }
        let step = std::f64::consts::PI / num_angles as f64;
        let offset = match angle_convention {
            AngleConvention::Midpoint => 0.5,
            AngleConvention::Endpoint => 0.0,
        };
        let angles = (0..num_angles).map(|i| (i as f64 + offset) * step).collect();
        let pitch = 2.0 * detector_half_length / num_detectors as f64;
        let center = (num_detectors as f64 - 1.0) / 2.0;
        let detector_positions = (0..num_detectors).map(|k| (k as f64 - center) * pitch).collect();
        Ok(Self {
            num_angles,
            angles,
            num_detectors,
            detector_positions,
            detector_half_length,
            angle_convention,
        })
    }

    /// A detector wide enough to see every beam crossing an image square of
    /// the given half-width.
    pub fn covering(grid_extent: f64, num_angles: usize, num_detectors: usize) -> Result<Self> {
        Self::parallel(num_angles, num_detectors, std::f64::consts::SQRT_2 * grid_extent)
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_positions(&self) -> &[f64] {
        &self.detector_positions
    }

    pub fn detector_half_length(&self) -> f64 {
        self.detector_half_length
    }

    pub fn detector_pitch(&self) -> f64 {
        2.0 * self.detector_half_length / self.num_detectors as f64
    }

    pub fn angle_step(&self) -> f64 {
        std::f64::consts::PI / self.num_angles as f64
    }

    pub fn angle_convention(&self) -> AngleConvention {
        self.angle_convention
    }

    /// `(angles, detectors)`, the shape of sinograms on this geometry.
    pub fn shape(&self) -> (usize, usize) {
        (self.num_angles, self.num_detectors)
    }

    /// Fractional detector index of offset `s`; detector `k` sits at index `k`.
    #[inline]
    pub fn detector_coordinate(&self, s: f64) -> f64 {
        s / self.detector_pitch() + (self.num_detectors as f64 - 1.0) / 2.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("geometry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid geometry document: {e}")))
    }

    /// SHA-256 (hex) of the JSON serialization; identifies the geometry in manifests.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// 1000 midpoint angles on `[0, π)` and 513 detectors spanning `±√2·0.13 m`,
/// the diagonal of the image square.
pub fn make_default_geometry() -> ScanGeometry {
    ScanGeometry::covering(DOMAIN_HALF_WIDTH, DEFAULT_NUM_ANGLES, DEFAULT_NUM_DETECTORS)
        .expect("default geometry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    #[test]
    fn default_geometry_shape() {
        let g = make_default_geometry();
        assert_eq!(g.num_angles(), 1000);
        assert_eq!(g.num_detectors(), 513);
        assert_eq!(g.detector_positions()[256], 0.0);
        assert!((g.detector_pitch() - 2.0 * SQRT_2 * 0.13 / 513.0).abs() < 1e-18);
        assert!((g.detector_pitch() - 7.167e-4).abs() < 1e-6);
        assert_eq!(g.angle_convention(), AngleConvention::Midpoint);
    }

    #[test]
    fn angles_are_uniform_midpoints() {
        let g = make_default_geometry();
        let step = PI / 1000.0;
        assert!((g.angles()[0] - step / 2.0).abs() < 1e-15);
        assert!(g.angles().windows(2).all(|w| w[1] > w[0]));
        for w in g.angles().windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
        assert!(*g.angles().last().unwrap() < PI);
    }

    #[test]
    fn detectors_are_symmetric() {
        let g = make_default_geometry();
        let s = g.detector_positions();
        let n = s.len();
        for k in 0..n {
            assert_eq!(s[k], -s[n - 1 - k]);
        }
        assert!((s[n - 1] + g.detector_pitch() / 2.0 - g.detector_half_length()).abs() < 1e-15);
    }

    #[test]
    fn nyquist_count_for_reconstruction_grid() {
        // √2·362 ≈ 511.95, so the smallest odd count above it is 513.
        assert_eq!(nyquist_detector_count(362), 513);
        assert_eq!(nyquist_detector_count(362), DEFAULT_NUM_DETECTORS);
    }

    #[test]
    fn beam_point_examples() {
        assert_eq!(beam_point(1.0, 0.0, 0.0), [1.0, 0.0]);
        assert_eq!(beam_point(0.0, 0.0, 1.0), [0.0, 1.0]);
        let p = beam_point(1.0, FRAC_PI_2, 1.0);
        assert!((p[0] + 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beam_directions_are_orthonormal() {
        for &phi in make_default_geometry().angles() {
            let w = omega(phi);
            let wp = omega_perp(phi);
            assert!((w[0] * wp[0] + w[1] * wp[1]).abs() < 1e-12);
            assert!((w[0].hypot(w[1]) - 1.0).abs() < 1e-12);
            assert!((wp[0].hypot(wp[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geometry_json_round_trip_is_exact() {
        let g = make_default_geometry();
        let back = ScanGeometry::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        for (a, b) in g.angles().iter().zip(back.angles()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(g.hash(), back.hash());
    }

    #[test]
    fn tampered_geometry_is_rejected() {
        let g = ScanGeometry::parallel(4, 5, 1.0).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        v["angles"][1] = serde_json::json!(0.3);
        assert!(ScanGeometry::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn grid_invariants() {
        assert!(ImageGrid::new(3, 4, 1.0).is_err());
        assert!(ImageGrid::new(4, 4, 0.0).is_err());
        assert!(ImageGrid::new(0, 0, 1.0).is_err());
        let g = ImageGrid::reconstruction();
        assert!((g.pixel_pitch() - 0.26 / 362.0).abs() < 1e-18);
        let c = g.pixel_center(0, 0);
        assert!((c[0] + 0.13 - g.pixel_pitch() / 2.0).abs() < 1e-15);
        assert_eq!(ImageGrid::simulation().shape(), (1000, 1000));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(ScanGeometry::parallel(0, 5, 1.0).is_err());
        assert!(ScanGeometry::parallel(5, 5, -1.0).is_err());
    }
}
