//! From stored CT slices to normalized ground-truth images.
//!
//! The chain is: center crop 512² → 362², rescale to HU, add `U[0, 1)`
//! dequantization noise, convert HU to linear attenuation, divide by
//! `mu_max` and clip to `[0, 1]`.
//!
//! Slices are read from a flat intermediate format: `<name>.raw` holds
//! 512·512 little-endian `i16` pixels in row-major order and `<name>.json`
//! holds [`SliceMeta`]. A minimal DICOM reader lives in [`dicom`].

pub mod dicom;

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, RECONSTRUCTION_SIZE};
use crate::image::{Image, ImageUnit};
use crate::rng::SliceRng;

pub const SOURCE_SIZE: usize = 512;
/// Rows and columns dropped on each side by the center crop.
pub const CROP_MARGIN: usize = (SOURCE_SIZE - RECONSTRUCTION_SIZE) / 2;
/// Largest HU value of the standard 12-bit encoding, `2^12 - 1 - 1024`.
pub const MAX_ENCODED_HU: f64 = 3071.0;

/// LIDC/IDRI patient numbers whose scan circle is smaller than the crop.
pub const EXCLUDED_PATIENT_IDS: [&str; 13] = [
    "0004", "0032", "0102", "0116", "0120", "0289", "0368", "0418", "0541", "0798", "0926", "0972", "1000",
];

/// Accepts `"0004"`, `"LIDC-IDRI-0004"` or `"4"`.
pub fn is_excluded_patient(patient_id: &str) -> bool {
    let digits = patient_id.rsplit('-').next().unwrap_or(patient_id);
    match digits.parse::<u32>() {
        Ok(n) => EXCLUDED_PATIENT_IDS.iter().any(|id| id.parse::<u32>() == Ok(n)),
        Err(_) => false,
    }
}

/// Attenuation and photon-count parameters of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    /// 1/m
    pub mu_water: f64,
    /// 1/m
    pub mu_air: f64,
    /// Mean photons per detector pixel before attenuation.
    pub n0: f64,
    /// Floor applied to sampled photon counts.
    pub min_photon_count: f64,
    /// Std-dev of additive Gaussian detector noise, in photons.
    pub sigma_detector: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self { mu_water: 20.0, mu_air: 0.02, n0: 4096.0, min_photon_count: 0.1, sigma_detector: 0.0 }
    }
}

impl PhysicsConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.n0.is_finite() && self.n0 > 0.0) {
            return Err(Error::Config(format!("N0 must be positive, got {}", self.n0)));
        }
        if !(self.min_photon_count.is_finite() && self.min_photon_count > 0.0) {
            return Err(Error::Config(format!("minimum photon count must be positive, got {}", self.min_photon_count)));
        }
        if !(self.sigma_detector.is_finite() && self.sigma_detector >= 0.0) {
            return Err(Error::Config(format!("detector noise sigma must be >= 0, got {}", self.sigma_detector)));
        }
        if !(self.mu_water > self.mu_air) {
            return Err(Error::Config("mu_water must exceed mu_air".into()));
        }
        Ok(())
    }

    /// Attenuation of the largest encodable HU value, the normalization constant.
    pub fn mu_max(&self) -> f64 {
        self.hu_to_mu(MAX_ENCODED_HU)
    }

    /// `HU·(μw − μa)/1000 + μw`, evaluated as a blend of the two anchors so
    /// that water and air map exactly onto `mu_water` and `mu_air`.
    #[inline]
    pub fn hu_to_mu(&self, hu: f64) -> f64 {
        let t = hu / 1000.0;
        self.mu_water * (1.0 + t) - self.mu_air * t
    }

    #[inline]
    pub fn mu_to_hu(&self, mu: f64) -> f64 {
        1000.0 * (mu - self.mu_water) / (self.mu_water - self.mu_air)
    }

    #[inline]
    pub fn normalize_clip(&self, mu: f64) -> f64 {
        let r = mu / self.mu_max();
        if r <= 0.0 {
            0.0
        } else if r <= 1.0 {
            r
        } else {
            1.0
        }
    }

    /// Largest post-log observation a clamped count can produce.
    pub fn measurement_cap(&self) -> f64 {
        -(self.min_photon_count / self.n0).ln() / self.mu_max()
    }
}

/// Free-function forms with the default constants.
pub fn hu_to_mu(hu: f64) -> f64 {
    PhysicsConstants::default().hu_to_mu(hu)
}

pub fn normalize_clip(mu: f64) -> f64 {
    PhysicsConstants::default().normalize_clip(mu)
}

/// Central 362² window of a 512² slice.
pub fn crop_center<T: Clone>(slice: ArrayView2<T>) -> Result<Array2<T>> {
    if slice.dim() != (SOURCE_SIZE, SOURCE_SIZE) {
        return Err(Error::Contract(format!(
            "expected a {SOURCE_SIZE}x{SOURCE_SIZE} slice, got {}x{}",
            slice.nrows(),
            slice.ncols()
        )));
    }
    let end = SOURCE_SIZE - CROP_MARGIN;
    Ok(slice.slice(s![CROP_MARGIN..end, CROP_MARGIN..end]).to_owned())
}

/// Adds i.i.d. `U[0, 1)` noise, drawn in row-major order from `rng`.
pub fn dequantize<T: Copy + Into<f64>>(hu: ArrayView2<T>, rng: &mut SliceRng) -> Array2<f64> {
    let (rows, cols) = hu.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            out[[r, c]] = hu[[r, c]].into() + rng.uniform();
        }
    }
    out
}

/// Sidecar of one stored slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub patient_random_id: u64,
    #[serde(default)]
    pub z_position: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSlice {
    /// Identifier used in error messages and manifests.
    pub name: String,
    /// Stored pixel values, row-major as in the source file.
    pub pixels: Array2<i16>,
    pub meta: SliceMeta,
}

impl RawSlice {
    /// `pixels · slope + intercept`.
    pub fn hounsfield(&self) -> Array2<f64> {
        let (slope, intercept) = (self.meta.rescale_slope, self.meta.rescale_intercept);
        self.pixels.mapv(|p| p as f64 * slope + intercept)
    }
}

/// Result of the preprocessing chain for one slice.
#[derive(Debug, Clone)]
pub struct IngestedSlice {
    /// Dequantized attenuation in 1/m, not clipped.
    pub mu: Image,
    /// `clip(mu / mu_max, [0, 1])`.
    pub ground_truth: Image,
}

/// Crop, rescale, dequantize, convert and normalize one slice.
pub fn ingest_slice(raw: &RawSlice, constants: &PhysicsConstants, rng: &mut SliceRng) -> Result<IngestedSlice> {
    let cropped = crop_center(raw.pixels.view()).map_err(|e| Error::ingest(&raw.name, e))?;
    let (slope, intercept) = (raw.meta.rescale_slope, raw.meta.rescale_intercept);
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(Error::ingest(&raw.name, Error::Contract("non-finite rescale parameters".into())));
    }
    let hu = cropped.mapv(|p| p as f64 * slope + intercept);
    let hu = dequantize(hu.view(), rng);
    let grid = ImageGrid::reconstruction();
    let mu = hu.mapv(|h| constants.hu_to_mu(h));
    let gt = mu.mapv(|m| constants.normalize_clip(m));
    Ok(IngestedSlice {
        mu: Image::new(grid, mu, ImageUnit::MuPerM)?,
        ground_truth: Image::new(grid, gt, ImageUnit::Normalized)?,
    })
}

pub fn sidecar_path(raw_path: &Path) -> PathBuf {
    raw_path.with_extension("json")
}

fn slice_name(raw_path: &Path) -> String {
    raw_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| raw_path.display().to_string())
}

/// Reads `<name>.raw` and its `<name>.json` sidecar.
pub fn read_slice(raw_path: &Path) -> Result<RawSlice> {
    let name = slice_name(raw_path);
    let wrap = |e| Error::ingest(&name, e);
    let bytes = fs::read(raw_path).map_err(|e| wrap(Error::io(raw_path, e)))?;
    let expected = SOURCE_SIZE * SOURCE_SIZE * 2;
    if bytes.len() != expected {
        return Err(wrap(Error::format(raw_path, format!("expected {expected} bytes of int16 pixels, found {}", bytes.len()))));
    }
    let pixels: Vec<i16> = bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
    let pixels = Array2::from_shape_vec((SOURCE_SIZE, SOURCE_SIZE), pixels).expect("size checked");

    let meta_path = sidecar_path(raw_path);
    let text = fs::read_to_string(&meta_path).map_err(|e| wrap(Error::io(&meta_path, e)))?;
    let meta: SliceMeta =
        serde_json::from_str(&text).map_err(|e| wrap(Error::Json { path: meta_path.clone(), source: e }))?;
    Ok(RawSlice { name, pixels, meta })
}

/// Writes a slice in the intermediate format; returns the `.raw` path.
pub fn write_slice(dir: &Path, name: &str, pixels: ArrayView2<i16>, meta: &SliceMeta) -> Result<PathBuf> {
    if pixels.dim() != (SOURCE_SIZE, SOURCE_SIZE) {
        return Err(Error::Contract(format!("slice {name} must be {SOURCE_SIZE}x{SOURCE_SIZE}")));
    }
    let raw_path = dir.join(format!("{name}.raw"));
    let mut bytes = Vec::with_capacity(SOURCE_SIZE * SOURCE_SIZE * 2);
    for &p in pixels.iter() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let meta_path = sidecar_path(&raw_path);
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(raw_path)
}

/// All `.raw` slices in `dir`, sorted by file name.
pub fn list_slices(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "raw") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// A randomized chest-like slice in HU (air, body, lungs, spine, ribs),
/// stored with slope 1 and intercept -1024 like typical scanner output.
/// The cropped center covers the `[-0.13, 0.13]²` domain.
pub fn synthetic_slice(name: &str, seed: u64, patient_random_id: u64) -> RawSlice {
    use crate::phantoms::{Ellipse, EllipsePhantom};
    let mut rng = SliceRng::from_seed_u64(seed);
    let mut jitter = |scale: f64| (rng.uniform() - 0.5) * 2.0 * scale;
    let (bw, bh) = (0.115 + jitter(0.01), 0.085 + jitter(0.01));
    let mut ellipses = vec![
        Ellipse { center: [0.0, jitter(0.005)], semi_axes: [bw, bh], rotation: 0.0, value: 1040.0 + jitter(20.0) },
    ];
    for side in [-1.0, 1.0] {
        ellipses.push(Ellipse {
            center: [side * (0.05 + jitter(0.005)), 0.005 + jitter(0.005)],
            semi_axes: [0.035 + jitter(0.005), 0.055 + jitter(0.005)],
            rotation: side * jitter(0.2),
            value: -850.0 + jitter(30.0),
        });
    }
    ellipses.push(Ellipse::disk([0.0, -0.06 + jitter(0.004)], 0.014 + jitter(0.002), 700.0 + jitter(100.0)));
    ellipses.push(Ellipse::disk([jitter(0.01), -0.015], 0.03 + jitter(0.004), 60.0 + jitter(20.0)));
    for k in 0..6 {
        let t = std::f64::consts::PI * (0.15 + 0.14 * k as f64);
        let (x, y) = (0.92 * bw * t.cos(), 0.92 * bh * t.sin() * if k % 2 == 0 { 1.0 } else { -1.0 });
        ellipses.push(Ellipse::disk([x, y], 0.005 + jitter(0.001), 1200.0 + jitter(300.0)));
    }
    let phantom = EllipsePhantom::new(ellipses).expect("valid ellipses");
    let pitch = 2.0 * crate::geometry::DOMAIN_HALF_WIDTH / RECONSTRUCTION_SIZE as f64;
    let half = (SOURCE_SIZE as f64 - 1.0) / 2.0;
    let pixels = Array2::from_shape_fn((SOURCE_SIZE, SOURCE_SIZE), |(r, c)| {
        let hu = -1000.0 + phantom.value_at((c as f64 - half) * pitch, (r as f64 - half) * pitch);
        (hu.round() as i16) + 1024
    });
    RawSlice {
        name: name.to_string(),
        pixels,
        meta: SliceMeta { rescale_slope: 1.0, rescale_intercept: -1024.0, patient_random_id, z_position: None },
    }
}

/// Writes `count` synthetic slices named `slice_0000`, `slice_0001`, ...
/// spread over `count.div_ceil(slices_per_patient)` patients.
pub fn write_synthetic_slices(dir: &Path, count: usize, slices_per_patient: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let per = slices_per_patient.max(1);
    (0..count)
        .map(|i| {
            let name = format!("slice_{i:04}");
            let patient = 1000 + (i / per) as u64;
            let raw = synthetic_slice(&name, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), patient);
            write_slice(dir, &name, raw.pixels.view(), &raw.meta)
        })
        .collect()
}
