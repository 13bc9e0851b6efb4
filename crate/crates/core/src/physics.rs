//! Low-dose measurement simulation and pre-/post-log conversions.
//!
//! A ground truth is turned into an observation by
//! denormalizing (× `mu_max`), upscaling bilinearly to the finer simulation
//! grid, projecting, attenuating `N0` photons by Beer–Lambert, drawing
//! Poisson counts (optionally plus Gaussian detector noise), flooring them
//! at `min_photon_count` and taking `-ln(N1/N0) / mu_max`.
//!
//! Simulation and reconstruction deliberately use different grids; asking
//! to simulate on the grid the image already lives on is a configuration
//! error.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_default_geometry, ImageGrid, ScanGeometry};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};
use crate::ingest::PhysicsConstants;
use crate::projector::forward_project;
use crate::rng::SliceRng;

/// Bilinear resampling between grids sharing a physical extent. Pixel values
/// are samples at cell centers; targets beyond the outermost centers take
/// the edge value.
pub fn upscale_bilinear(image: &Image, target: &ImageGrid) -> Result<Image> {
    let source = image.grid();
    if !source.same_extent(target) {
        return Err(Error::Config(format!(
            "resampling needs equal extents, got {} and {}",
            source.extent(),
            target.extent()
        )));
    }
    let n = source.width();
    let last = (n - 1) as f64;
    let inv_pitch = 1.0 / source.pixel_pitch();
    let e = source.extent();
    let v = image.values();
    // separable: per target coordinate, the source index pair and weight
    let axis: Vec<(usize, usize, f64)> = (0..target.width())
        .map(|i| {
            let x = target.pixel_center(0, i)[0];
            let u = ((x + e) * inv_pitch - 0.5).clamp(0.0, last);
            let lo = (u as usize).min(n.saturating_sub(2));
            let hi = (lo + 1).min(n - 1);
            (lo, hi, u - lo as f64)
        })
        .collect();
    let values = Array2::from_shape_fn(target.shape(), |(r, c)| {
        let (r0, r1, fr) = axis[r];
        let (c0, c1, fc) = axis[c];
        let top = (1.0 - fc) * v[[r0, c0]] + fc * v[[r0, c1]];
        let bottom = (1.0 - fc) * v[[r1, c0]] + fc * v[[r1, c1]];
        (1.0 - fr) * top + fr * bottom
    });
    Image::new(*target, values, image.unit())
}

/// Photon counts per (angle, detector), pre-log.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonField {
    geometry: ScanGeometry,
    counts: Array2<f64>,
}

impl PhotonField {
    pub fn new(geometry: ScanGeometry, counts: Array2<f64>) -> Result<Self> {
        if counts.dim() != geometry.shape() {
            return Err(Error::Config(format!(
                "photon field shape {:?} does not match geometry {:?}",
                counts.dim(),
                geometry.shape()
            )));
        }
        Ok(Self { geometry, counts })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }
}

/// `N0 · exp(-proj)` per beam.
pub fn expected_photons(proj: &Sinogram, n0: f64) -> Result<PhotonField> {
    if proj.unit() != SinogramUnit::LineIntegral {
        return Err(Error::Contract("expected photon counts need line integrals".into()));
    }
    PhotonField::new(proj.geometry().clone(), proj.values().mapv(|p| n0 * (-p).exp()))
}

/// `ln(k!)`: exact table below 10, Stirling series above.
fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_945_8,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if k < 10 {
        return TABLE[k as usize];
    }
    const COEF: [f64; 5] = [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0];
    let x = k as f64 + 1.0;
    let x2 = 1.0 / (x * x);
    let series = COEF.iter().rev().fold(0.0, |acc, c| acc * x2 + c) / x;
    (x - 0.5) * x.ln() - x + 0.5 * std::f64::consts::TAU.ln() + series
}

/// One Poisson variate. Below `λ = 10` by sequential-search inversion of
/// the CDF (one uniform); from 10 up by Hörmann's transformed rejection
/// with squeeze (PTRS, two uniforms per trial).
pub fn sample_poisson(lambda: f64, rng: &mut SliceRng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        let u = rng.uniform();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        if us <= 0.0 {
            continue;
        }
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let k = k as u64;
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k as f64 * loglam - ln_factorial(k) {
            return k;
        }
    }
}

/// Noisy counts: Poisson draw, plus `N(0, sigma²)` when `sigma > 0`, then
/// floored at `min_count`. Elements are drawn in row-major order.
pub fn sample_photons(expected: &PhotonField, rng: &mut SliceRng, min_count: f64, sigma: f64) -> Result<PhotonField> {
    if !(min_count > 0.0) {
        return Err(Error::Contract(format!("minimum photon count must be positive, got {min_count}")));
    }
    if let Some(v) = expected.counts.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Contract(format!("expected photon count must be finite and >= 0, got {v}")));
    }
    let counts = expected.counts.mapv(|lambda| {
        let mut n = sample_poisson(lambda, rng) as f64;
        if sigma > 0.0 {
            n += sigma * rng.standard_normal();
        }
        n.max(min_count)
    });
    PhotonField::new(expected.geometry.clone(), counts)
}

/// Physics parameters a measurement was generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex key of the random stream, when the values were sampled.
    pub seed: Option<String>,
    pub n0: f64,
    pub min_photon_count: f64,
    pub sigma_detector: f64,
    pub mu_max: f64,
}

impl Provenance {
    pub fn from_constants(constants: &PhysicsConstants, seed: Option<String>) -> Self {
        Self {
            seed,
            n0: constants.n0,
            min_photon_count: constants.min_photon_count,
            sigma_detector: constants.sigma_detector,
            mu_max: constants.mu_max(),
        }
    }

    /// `-ln(min_photon_count / N0) / mu_max`.
    pub fn cap(&self) -> f64 {
        -(self.min_photon_count / self.n0).ln() / self.mu_max
    }
}

/// Normalized post-log observation `ŷ` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    sinogram: Sinogram,
    provenance: Provenance,
}

impl Measurement {
    /// Checks the unit and that no value exceeds the cap implied by the
    /// provenance (with single-precision slack for values read from disk).
    pub fn new(sinogram: Sinogram, provenance: Provenance) -> Result<Self> {
        if sinogram.unit() != SinogramUnit::NormalizedPostLog {
            return Err(Error::Contract("measurements hold normalized post-log values".into()));
        }
        let cap = provenance.cap();
        let slack = cap + cap.abs() * f32::EPSILON as f64;
        if let Some(v) = sinogram.values().iter().find(|&&v| v > slack) {
            return Err(Error::Contract(format!("observation {v} exceeds the cap {cap}")));
        }
        Ok(Self { sinogram, provenance })
    }

    pub fn sinogram(&self) -> &Sinogram {
        &self.sinogram
    }

    pub fn values(&self) -> &Array2<f64> {
        self.sinogram.values()
    }

    pub fn geometry(&self) -> &ScanGeometry {
        self.sinogram.geometry()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Records the key of the stream the values were drawn from.
    pub fn with_seed(mut self, seed: impl Into<String>) -> Self {
        self.provenance.seed = Some(seed.into());
        self
    }
}

/// `ŷ = -ln(counts / N0) / mu_max`.
pub fn post_log(photons: &PhotonField, constants: &PhysicsConstants) -> Result<Measurement> {
    if let Some(v) = photons.counts.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Contract(format!("post-log transform needs positive counts, found {v}")));
    }
    let n0 = constants.n0;
    let mu_max = constants.mu_max();
    let values = photons.counts.mapv(|c| -(c / n0).ln() / mu_max);
    let sino = Sinogram::new(photons.geometry.clone(), values, SinogramUnit::NormalizedPostLog)?;
    Measurement::new(sino, Provenance::from_constants(constants, None))
}

/// Intensity quotient `I1/I0 = exp(-mu_max · ŷ)` for pre-log methods. Pair
/// it with ground truths multiplied by `mu_max` (see
/// [`physical_ground_truth`]) for physically consistent data.
pub fn pre_log_backtransform(meas: &Measurement) -> Array2<f64> {
    let mu_max = meas.provenance.mu_max;
    meas.values().mapv(|y| (-mu_max * y).exp())
}

/// Pre-log photon counts `N0 · exp(-mu_max · ŷ)`.
pub fn photon_counts(meas: &Measurement) -> Result<PhotonField> {
    let n0 = meas.provenance.n0;
    PhotonField::new(meas.geometry().clone(), pre_log_backtransform(meas).mapv(|r| n0 * r))
}

/// Ground truth in 1/m, the partner of pre-log data.
pub fn physical_ground_truth(ground_truth: &Image, constants: &PhysicsConstants) -> Image {
    let mu_max = constants.mu_max();
    ground_truth.map(ImageUnit::MuPerM, |v| v * mu_max)
}

/// Raises the photon floor after the fact: values above
/// `-ln(new_epsilon / N0) / mu_max` are replaced by exactly that value.
pub fn refilter_min_photons(meas: &Measurement, new_epsilon: f64) -> Result<Measurement> {
    let current = meas.provenance.min_photon_count;
    if !(new_epsilon >= current) {
        return Err(Error::Contract(format!(
            "minimum photon count can only be raised ({new_epsilon} < stored {current})"
        )));
    }
    let provenance = Provenance { min_photon_count: new_epsilon, ..meas.provenance.clone() };
    let cap = provenance.cap();
    let sino = meas.sinogram.map(SinogramUnit::NormalizedPostLog, |y| if y > cap { cap } else { y });
    Ok(Measurement { sinogram: sino, provenance })
}

/// Grids, geometry and constants of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    /// Grid the image is upscaled to before projection.
    pub sim_grid: ImageGrid,
    pub geometry: ScanGeometry,
    pub constants: PhysicsConstants,
}

impl Default for SimulationSetup {
    fn default() -> Self {
        Self {
            sim_grid: ImageGrid::simulation(),
            geometry: make_default_geometry(),
            constants: PhysicsConstants::default(),
        }
    }
}

impl SimulationSetup {
    fn check_input_grid(&self, grid: &ImageGrid) -> Result<()> {
        self.constants.validate()?;
        if grid.width() == self.sim_grid.width() {
            return Err(Error::Config(format!(
                "simulation grid ({0}x{0}) must differ from the image grid to avoid the inverse crime",
                grid.width()
            )));
        }
        Ok(())
    }

    /// Upscaled line integrals of an attenuation image (1/m).
    pub fn project_mu(&self, mu: &Image) -> Result<Sinogram> {
        if mu.unit() != ImageUnit::MuPerM {
            return Err(Error::Contract("expected an attenuation image in 1/m".into()));
        }
        self.check_input_grid(mu.grid())?;
        let upscaled = upscale_bilinear(mu, &self.sim_grid)?;
        forward_project(&upscaled, &self.geometry)
    }
}

/// Full noisy simulation from an attenuation image in 1/m.
pub fn simulate_from_mu(mu: &Image, setup: &SimulationSetup, rng: &mut SliceRng) -> Result<Measurement> {
    let proj = setup.project_mu(mu)?;
    let c = &setup.constants;
    let expected = expected_photons(&proj, c.n0)?;
    let noisy = sample_photons(&expected, rng, c.min_photon_count, c.sigma_detector)?;
    post_log(&noisy, c)
}

fn denormalize(ground_truth: &Image, constants: &PhysicsConstants) -> Result<Image> {
    if ground_truth.unit() != ImageUnit::Normalized {
        return Err(Error::Contract("ground truth must be in normalized units".into()));
    }
    if let Some(v) = ground_truth.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("ground truth value {v} outside [0, 1]")));
    }
    Ok(physical_ground_truth(ground_truth, constants))
}

/// Full noisy simulation from a normalized ground truth.
pub fn simulate(ground_truth: &Image, setup: &SimulationSetup, rng: &mut SliceRng) -> Result<Measurement> {
    let mu = denormalize(ground_truth, &setup.constants)?;
    simulate_from_mu(&mu, setup, rng)
}

/// Expected post-log observation without photon noise or flooring.
pub fn simulate_noiseless(ground_truth: &Image, setup: &SimulationSetup) -> Result<Sinogram> {
    let mu = denormalize(ground_truth, &setup.constants)?;
    let proj = setup.project_mu(&mu)?;
    let mu_max = setup.constants.mu_max();
    Ok(proj.map(SinogramUnit::NormalizedPostLog, |p| p / mu_max))
}
