//! Batch commands: simulate, reconstruct, evaluate and phantom.
//!
//! A run is configured by a TOML document whose keys mirror [`RunConfig`];
//! command-line flags override individual keys through [`Overrides`].

use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info};
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    read_stack, reconstruction_manifest_file_name, shard_file_name, validate_part_name, write_stack, DatasetPart,
    Manifest, PartSpec, Sample, ShardInfo, ShardKind, ShardWriter, DEFAULT_SHARD_SIZE,
};
use crate::error::{Error, Result};
use crate::export::{write_image_png, write_sinogram_png, Window};
use crate::fbp::{fbp_sinogram, FbpConfig, RampFilter};
use crate::geometry::{ImageGrid, ScanGeometry, DEFAULT_NUM_ANGLES, DEFAULT_NUM_DETECTORS, DOMAIN_HALF_WIDTH, SIMULATION_SIZE};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};
use crate::ingest::{ingest_slice, list_slices, read_slice, PhysicsConstants};
use crate::metrics::{psnr_values, ssim_values, MetricReport, SampleMetrics};
use crate::phantoms::EllipsePhantom;
use crate::physics::{simulate_from_mu, SimulationSetup};
use crate::rng::{derive_seed, SliceRng};

fn default_part() -> String {
    "train".into()
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Scan geometry and simulation grid of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_angles: usize,
    pub num_detectors: usize,
    /// Side of the grid images are upscaled to before projection.
    pub simulation_size: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            num_angles: DEFAULT_NUM_ANGLES,
            num_detectors: DEFAULT_NUM_DETECTORS,
            simulation_size: SIMULATION_SIZE,
        }
    }
}

impl GeometryConfig {
    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        ScanGeometry::covering(DOMAIN_HALF_WIDTH, self.num_angles, self.num_detectors)
    }

    pub fn simulation_grid(&self) -> Result<ImageGrid> {
        ImageGrid::square(self.simulation_size, DOMAIN_HALF_WIDTH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Directory holding reconstruction shards for `evaluate`; defaults to `input`.
    pub reconstructions: Option<PathBuf>,
    pub part: String,
    pub seed: u64,
    pub n0: f64,
    pub min_photon_count: f64,
    pub sigma_detector: f64,
    pub filter: RampFilter,
    pub padding: Option<usize>,
    pub workers: usize,
    pub shard_size: usize,
    pub geometry: GeometryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = PhysicsConstants::default();
        Self {
            input: None,
            output: None,
            reconstructions: None,
            part: default_part(),
            seed: 0,
            n0: c.n0,
            min_photon_count: c.min_photon_count,
            sigma_detector: c.sigma_detector,
            filter: RampFilter::RamLak,
            padding: None,
            workers: default_workers(),
            shard_size: DEFAULT_SHARD_SIZE,
            geometry: GeometryConfig::default(),
        }
    }
}

/// Flag values that replace configuration keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub part: Option<String>,
    pub seed: Option<u64>,
    pub n0: Option<f64>,
    pub min_photons: Option<f64>,
    pub sigma: Option<f64>,
    pub workers: Option<usize>,
    pub filter: Option<RampFilter>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if o.input.is_some() {
            self.input = o.input;
        }
        if o.output.is_some() {
            self.output = o.output;
        }
        self.part = o.part.unwrap_or(self.part);
        self.seed = o.seed.unwrap_or(self.seed);
        self.n0 = o.n0.unwrap_or(self.n0);
        self.min_photon_count = o.min_photons.unwrap_or(self.min_photon_count);
        self.sigma_detector = o.sigma.unwrap_or(self.sigma_detector);
        self.workers = o.workers.unwrap_or(self.workers);
        self.filter = o.filter.unwrap_or(self.filter);
        self
    }

    pub fn constants(&self) -> PhysicsConstants {
        PhysicsConstants {
            n0: self.n0,
            min_photon_count: self.min_photon_count,
            sigma_detector: self.sigma_detector,
            ..PhysicsConstants::default()
        }
    }

    pub fn fbp(&self) -> FbpConfig {
        FbpConfig { filter: self.filter, padding: self.padding, output_grid: ImageGrid::reconstruction() }
    }

    pub fn validate(&self) -> Result<()> {
        validate_part_name(&self.part)?;
        self.constants().validate()?;
        if self.workers == 0 {
            return Err(Error::Config("worker count must be positive".into()));
        }
        if self.shard_size == 0 {
            return Err(Error::Config("shard size must be positive".into()));
        }
        self.geometry.scan_geometry()?;
        self.geometry.simulation_grid()?;
        Ok(())
    }

    fn input_dir(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| Error::Config("no input directory given".into()))
    }

    fn output_dir(&self) -> Result<&Path> {
        self.output.as_deref().or(self.input.as_deref()).ok_or_else(|| Error::Config("no output directory given".into()))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.workers)))
    }
}

/// Reads, preprocesses and simulates every slice under `input`, writing
/// ground-truth and observation shards plus a manifest to `output`.
///
/// Slice `i` (in file-name order) draws from the stream keyed by
/// `(seed, part, i)`, so the output does not depend on the worker count.
pub fn cmd_simulate(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let input = config.input_dir()?;
    let output = config.output_dir()?;
    let setup = SimulationSetup {
        sim_grid: config.geometry.simulation_grid()?,
        geometry: config.geometry.scan_geometry()?,
        constants: config.constants(),
    };
    let slices = list_slices(input)?;
    info!("simulating {} slices from {} into part {:?}", slices.len(), input.display(), config.part);
    let spec = PartSpec {
        part: config.part.clone(),
        shard_size: config.shard_size,
        image_grid: ImageGrid::reconstruction(),
        geometry: setup.geometry.clone(),
        constants: setup.constants,
        global_seed: Some(config.seed),
    };
    let mut writer = ShardWriter::create(output, spec)?;
    let pool = config.pool()?;
    for (chunk_index, chunk) in slices.chunks(config.shard_size).enumerate() {
        let first = chunk_index * config.shard_size;
        let results: Vec<Result<Sample>> = pool.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .map(|(k, path)| simulate_slice(path, (first + k) as u64, config, &setup))
                .collect()
        });
        let failures: Vec<&Error> = results.iter().filter_map(|r| r.as_ref().err()).collect();
        for e in &failures {
            error!("{e}");
        }
        if !failures.is_empty() {
            error!("{} of {} slices in shard {chunk_index} failed", failures.len(), chunk.len());
            return Err(results.into_iter().find_map(|r| r.err()).expect("a failure"));
        }
        for sample in results {
            writer.push(&sample?)?;
        }
        info!("shard {chunk_index} done ({} slices)", chunk.len());
    }
    writer.finish()
}

fn simulate_slice(path: &Path, index: u64, config: &RunConfig, setup: &SimulationSetup) -> Result<Sample> {
    let raw = read_slice(path)?;
    let key = derive_seed(config.seed, &config.part, index);
    let mut rng = SliceRng::from_key(key);
    let ingested = ingest_slice(&raw, &setup.constants, &mut rng)?;
    let measurement = simulate_from_mu(&ingested.mu, setup, &mut rng)
        .map_err(|e| Error::ingest(&raw.name, e))?
        .with_seed(hex::encode(key));
    Ok(Sample {
        ground_truth: ingested.ground_truth,
        measurement,
        patient_random_id: raw.meta.patient_random_id,
        source: Some(raw.name),
    })
}

/// Manifest of a set of reconstruction shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionManifest {
    pub part: String,
    pub count: usize,
    pub shard_size: usize,
    pub shards: Vec<ShardInfo>,
    pub image_grid: ImageGrid,
    pub geometry_hash: String,
    pub global_seed: Option<u64>,
    pub fbp: FbpConfig,
}

impl ReconstructionManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// FBP of every observation of a part. Refuses to run when the manifest's
/// geometry hash differs from the configured geometry.
pub fn cmd_reconstruct(config: &RunConfig) -> Result<ReconstructionManifest> {
    config.validate()?;
    let input = config.input_dir()?;
    let output = config.output_dir()?;
    let part = DatasetPart::open(input, &config.part)?;
    let manifest = part.manifest();
    let expected = config.geometry.scan_geometry()?.hash();
    if manifest.geometry_hash != expected {
        return Err(Error::Config(format!(
            "geometry hash {} of part {:?} does not match the configured geometry {expected}",
            manifest.geometry_hash, config.part
        )));
    }
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let fbp = config.fbp();
    let geom = &manifest.geometry;
    let (h, w) = fbp.output_grid.shape();
    let pool = config.pool()?;
    let mut shards = Vec::new();
    for shard in &manifest.shards {
        let obs_path = manifest.file(input, shard.index, ShardKind::Observation)?;
        let obs = read_stack(&obs_path)?;
        if obs.dim() != (shard.count, geom.num_angles(), geom.num_detectors()) {
            return Err(Error::format(&obs_path, format!("unexpected shape {:?}", obs.dim())));
        }
        let recons: Vec<Result<Image>> = pool.install(|| {
            (0..shard.count)
                .into_par_iter()
                .map(|k| {
                    let row = obs.index_axis(Axis(0), k).mapv(f64::from);
                    let sino = Sinogram::new(geom.clone(), row, SinogramUnit::NormalizedPostLog)?;
                    fbp_sinogram(&sino, &fbp)
                })
                .collect()
        });
        let mut stack = Array3::<f32>::zeros((shard.count, h, w));
        for (mut dst, img) in stack.axis_iter_mut(Axis(0)).zip(recons) {
            dst.assign(&img?.values().mapv(|v| v as f32));
        }
        let name = shard_file_name(ShardKind::Reconstruction, &config.part, shard.index);
        write_stack(&output.join(&name), &stack)?;
        let files = [(ShardKind::Reconstruction.prefix().to_string(), name)].into_iter().collect();
        shards.push(ShardInfo { index: shard.index, count: shard.count, files });
        info!("reconstructed shard {} ({} samples)", shard.index, shard.count);
    }
    let recon = ReconstructionManifest {
        part: config.part.clone(),
        count: manifest.count,
        shard_size: manifest.shard_size,
        shards,
        image_grid: fbp.output_grid,
        geometry_hash: manifest.geometry_hash.clone(),
        global_seed: manifest.global_seed,
        fbp,
    };
    recon.save(&output.join(reconstruction_manifest_file_name(&config.part)))?;
    Ok(recon)
}

pub fn metrics_file_name(part: &str) -> String {
    format!("metrics_{part}.csv")
}

/// PSNR and SSIM of every reconstruction against its ground truth; writes
/// `metrics_{part}.csv` to the output directory.
pub fn cmd_evaluate(config: &RunConfig) -> Result<MetricReport> {
    validate_part_name(&config.part)?;
    let input = config.input_dir()?;
    let recon_dir = config.reconstructions.as_deref().unwrap_or(input);
    let output = config.output_dir()?;
    let part = DatasetPart::open(input, &config.part)?;
    let manifest = part.manifest();
    let recon = ReconstructionManifest::load(&recon_dir.join(reconstruction_manifest_file_name(&config.part)))?;
    if recon.count != manifest.count || recon.shards.len() != manifest.shards.len() {
        return Err(Error::Contract(format!(
            "{} reconstructions for {} ground truths",
            recon.count, manifest.count
        )));
    }
    let pool = config.pool()?;
    let mut report = MetricReport::default();
    for (gt_shard, rc_shard) in manifest.shards.iter().zip(&recon.shards) {
        if gt_shard.count != rc_shard.count {
            return Err(Error::Contract(format!("shard {} counts differ", gt_shard.index)));
        }
        let gt = read_stack(&manifest.file(input, gt_shard.index, ShardKind::GroundTruth)?)?;
        let rc_name = rc_shard
            .files
            .get(ShardKind::Reconstruction.prefix())
            .ok_or_else(|| Error::Config("reconstruction manifest lists no files".into()))?;
        let rc = read_stack(&recon_dir.join(rc_name))?;
        if gt.dim() != rc.dim() {
            return Err(Error::Contract(format!(
                "shard {}: ground truth {:?} and reconstruction {:?} differ in shape",
                gt_shard.index,
                gt.dim(),
                rc.dim()
            )));
        }
        let base = gt_shard.index * manifest.shard_size;
        let rows: Vec<Result<SampleMetrics>> = pool.install(|| {
            (0..gt_shard.count)
                .into_par_iter()
                .map(|k| {
                    let g = gt.index_axis(Axis(0), k).mapv(f64::from);
                    let r = rc.index_axis(Axis(0), k).mapv(f64::from);
                    Ok(SampleMetrics {
                        index: base + k,
                        psnr_db: psnr_values(r.view(), g.view())?,
                        ssim: ssim_values(r.view(), g.view())?,
                    })
                })
                .collect()
        });
        for row in rows {
            report.push(row?);
        }
    }
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    report.write_csv(&output.join(metrics_file_name(&config.part)))?;
    if let (Some(p), Some(s)) = (report.mean_psnr(), report.mean_ssim()) {
        info!("part {:?}: mean PSNR {p:.2} dB, mean SSIM {s:.3} over {} samples", config.part, report.samples.len());
    }
    Ok(report)
}

/// Files written by [`cmd_phantom`].
#[derive(Debug, Clone)]
pub struct PhantomOutputs {
    pub phantom_hdf5: PathBuf,
    pub sinogram_hdf5: PathBuf,
    pub phantom_png: PathBuf,
    pub sinogram_png: PathBuf,
}

/// Shepp-Logan phantom on the reconstruction grid and its analytic sinogram.
pub fn cmd_phantom(config: &RunConfig) -> Result<PhantomOutputs> {
    let output = config.output.as_deref().ok_or_else(|| Error::Config("no output directory given".into()))?;
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let geom = config.geometry.scan_geometry()?;
    let phantom = EllipsePhantom::shepp_logan_default();
    let image = phantom.rasterize(&ImageGrid::reconstruction());
    let sino = phantom.analytic_sinogram(&geom);
    let out = PhantomOutputs {
        phantom_hdf5: output.join("phantom.hdf5"),
        sinogram_hdf5: output.join("phantom_sinogram.hdf5"),
        phantom_png: output.join("phantom.png"),
        sinogram_png: output.join("phantom_sinogram.png"),
    };
    let as_stack = |v: &ndarray::Array2<f64>| v.mapv(|x| x as f32).insert_axis(Axis(0));
    write_stack(&out.phantom_hdf5, &as_stack(image.values()))?;
    write_stack(&out.sinogram_hdf5, &as_stack(sino.values()))?;
    write_image_png(&image.map(ImageUnit::Dimensionless, |v| v), Window::new(1.0, 1.1)?, &out.phantom_png)?;
    write_sinogram_png(&sino, Window::full_range(sino.values().view()), &out.sinogram_png)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml("part = \"test\"\nseed = 9\n[geometry]\nnum_angles = 30\n").unwrap();
        assert_eq!(cfg.part, "test");
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n0, 4096.0);
        assert_eq!(cfg.min_photon_count, 0.1);
        assert_eq!(cfg.sigma_detector, 0.0);
        assert_eq!(cfg.geometry.num_angles, 30);
        assert_eq!(cfg.geometry.num_detectors, 513);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg = RunConfig::default().apply(Overrides {
            seed: Some(3),
            min_photons: Some(1.0),
            workers: Some(2),
            ..Overrides::default()
        });
        assert_eq!((cfg.seed, cfg.min_photon_count, cfg.workers), (3, 1.0, 2));
        assert_eq!(cfg.n0, 4096.0);
    }

    #[test]
    fn default_geometry_matches() {
        assert_eq!(
            GeometryConfig::default().scan_geometry().unwrap(),
            crate::geometry::make_default_geometry()
        );
    }

    #[test]
    fn invalid_configs() {
        let bad = RunConfig { workers: 0, ..RunConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = RunConfig { part: "a/b".into(), ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { min_photon_count: -1.0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        assert!(cmd_simulate(&RunConfig::default()).is_err());
    }
}
