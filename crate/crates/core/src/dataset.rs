//! Sharded HDF5 storage of dataset parts.
//!
//! A part `P` written to a directory consists of
//!
//! * `ground_truth_P_NNN.hdf5` and `observation_P_NNN.hdf5` shard pairs, each
//!   holding one 32-bit float dataset `data` of shape `(n, rows, cols)` with
//!   `n <= shard_size` (only the last shard may be short),
//! * `manifest_P.json` with counts, shard list, geometry and its hash,
//!   physics constants and per-sample seeds,
//! * `patient_ids_P.csv` with columns `sample_index,patient_random_id`.
//!
//! Reconstructions use the same layout with kind `reconstruction`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, ScanGeometry};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};
use crate::ingest::PhysicsConstants;
use crate::physics::{Measurement, Provenance};
use crate::rng::SliceRng;

pub const DEFAULT_SHARD_SIZE: usize = 128;
pub const MANIFEST_VERSION: u32 = 1;

/// Published parts and their sample counts.
pub const STANDARD_PARTS: [(&str, usize); 4] =
    [("train", 35820), ("validation", 3522), ("test", 3553), ("challenge", 3678)];

/// Patients per part in the published split.
pub const STANDARD_PATIENTS: [(&str, usize); 4] = [("train", 632), ("validation", 60), ("test", 60), ("challenge", 60)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardKind {
    GroundTruth,
    Observation,
    Reconstruction,
}

impl ShardKind {
    pub fn prefix(self) -> &'static str {
        match self {
            ShardKind::GroundTruth => "ground_truth",
            ShardKind::Observation => "observation",
            ShardKind::Reconstruction => "reconstruction",
        }
    }
}

pub fn shard_file_name(kind: ShardKind, part: &str, shard: usize) -> String {
    format!("{}_{}_{:03}.hdf5", kind.prefix(), part, shard)
}

pub fn manifest_file_name(part: &str) -> String {
    format!("manifest_{part}.json")
}

pub fn reconstruction_manifest_file_name(part: &str) -> String {
    format!("manifest_reconstruction_{part}.json")
}

pub fn patient_ids_file_name(part: &str) -> String {
    format!("patient_ids_{part}.csv")
}

pub fn validate_part_name(part: &str) -> Result<()> {
    let ok = !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid part name {part:?}")))
    }
}

/// Shard sizes for `count` samples: full shards then the remainder.
pub fn shard_counts(count: usize, shard_size: usize) -> Vec<usize> {
    (0..count.div_ceil(shard_size)).map(|i| shard_size.min(count - i * shard_size)).collect()
}

pub fn write_stack(path: &Path, stack: &Array3<f32>) -> Result<()> {
    let file = hdf5::File::create(path).map_err(|e| Error::hdf5(path, e))?;
    let ds = file.new_dataset::<f32>().shape(stack.dim()).create("data").map_err(|e| Error::hdf5(path, e))?;
    ds.write(stack).map_err(|e| Error::hdf5(path, e))?;
    file.close().map_err(|e| Error::hdf5(path, e))
}

pub fn read_stack(path: &Path) -> Result<Array3<f32>> {
    let file = open_h5(path)?;
    let ds = file.dataset("data").map_err(|e| Error::hdf5(path, e))?;
    ds.read::<f32, ndarray::Ix3>().map_err(|e| Error::hdf5(path, e))
}

fn open_h5(path: &Path) -> Result<hdf5::File> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "shard file not found")));
    }
    hdf5::File::open(path).map_err(|e| Error::hdf5(path, e))
}

/// One row of a stored stack.
pub fn read_stack_row(path: &Path, row: usize) -> Result<Array2<f32>> {
    let file = open_h5(path)?;
    let ds = file.dataset("data").map_err(|e| Error::hdf5(path, e))?;
    let shape = ds.shape();
    if shape.len() != 3 || row >= shape[0] {
        return Err(Error::format(path, format!("row {row} not available in dataset of shape {shape:?}")));
    }
    ds.read_slice_2d::<f32, _>(s![row, .., ..]).map_err(|e| Error::hdf5(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub index: usize,
    pub count: usize,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub patient_random_id: u64,
    #[serde(default)]
    pub source: Option<String>,
    /// Hex key of the sample's random stream.
    #[serde(default)]
    pub seed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsRecord {
    pub mu_water: f64,
    pub mu_air: f64,
    pub mu_max: f64,
    pub n0: f64,
    pub min_photon_count: f64,
    pub sigma_detector: f64,
}

impl From<&PhysicsConstants> for PhysicsRecord {
    fn from(c: &PhysicsConstants) -> Self {
        Self {
            mu_water: c.mu_water,
            mu_air: c.mu_air,
            mu_max: c.mu_max(),
            n0: c.n0,
            min_photon_count: c.min_photon_count,
            sigma_detector: c.sigma_detector,
        }
    }
}

impl PhysicsRecord {
    pub fn constants(&self) -> PhysicsConstants {
        PhysicsConstants {
            mu_water: self.mu_water,
            mu_air: self.mu_air,
            n0: self.n0,
            min_photon_count: self.min_photon_count,
            sigma_detector: self.sigma_detector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub part: String,
    pub count: usize,
    pub shard_size: usize,
    pub shards: Vec<ShardInfo>,
    pub image_grid: ImageGrid,
    pub geometry: ScanGeometry,
    pub geometry_hash: String,
    pub physics: PhysicsRecord,
    #[serde(default)]
    pub global_seed: Option<u64>,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn path(dir: &Path, part: &str) -> PathBuf {
        dir.join(manifest_file_name(part))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        manifest.check(path)?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn check(&self, path: &Path) -> Result<()> {
        let total: usize = self.shards.iter().map(|s| s.count).sum();
        if total != self.count || self.samples.len() != self.count {
            return Err(Error::format(path, "shard counts, sample records and total disagree"));
        }
        if self.geometry.hash() != self.geometry_hash {
            return Err(Error::format(path, "geometry hash does not match the stored geometry"));
        }
        if self.shard_size == 0 || self.shards.iter().any(|s| s.count > self.shard_size) {
            return Err(Error::format(path, "invalid shard size"));
        }
        Ok(())
    }

    /// `(shard, row)` holding sample `index`.
    pub fn locate(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.count {
            return Err(Error::Index { index, len: self.count });
        }
        Ok((index / self.shard_size, index % self.shard_size))
    }

    pub fn file(&self, dir: &Path, shard: usize, kind: ShardKind) -> Result<PathBuf> {
        let info = self.shards.get(shard).ok_or(Error::Index { index: shard, len: self.shards.len() })?;
        let name = info
            .files
            .get(kind.prefix())
            .ok_or_else(|| Error::Config(format!("manifest lists no {} shards", kind.prefix())))?;
        Ok(dir.join(name))
    }

    pub fn patient_ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.patient_random_id).collect()
    }
}

/// One stored pair.
#[derive(Debug, Clone)]
pub struct Sample {
    pub ground_truth: Image,
    pub measurement: Measurement,
    pub patient_random_id: u64,
    pub source: Option<String>,
}

/// Static description of a part being written.
#[derive(Debug, Clone)]
pub struct PartSpec {
    pub part: String,
    pub shard_size: usize,
    pub image_grid: ImageGrid,
    pub geometry: ScanGeometry,
    pub constants: PhysicsConstants,
    pub global_seed: Option<u64>,
}

impl PartSpec {
    pub fn new(part: &str, geometry: ScanGeometry, constants: PhysicsConstants) -> Self {
        Self {
            part: part.to_string(),
            shard_size: DEFAULT_SHARD_SIZE,
            image_grid: ImageGrid::reconstruction(),
            geometry,
            constants,
            global_seed: None,
        }
    }
}

/// Streaming writer: buffers one shard of samples at a time.
pub struct ShardWriter {
    dir: PathBuf,
    spec: PartSpec,
    shards: Vec<ShardInfo>,
    samples: Vec<SampleRecord>,
    gt_buf: Vec<Array2<f32>>,
    obs_buf: Vec<Array2<f32>>,
}

fn to_f32(values: &Array2<f64>) -> Array2<f32> {
    values.mapv(|v| v as f32)
}

fn stack(rows: &[Array2<f32>], shape: (usize, usize)) -> Array3<f32> {
    let mut out = Array3::zeros((rows.len(), shape.0, shape.1));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(src);
    }
    out
}

impl ShardWriter {
    pub fn create(dir: &Path, spec: PartSpec) -> Result<Self> {
        validate_part_name(&spec.part)?;
        if spec.shard_size == 0 {
            return Err(Error::Config("shard size must be positive".into()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            spec,
            shards: Vec::new(),
            samples: Vec::new(),
            gt_buf: Vec::new(),
            obs_buf: Vec::new(),
        })
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        let index = self.samples.len();
        if sample.ground_truth.grid().shape() != self.spec.image_grid.shape() {
            return Err(Error::Contract(format!(
                "sample {index}: ground truth shape {:?}, part expects {:?}",
                sample.ground_truth.grid().shape(),
                self.spec.image_grid.shape()
            )));
        }
        if sample.measurement.geometry() != &self.spec.geometry {
            return Err(Error::Contract(format!("sample {index}: measurement geometry differs from the part's")));
        }
        self.gt_buf.push(to_f32(sample.ground_truth.values()));
        self.obs_buf.push(to_f32(sample.measurement.values()));
        self.samples.push(SampleRecord {
            index,
            patient_random_id: sample.patient_random_id,
            source: sample.source.clone(),
            seed: sample.measurement.provenance().seed.clone(),
        });
        if self.gt_buf.len() == self.spec.shard_size {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.gt_buf.is_empty() {
            return Ok(());
        }
        let shard = self.shards.len();
        let mut files = BTreeMap::new();
        for (kind, buf, shape) in [
            (ShardKind::GroundTruth, &self.gt_buf, self.spec.image_grid.shape()),
            (ShardKind::Observation, &self.obs_buf, self.spec.geometry.shape()),
        ] {
            let name = shard_file_name(kind, &self.spec.part, shard);
            write_stack(&self.dir.join(&name), &stack(buf, shape))?;
            files.insert(kind.prefix().to_string(), name);
        }
        self.shards.push(ShardInfo { index: shard, count: self.gt_buf.len(), files });
        self.gt_buf.clear();
        self.obs_buf.clear();
        Ok(())
    }

    pub fn finish(mut self) -> Result<Manifest> {
        self.flush()?;
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            part: self.spec.part.clone(),
            count: self.samples.len(),
            shard_size: self.spec.shard_size,
            shards: self.shards,
            image_grid: self.spec.image_grid,
            geometry_hash: self.spec.geometry.hash(),
            geometry: self.spec.geometry,
            physics: PhysicsRecord::from(&self.spec.constants),
            global_seed: self.spec.global_seed,
            samples: self.samples,
        };
        manifest.save(&Manifest::path(&self.dir, &manifest.part))?;
        write_patient_ids(&self.dir.join(patient_ids_file_name(&manifest.part)), &manifest.patient_ids())?;
        Ok(manifest)
    }
}

/// Writes all samples of a part and its manifest.
pub fn write_shards<I>(samples: I, spec: PartSpec, dir: &Path) -> Result<Manifest>
where
    I: IntoIterator<Item = Sample>,
{
    let mut writer = ShardWriter::create(dir, spec)?;
    for sample in samples {
        writer.push(&sample)?;
    }
    writer.finish()
}

pub fn write_patient_ids(path: &Path, ids: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_index", "patient_random_id"]).expect("in-memory write");
    for (i, id) in ids.iter().enumerate() {
        w.write_record([i.to_string(), id.to_string()]).expect("in-memory write");
    }
    fs::write(path, w.into_inner().expect("flush")).map_err(|e| Error::io(path, e))
}

pub fn read_patient_ids(path: &Path) -> Result<Vec<u64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut ids = Vec::new();
    for (expected, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let parse = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad row {expected}")))
        };
        if parse(0)? != expected as u64 {
            return Err(Error::format(path, format!("sample indices out of order at row {expected}")));
        }
        ids.push(parse(1)?);
    }
    Ok(ids)
}

/// Random access to a written part.
#[derive(Debug, Clone)]
pub struct DatasetPart {
    dir: PathBuf,
    manifest: Manifest,
}

impl DatasetPart {
    pub fn open(dir: &Path, part: &str) -> Result<Self> {
        validate_part_name(part)?;
        let manifest = Manifest::load(&Manifest::path(dir, part))?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn read_ground_truth(&self, index: usize) -> Result<Image> {
        let (shard, row) = self.manifest.locate(index)?;
        let path = self.manifest.file(&self.dir, shard, ShardKind::GroundTruth)?;
        let values = read_stack_row(&path, row)?.mapv(f64::from);
        Image::new(self.manifest.image_grid, values, ImageUnit::Normalized)
    }

    pub fn read_measurement(&self, index: usize) -> Result<Measurement> {
        let (shard, row) = self.manifest.locate(index)?;
        let path = self.manifest.file(&self.dir, shard, ShardKind::Observation)?;
        let values = read_stack_row(&path, row)?.mapv(f64::from);
        let sino = Sinogram::new(self.manifest.geometry.clone(), values, SinogramUnit::NormalizedPostLog)?;
        let provenance = Provenance::from_constants(
            &self.manifest.physics.constants(),
            self.manifest.samples[index].seed.clone(),
        );
        Measurement::new(sino, provenance)
    }

    /// Ground truth and measurement of sample `index`.
    pub fn read_sample(&self, index: usize) -> Result<(Image, Measurement)> {
        Ok((self.read_ground_truth(index)?, self.read_measurement(index)?))
    }
}

/// Fractions of the published split: 632/60/60/60 of 812 patients.
pub fn standard_split_fractions() -> Vec<f64> {
    let total: usize = STANDARD_PATIENTS.iter().map(|(_, n)| n).sum();
    STANDARD_PATIENTS.iter().map(|(_, n)| *n as f64 / total as f64).collect()
}

/// Patient counts per part by the largest-remainder method.
pub fn allocate_patients(num_patients: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * num_patients as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(num_patients.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Patient-disjoint split: returns the sample indices of each part. Patients
/// are shuffled with a stream derived from `seed` and dealt out by the
/// largest-remainder allocation of `fractions`.
pub fn split_by_patient(patient_ids: &[u64], fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::Contract("fractions must be non-negative and non-empty".into()));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("fractions sum to {sum}, not 1")));
    }
    let mut patients: Vec<u64> = patient_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if patients.len() < fractions.len() {
        return Err(Error::Contract(format!(
            "{} patients cannot fill {} parts",
            patients.len(),
            fractions.len()
        )));
    }
    let mut rng = SliceRng::for_slice(seed, "patient-split", 0);
    for i in (1..patients.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        patients.swap(i, j);
    }
    let counts = allocate_patients(patients.len(), fractions);
    let mut part_of = BTreeMap::new();
    let mut next = 0;
    for (part, &n) in counts.iter().enumerate() {
        for &p in &patients[next..next + n] {
            part_of.insert(p, part);
        }
        next += n;
    }
    let mut parts = vec![Vec::new(); fractions.len()];
    for (index, id) in patient_ids.iter().enumerate() {
        parts[part_of[id]].push(index);
    }
    Ok(parts)
}

/// True if no patient appears in more than one part.
pub fn is_patient_disjoint(parts: &[Vec<usize>], patient_ids: &[u64]) -> bool {
    let mut owner: BTreeMap<u64, usize> = BTreeMap::new();
    for (p, indices) in parts.iter().enumerate() {
        for &i in indices {
            if *owner.entry(patient_ids[i]).or_insert(p) != p {
                return false;
            }
        }
    }
    true
}
