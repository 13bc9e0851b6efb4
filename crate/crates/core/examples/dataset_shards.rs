//! Writes a small sharded part and reads samples back by index.
//!
//! `cargo run --example dataset_shards -- [output_dir]`

use std::path::PathBuf;

use ldct::dataset::ShardKind;
use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "shards_out".into()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let setup = SimulationSetup {
        sim_grid: ImageGrid::square(500, 0.13)?,
        geometry: ScanGeometry::covering(0.13, 60, 257)?,
        ..SimulationSetup::default()
    };
    let mut spec = PartSpec::new("validation", setup.geometry.clone(), setup.constants);
    spec.shard_size = 4;
    spec.global_seed = Some(5);

    let samples = (0..10u64).map(|i| {
        let r = 0.02 + 0.006 * i as f64;
        let gt = EllipsePhantom::disk(r, 0.4)?.rasterize(&ImageGrid::reconstruction()).with_unit(ImageUnit::Normalized);
        let measurement = simulate(&gt, &setup, &mut SliceRng::for_slice(5, "validation", i))?;
        Ok(Sample { ground_truth: gt, measurement, patient_random_id: 100 + i / 3, source: None })
    });
    let samples: Vec<Sample> = samples.collect::<ldct::Result<_>>()?;
    let manifest = write_shards(samples, spec, &dir)?;
    for shard in &manifest.shards {
        println!("shard {}: {} samples, {}", shard.index, shard.count, manifest.file(&dir, shard.index, ShardKind::Observation)?.display());
    }

    let part = DatasetPart::open(&dir, "validation")?;
    let (gt, meas) = part.read_sample(9)?;
    println!("sample 9 located at {:?}: gt mean {:.4}, observation max {:.4}", manifest.locate(9)?, gt.mean(),
        meas.values().iter().cloned().fold(0.0, f64::max));
    Ok(())
}
