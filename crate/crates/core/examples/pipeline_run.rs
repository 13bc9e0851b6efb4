//! End-to-end run of the pipeline commands on synthetic slices with a
//! reduced geometry.
//!
//! `cargo run --example pipeline_run -- [work_dir] [slices]`

use std::path::PathBuf;

use ldct::ingest::write_synthetic_slices;
use ldct::pipeline::{cmd_evaluate, cmd_reconstruct, cmd_simulate, GeometryConfig, RunConfig};

fn main() -> ldct::Result<()> {
    let mut args = std::env::args().skip(1);
    let work = PathBuf::from(args.next().unwrap_or_else(|| "pipeline_out".into()));
    let count: usize = args.next().and_then(|v| v.parse().ok()).unwrap_or(6);

    let slices = work.join("slices");
    write_synthetic_slices(&slices, count, 2, 1)?;
    let config = RunConfig {
        input: Some(slices),
        output: Some(work.join("data")),
        part: "validation".into(),
        seed: 1,
        geometry: GeometryConfig { num_angles: 200, num_detectors: 513, simulation_size: 1000 },
        ..RunConfig::default()
    };
    cmd_simulate(&config)?;
    let data = RunConfig { input: config.output.clone(), ..config };
    cmd_reconstruct(&data)?;
    let report = cmd_evaluate(&data)?;
    print!("{}", report.to_csv());
    Ok(())
}
