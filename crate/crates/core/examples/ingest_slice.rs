//! Reads a stored slice (or generates a synthetic one) and runs the
//! preprocessing chain: crop, rescale, dequantize, HU → μ, normalize.
//!
//! `cargo run --example ingest_slice -- [slice.raw]`

use std::path::Path;

use ldct::ingest::{read_slice, synthetic_slice};
use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(path) => read_slice(Path::new(&path))?,
        None => synthetic_slice("synthetic", 7, 1000),
    };
    let hu = raw.hounsfield();
    let (lo, hi) = hu.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("{}: {:?} pixels, HU range [{lo}, {hi}]", raw.name, raw.pixels.dim());

    let constants = PhysicsConstants::default();
    let out = ingest_slice(&raw, &constants, &mut SliceRng::for_slice(1, "train", 0))?;
    let gt = out.ground_truth.values();
    let clipped = gt.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
    println!("mu_max = {:.5} /m", constants.mu_max());
    println!("cropped grid {:?}, mean mu {:.3} /m", out.mu.grid().shape(), out.mu.mean());
    println!("normalized mean {:.4}, {clipped} pixels at a clip bound", out.ground_truth.mean());
    Ok(())
}
