//! Simulate, reconstruct with filtered back-projection and score.
//!
//! `cargo run --example fbp_reconstruction -- [output_dir]`

use std::path::PathBuf;

use ldct::export::{write_image_png, Window};
use ldct::fbp::fbp_sinogram;
use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fbp_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let gt = EllipsePhantom::shepp_logan_default()
        .scaled(0.125)
        .rasterize(&ImageGrid::reconstruction())
        .with_unit(ImageUnit::Normalized);
    let meas = simulate(&gt, &SimulationSetup::default(), &mut SliceRng::for_slice(3, "example", 0))?;

    let config = FbpConfig::default();
    let setup = SimulationSetup::default();
    let clean = simulate_noiseless(&gt, &setup)?;
    let reconstructions = [("noiseless", fbp_sinogram(&clean, &config)?), ("low_dose", fbp_reconstruct(&meas, &config)?)];
    for (name, rec) in &reconstructions {
        println!("{name}: PSNR {:.2} dB, SSIM {:.3}", psnr(rec, &gt)?, ssim(rec, &gt)?);
        write_image_png(rec, Window::new(0.11, 0.14)?, &out.join(format!("fbp_{name}.png")))?;
    }
    write_image_png(&gt, Window::new(0.11, 0.14)?, &out.join("ground_truth.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
