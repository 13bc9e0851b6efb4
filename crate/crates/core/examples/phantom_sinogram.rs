//! Shepp-Logan phantom, its sampled and analytic sinograms, and PNG output.
//!
//! `cargo run --example phantom_sinogram -- [output_dir]`

use std::path::PathBuf;
use std::time::Instant;

use ldct::export::{write_image_png, write_sinogram_png, Window};
use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "phantom_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let phantom = EllipsePhantom::shepp_logan_default();
    let geom = make_default_geometry();
    let image = phantom.rasterize(&ImageGrid::simulation());

    let t = Instant::now();
    let sampled = forward_project(&image, &geom)?;
    println!("forward projection at 1000x1000: {:.2?}", t.elapsed());
    let exact = phantom.analytic_sinogram(&geom);

    let max = exact.values().iter().cloned().fold(0.0, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, e) in sampled.values().iter().zip(exact.values()) {
        if e.abs() > 0.05 * max {
            num += (a - e).powi(2);
            den += e * e;
        }
    }
    println!("relative L2 difference on significant beams: {:.3e}", (num / den).sqrt());

    let preview = phantom.rasterize(&ImageGrid::reconstruction());
    write_image_png(&preview, Window::new(1.0, 1.05)?, &out.join("shepp_logan.png"))?;
    write_sinogram_png(&exact, Window::full_range(exact.values().view()), &out.join("sinogram.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
