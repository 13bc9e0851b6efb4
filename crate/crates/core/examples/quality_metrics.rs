//! PSNR and SSIM of increasingly noisy copies of a phantom.

use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let gt = EllipsePhantom::shepp_logan_default().scaled(0.5).rasterize(&ImageGrid::reconstruction());
    let mut rng = SliceRng::from_seed_u64(11);
    println!("{:>8} {:>10} {:>8}", "sigma", "psnr_db", "ssim");
    for sigma in [0.0, 0.005, 0.01, 0.02, 0.05] {
        let noisy = gt.map(gt.unit(), |v| v + sigma * rng.standard_normal());
        let p = psnr(&noisy, &gt)?;
        println!("{sigma:>8} {p:>10.2} {:>8.4}", ssim(&noisy, &gt)?);
    }
    Ok(())
}
