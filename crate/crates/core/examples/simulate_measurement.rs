//! Noisy low-dose observation of a Shepp-Logan phantom scaled to water-like attenuation.
//!
//! `cargo run --example simulate_measurement -- [n0] [seed]`

use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    let mut args = std::env::args().skip(1);
    let n0: f64 = args.next().and_then(|v| v.parse().ok()).unwrap_or(4096.0);
    let seed: u64 = args.next().and_then(|v| v.parse().ok()).unwrap_or(0);

    let gt = EllipsePhantom::shepp_logan_default().scaled(0.125).rasterize(&ImageGrid::reconstruction());
    let gt = gt.with_unit(ImageUnit::Normalized);
    let setup = SimulationSetup {
        constants: PhysicsConstants { n0, ..PhysicsConstants::default() },
        ..SimulationSetup::default()
    };

    let clean = simulate_noiseless(&gt, &setup)?;
    let noisy = simulate(&gt, &setup, &mut SliceRng::for_slice(seed, "example", 0))?;
    let cap = noisy.provenance().cap();
    let capped = noisy.values().iter().filter(|&&v| v == cap).count();
    let rms = (noisy.values() - clean.values()).mapv(|d| d * d).mean().unwrap_or(0.0).sqrt();

    println!("sinogram {:?}, N0 = {n0}", noisy.values().dim());
    println!("max noiseless value {:.4}", clean.values().iter().cloned().fold(0.0, f64::max));
    println!("rms noise {rms:.3e}, cap {cap:.6} reached by {capped} entries");
    Ok(())
}
