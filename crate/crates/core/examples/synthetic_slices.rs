//! Writes a set of synthetic 512x512 slices in the ingest format.
//!
//! `cargo run --example synthetic_slices -- <dir> [count] [slices_per_patient] [seed]`

use std::path::PathBuf;

fn main() -> ldct::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map(String::as_str).unwrap_or("synthetic_slices"));
    let arg = |i: usize, default: u64| args.get(i).and_then(|v| v.parse().ok()).unwrap_or(default);
    let paths = ldct::ingest::write_synthetic_slices(&dir, arg(1, 10) as usize, arg(2, 5) as usize, arg(3, 1))?;
    println!("wrote {} slices to {}", paths.len(), dir.display());
    Ok(())
}
