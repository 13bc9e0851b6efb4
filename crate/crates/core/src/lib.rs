//! Low-dose parallel-beam CT dataset toolkit.
//!
//! Builds paired ground-truth / noisy-observation datasets from clinical
//! slices: HU preprocessing, a ray-sampling Radon projector with its exact
//! adjoint, Poisson photon statistics, filtered back-projection, PSNR/SSIM
//! and sharded HDF5 storage.
//!
//! ```no_run
//! use ldct::prelude::*;
//!
//! let phantom = EllipsePhantom::shepp_logan_default();
//! let gt = phantom.rasterize(&ImageGrid::reconstruction());
//! let setup = SimulationSetup::default();
//! let mut rng = SliceRng::for_slice(7, "demo", 0);
//! let gt = gt.map(ImageUnit::Normalized, |v| v.clamp(0.0, 1.0));
//! let meas = simulate(&gt, &setup, &mut rng)?;
//! let recon = fbp_reconstruct(&meas, &FbpConfig::default())?;
//! println!("PSNR {:.2} dB", psnr(&recon, &gt)?);
//! # Ok::<(), ldct::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod export;
pub mod fbp;
pub mod geometry;
pub mod image;
pub mod ingest;
pub mod metrics;
pub mod phantoms;
pub mod physics;
pub mod pipeline;
pub mod projector;
pub mod rng;

pub use error::{Error, Result};

/// Common imports.
pub mod prelude {
    pub use crate::dataset::{split_by_patient, write_shards, DatasetPart, PartSpec, Sample};
    pub use crate::error::{Error, Result};
    pub use crate::fbp::{fbp_reconstruct, fbp_sinogram, FbpConfig, RampFilter};
    pub use crate::geometry::{make_default_geometry, ImageGrid, ScanGeometry};
    pub use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};
    pub use crate::ingest::{hu_to_mu, ingest_slice, PhysicsConstants, RawSlice, SliceMeta};
    pub use crate::metrics::{psnr, ssim, MetricReport};
    pub use crate::phantoms::{Ellipse, EllipsePhantom};
    pub use crate::physics::{simulate, simulate_from_mu, simulate_noiseless, Measurement, SimulationSetup};
    pub use crate::projector::{back_project, forward_project};
    pub use crate::rng::SliceRng;
}
