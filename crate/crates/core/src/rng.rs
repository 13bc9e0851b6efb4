//! Seedable per-slice random streams with platform-independent output.
//!
//! Each slice owns one ChaCha20 stream keyed by SHA-256 of
//! `(global seed, part name, slice index)`, so slices can be generated in any
//! order or in parallel. Uniform and normal variates are derived from raw
//! 64-bit words here rather than through a distribution library, pinning the
//! bit patterns to this code.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// 32-byte stream key for one slice.
pub fn derive_seed(global_seed: u64, part: &str, slice_index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"ldct-slice-stream-v1");
    hasher.update(global_seed.to_le_bytes());
    hasher.update((part.len() as u64).to_le_bytes());
    hasher.update(part.as_bytes());
    hasher.update(slice_index.to_le_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Clone)]
pub struct SliceRng {
    inner: ChaCha20Rng,
}

impl SliceRng {
    pub fn from_key(key: [u8; 32]) -> Self {
        Self { inner: ChaCha20Rng::from_seed(key) }
    }

    pub fn for_slice(global_seed: u64, part: &str, slice_index: u64) -> Self {
        Self::from_key(derive_seed(global_seed, part, slice_index))
    }

    /// Stand-alone stream for tests and examples.
    pub fn from_seed_u64(seed: u64) -> Self {
        Self::for_slice(seed, "", 0)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`, safe to take the log of.
    #[inline]
    fn uniform_open0(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box–Muller, one draw per pair of uniforms).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
