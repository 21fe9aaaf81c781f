//! Seed derivation and the fixed Normal sampler used for every panel.
//!
//! The sampler is part of the reproducibility contract: `(spec, seed)` must map
//! to the same panel across releases, so neither the stream cipher nor the
//! Normal transform may change without a version bump of the panel format.
//!
//! * Stream: ChaCha8, keyed by four successive SplitMix64 outputs of the seed.
//! * Uniforms: top 53 bits of each `u64`; the radius uniform is shifted to
//!   `(0, 1]` so `ln` never sees zero.
//! * Normals: Box–Muller, both the cosine and the sine variate are used, in
//!   that order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `replication` at grid point `grid_index`.
///
/// `mix64(mix64(mix64(master + γ) ^ (k+1)·γ) ^ (r+1)·δ)`: a pure function of its
/// arguments, so replications can be scheduled in any order.
pub fn derive_seed(master: u64, grid_index: u64, replication: u64) -> u64 {
    let a = mix64(master.wrapping_add(GOLDEN_GAMMA));
    let b = mix64(a ^ grid_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    mix64(b ^ replication.wrapping_add(1).wrapping_mul(STREAM_GAMMA))
}

/// Seed for an auxiliary stream (random-walk means, sample paths) tagged by `tag`.
pub fn derive_aux_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master ^ 0xA5A5_A5A5_A5A5_A5A5) ^ tag.wrapping_mul(STREAM_GAMMA))
}

/// Deterministic stream of standard Normal variates.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        Self {
            rng: ChaCha8Rng::from_seed(key),
            spare: None,
        }
    }

    #[inline]
    fn unit_open_closed(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    fn unit_closed_open(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.unit_open_closed();
        let u2 = self.unit_closed_open();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }
}
