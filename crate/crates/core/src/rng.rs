//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`SplitMix64`], Steele, Lea and
//! Flood's splittable 64-bit generator, so results are reproducible across
//! platforms for a fixed seed. Gaussian variates use the Box-Muller
//! transform and are consumed in pairs.

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Seed for an independent sub-stream, e.g. one Monte-Carlo trial.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // one SplitMix64 output step applied to the combined state
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal variates via Box-Muller.
#[derive(Debug, Clone)]
pub struct BoxMuller {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeded(seed),
            spare: None,
        }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(TAU * u2);
        self.spare = Some(radius * s);
        radius * c
    }
}
