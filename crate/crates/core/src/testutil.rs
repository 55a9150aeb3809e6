//! Deterministic random inputs shared by unit tests, integration tests and
//! benches.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{FourierField, Truncation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Real field with coefficients uniform in `[-amp, amp]^2`.
pub fn random_field(t: Truncation, seed: u64, amp: f64) -> FourierField {
    let mut r = rng(seed);
    let coeffs = (0..t.len())
        .map(|_| Complex64::new(r.random_range(-amp..=amp), r.random_range(-amp..=amp)))
        .collect();
    FourierField::from_coeffs_lossy(t, coeffs)
}

/// Real field whose coefficients decay like `(1 + j^2 + |n|^4)^{-decay}`.
pub fn smooth_random_field(t: Truncation, seed: u64, amp: f64, decay: f64) -> FourierField {
    let u = random_field(t, seed, amp);
    u.map_diagonal(|m| m.weight().powf(-decay))
}
