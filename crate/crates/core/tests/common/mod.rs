//! Shared helpers for integration tests: seeded random draws of valid
//! model parameters.

use epidiff_core::params::Parameters;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-uniform draw over `[lo, hi]` (both positive).
pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Draws one random parameter set that passes validation, spanning wide
/// epidemiologically plausible ranges for every rate and fraction.
pub fn sample_parameters(rng: &mut ChaCha8Rng) -> Parameters {
    let p = Parameters {
        lambda_rec: log_uniform(rng, 1.0, 1e5),
        mu: log_uniform(rng, 1e-5, 1e-2),
        beta: rng.gen_range(0.05..=2.0),
        eta: rng.gen_range(0.0..=1.0),
        phi1: rng.gen_range(0.0..=1.0),
        phi2: rng.gen_range(0.0..=0.1),
        c1: rng.gen_range(0.0..=1.0),
        c2: rng.gen_range(0.0..=1.0),
        r1: rng.gen_range(0.0..=1.0),
        p: rng.gen_range(0.0..=1.0),
        a1: rng.gen_range(0.0..=1.0),
        gamma: log_uniform(rng, 1e-3, 1.5),
        sigma: log_uniform(rng, 1e-3, 1.0),
        theta: rng.gen_range(0.0..=1.0),
        delta: rng.gen_range(0.0..=0.1),
    };
    p.validate().expect("sampled parameters must be valid");
    p
}
