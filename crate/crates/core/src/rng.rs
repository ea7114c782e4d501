//! Seeded randomness.
//!
//! Everything random in this crate draws from ChaCha8 — a named, fixed
//! algorithm with explicit 64-bit streams — never from the platform RNG.
//! A master seed plus a domain string plus a stream index identifies every
//! random sequence in a run, so stages can be re-executed in any order (or
//! in parallel) without changing results.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to fold a domain label into the seed.
fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent ChaCha8 stream for `(master seed, domain, index)`.
pub fn stream(master: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ fnv1a64(domain));
    rng.set_stream(index);
    rng
}

/// Uniform draw in the open interval (0, 1), 2^-54 resolution.
#[inline]
pub fn uniform_open01(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal pair via Box-Muller.
///
/// Uses [`crate::detmath`] for ln/sin/cos so the generator output is
/// platform independent.
#[inline]
pub fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = uniform_open01(rng);
    let u2 = uniform_open01(rng);
    let r = (-2.0 * crate::detmath::ln(u1)).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * crate::detmath::cos(theta), r * crate::detmath::sin(theta))
}

/// Fill a buffer with standard normal draws.
pub fn fill_gaussian(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = gaussian_pair(rng);
        out[i] = a;
        out[i + 1] = b;
        i += 2;
    }
    if i < out.len() {
        out[i] = gaussian_pair(rng).0;
    }
}

/// Single standard normal draw (discards the Box-Muller partner).
#[inline]
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    gaussian_pair(rng).0
}
