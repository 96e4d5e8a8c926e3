//! Counter-derived random streams, so parallel work reproduces serial results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

/// Independent stream `stream` of the generator family keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex normal with independent unit-variance real and imaginary parts.
pub fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re = normal(rng);
    Complex64::new(re, normal(rng))
}
