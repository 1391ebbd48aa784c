//! Seeded noise sources.
//!
//! All randomness in a run comes from ChaCha8 (`rand_chacha::ChaCha8Rng`).
//! Gaussian variates use the basic Box-Muller transform over two 53-bit
//! uniforms so that any implementation with a ChaCha8 stream reproduces the
//! same numbers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Uniform in the open interval (0, 1), built from the top 53 bits.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Sequential standard-normal stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_standard(&mut self) -> f64 {
        box_muller(&mut self.rng)
    }

    pub fn next_scaled(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.next_standard()
        }
    }
}

/// Counter-addressed standard normals: the value depends only on
/// `(seed, stream, index)`, never on call order.
pub fn gaussian_at(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // Each index consumes two u64 draws.
    rng.set_word_pos(u128::from(index) * 4);
    box_muller(&mut rng)
}
