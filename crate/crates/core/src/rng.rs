//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit value. Substreams are
//! derived by hashing a text label with FNV-1a and mixing it into the parent
//! seed with the SplitMix64 finalizer, so a trial's randomness depends only on
//! `(seed, label)` and never on scheduling order.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Root of a reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent child seed for a named purpose.
    pub fn derive(self, label: &str) -> Seed {
        Seed(splitmix64(self.0 ^ fnv1a(label.as_bytes())))
    }

    /// Child seed for the `index`-th member of a labelled family (e.g. trial k).
    pub fn derive_indexed(self, label: &str, index: u64) -> Seed {
        Seed(splitmix64(self.derive(label).0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Single-owner random stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

pub fn make_rng(seed: Seed) -> RandomStream {
    RandomStream { inner: ChaCha8Rng::seed_from_u64(seed.0) }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

impl RandomStream {
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Circularly symmetric complex normal with E|z|² = `variance`.
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let s = (0.5 * variance).sqrt();
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex64::new(s * re, s * im)
    }

    /// Uniform point on the unit circle.
    pub fn unit_phase(&mut self) -> Complex64 {
        let u: f64 = rand::Rng::random(&mut self.inner);
        Complex64::from_polar(1.0, std::f64::consts::TAU * u)
    }
}

/// `n` i.i.d. CN(0, variance) draws (ziggurat normals on each component).
pub fn sample_complex_gaussian(rng: &mut RandomStream, n: usize, variance: f64) -> Result<Vec<Complex64>> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(invalid(format!("variance must be positive and finite, got {variance}")));
    }
    Ok((0..n).map(|_| rng.complex_normal(variance)).collect())
}
