//! Counter-based random streams.
//!
//! Every random draw in the simulator is addressed by a tuple such as
//! `(master_seed, tag, device, cell)`. The tuple is hashed into a 64-bit
//! stream key and the stream output is `mix(key ^ mix(counter * GAMMA))`, so
//! any draw can be regenerated independently of the order in which the other
//! draws were made. This is what makes generation and readout independent of
//! the number of worker threads.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_DOMAIN: u64 = 0xD134_2543_DE82_EF95;

/// Component tags used when deriving stream keys.
pub mod tag {
    pub const GLOBAL: u64 = 0x01;
    pub const REGION: u64 = 0x02;
    pub const ADJACENCY: u64 = 0x03;
    pub const LOCAL: u64 = 0x04;
    pub const NOISE: u64 = 0x05;
    pub const SESSION: u64 = 0x06;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed and a path of integers into a stream key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    let mut key = mix64(seed ^ KEY_DOMAIN);
    for &part in path {
        key = mix64(key ^ mix64(part.wrapping_add(GAMMA)));
    }
    key
}

/// A stream keyed by a derived key; cheap to create, one per draw site.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn from_path(seed: u64, path: &[u64]) -> Self {
        Self::new(derive_key(seed, path))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(self.counter.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// One standard-normal draw addressed by `(seed, path)`.
pub fn normal_at(seed: u64, path: &[u64]) -> f64 {
    CounterRng::from_path(seed, path).standard_normal()
}
