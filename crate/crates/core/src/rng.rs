//! Counter-based, splittable random streams.
//!
//! A stream is identified by a 64-bit key derived from a root seed and a path
//! of integers (record index, node id, step, ...). The n-th output of a stream
//! is a pure function of `(key, n)`, so results never depend on the order in
//! which streams are created or consumed. The mixing function is the
//! SplitMix64 finalizer, which is integer-only and therefore identical on
//! every platform.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// Domain tags keep streams used for different purposes apart even when
/// their numeric paths coincide.
pub mod domain {
    pub const SYNTH_CENTER: u64 = 0x01;
    pub const SYNTH_RECORD: u64 = 0x02;
    pub const RANDOM_ENCODING: u64 = 0x03;
    pub const CONDITION_MAP: u64 = 0x04;
    pub const INITIAL_NOISE: u64 = 0x05;
    pub const STEP_NOISE: u64 = 0x06;
    pub const DIVERSITY_SUBSAMPLE: u64 = 0x07;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of a random stream. Keys form a tree: `StreamKey::root(seed)` and then
/// one [`StreamKey::child`] call per path component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ KEY_GAMMA))
    }

    pub fn child(self, component: u64) -> Self {
        StreamKey(mix64(
            self.0.rotate_left(17) ^ mix64(component.wrapping_add(GOLDEN_GAMMA)),
        ))
    }

    /// Convenience for `root(seed).child(p0).child(p1)...`.
    pub fn path(seed: u64, components: &[u64]) -> Self {
        components
            .iter()
            .fold(StreamKey::root(seed), |key, &c| key.child(c))
    }

    pub fn stream(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Random stream whose n-th word is `mix64(key + (n + 1) * gamma)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// The word at absolute position `index`, without advancing.
    pub fn word_at(&self, index: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    pub fn position(&self) -> u64 {
        self.counter
    }

    /// One standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    /// Fills a vector of `len` independent standard normal draws.
    pub fn gaussian_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.gaussian()).collect()
    }

    /// Uniform index in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.random_range(0..bound)
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let word = self.word_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        word
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
