//! Counter-based random streams.
//!
//! A [`Stream`] is keyed by a 64-bit identifier and produces values by mixing
//! that key with a running counter. Child streams are derived from labels or
//! integer indices without consuming anything from the parent, so a particle
//! can own the stream `step_stream.substream(index)` and the values it sees
//! do not depend on how particles are scheduled across threads.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    /// Root stream for a global seed.
    pub fn new(seed: u64) -> Self {
        let key = mix64(seed ^ 0x6A09_E667_F3BC_C908);
        Self { key, counter: 0 }
    }

    /// Child stream identified by a textual label, e.g. `"scenario"`.
    pub fn derive(&self, label: &str) -> Self {
        self.substream(fnv1a64(label.as_bytes()))
    }

    /// Child stream identified by an integer (time step, particle index, ...).
    pub fn substream(&self, index: u64) -> Self {
        let key = mix64(self.key ^ mix64(index.wrapping_add(0x94D0_49BB_1331_11EB)));
        Self { key, counter: 0 }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(GOLDEN_GAMMA))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
