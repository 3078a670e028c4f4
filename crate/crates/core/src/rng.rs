//! Counter-based random numbers: every draw is a pure function of
//! `(seed, stream, counter)`, so results do not depend on call order.

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: mix(seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn u64_at(&self, stream: u64, counter: u64) -> u64 {
        mix(self.key ^ mix(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mix(counter)))
    }

    /// Uniform integer in `0..n` (`n > 0`).
    pub fn below(&self, stream: u64, counter: u64, n: usize) -> usize {
        // Multiply-shift avoids the modulo bias for any n < 2^32.
        ((self.u64_at(stream, counter) >> 32).wrapping_mul(n as u64) >> 32) as usize
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&self, stream: u64, counter: u64) -> f64 {
        (self.u64_at(stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
