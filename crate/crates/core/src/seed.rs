//! Stable 64-bit hashing for seeds and map identities.
//!
//! `std::hash` makes no cross-release stability promise, so seeds are derived
//! with SplitMix64 finalization instead.

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash over a sequence of words.
#[derive(Debug, Clone)]
pub struct StableHasher {
    state: u64,
}

impl StableHasher {
    pub fn new(domain: u64) -> Self {
        StableHasher { state: mix64(domain) }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.state = mix64(self.state ^ mix64(v));
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_u64(s.len() as u64);
        for chunk in s.as_bytes().chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(word));
        }
    }

    pub fn finish(&self) -> u64 {
        mix64(self.state)
    }
}

/// Stable hash of a tuple of words.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut h = StableHasher::new(words.len() as u64);
    words.iter().for_each(|&w| h.write_u64(w));
    h.finish()
}
