use crate::error::{Error, Result};

use super::CodecConfig;

/// Incremental Jenkins one-at-a-time hash.
///
/// The accumulator starts at the seed (0 for the textbook function), so a
/// prefix can be absorbed once and the state cloned for every suffix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OneAtATime {
    acc: u32,
}

impl OneAtATime {
    pub fn with_seed(seed: u32) -> Self {
        OneAtATime { acc: seed }
    }

    /// Accumulator before finalization.
    pub fn state(&self) -> u32 {
        self.acc
    }

    #[inline(always)]
    pub(crate) fn round(acc: u32, byte: u8) -> u32 {
        let mut h = acc.wrapping_add(byte as u32);
        h = h.wrapping_add(h << 10);
        h ^ (h >> 6)
    }

    #[inline(always)]
    pub(crate) fn finalize(acc: u32) -> u32 {
        let mut h = acc;
        h = h.wrapping_add(h << 3);
        h ^= h >> 11;
        h.wrapping_add(h << 15)
    }

    #[inline(always)]
    pub fn write_u8(&mut self, byte: u8) {
        self.acc = Self::round(self.acc, byte);
    }

    #[inline(always)]
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u8(b);
        }
    }

    #[inline(always)]
    pub fn write_u32_be(&mut self, word: u32) {
        self.write(&word.to_be_bytes());
    }

    #[inline(always)]
    pub fn finish(self) -> u32 {
        Self::finalize(self.acc)
    }
}

/// One-at-a-time hash of `bytes` with the standard zero seed.
pub fn one_at_a_time(bytes: &[u8]) -> u32 {
    let mut h = OneAtATime::default();
    h.write(bytes);
    h.finish()
}

/// Spine update `g(s, m)`: one-at-a-time over `[state (4 bytes BE) || block (1 byte)]`.
pub fn hash_state(state: u32, block: u32, k: u32) -> Result<u32> {
    if k == 0 || k > 8 || block >> k != 0 {
        return Err(Error::invalid(format!("block {block:#x} does not fit in k = {k} bits")));
    }
    Ok(hash_state_unchecked(state, block as u8))
}

#[inline(always)]
pub(crate) fn hash_state_unchecked(state: u32, block: u8) -> u32 {
    let mut h = OneAtATime::default();
    h.write_u32_be(state);
    h.write_u8(block);
    h.finish()
}

/// Word `t` of the RNG stream of `spine` for pass `pass_index`.
///
/// The hash is seeded with the pre-shared RNG seed and absorbs
/// `[spine (4 bytes) || pass_index (w/8 bytes) || t (4 bytes)]`, all big-endian.
pub fn rng_word(spine: u32, pass_index: u32, t: u32, cfg: &CodecConfig) -> u32 {
    let mut h = OneAtATime::with_seed(cfg.rng_seed);
    h.write_u32_be(spine);
    write_pass_index(&mut h, pass_index, cfg.seed_width);
    h.write_u32_be(t);
    h.finish()
}

#[inline(always)]
pub(crate) fn write_pass_index(h: &mut OneAtATime, pass_index: u32, seed_width: u32) {
    let bytes = pass_index.to_be_bytes();
    h.write(&bytes[4 - (seed_width / 8) as usize..]);
}

/// First `count` bits (MSB-first) of the RNG stream for `(spine, pass_index)`.
pub fn rng_bits(spine: u32, pass_index: u32, count: usize, cfg: &CodecConfig) -> Result<Vec<bool>> {
    if pass_index == 0 {
        return Err(Error::invalid("pass index is 1-based"));
    }
    if cfg.seed_width < 32 && pass_index >> cfg.seed_width != 0 {
        return Err(Error::invalid(format!(
            "pass index {pass_index} does not fit in {} bits",
            cfg.seed_width
        )));
    }
    if count == 0 {
        return Err(Error::invalid("bit count must be at least 1"));
    }
    let words = count.div_ceil(32);
    let mut bits = Vec::with_capacity(words * 32);
    for t in 0..words as u32 {
        let word = rng_word(spine, pass_index, t, cfg);
        bits.extend((0..32).rev().map(|j| (word >> j) & 1 == 1));
    }
    bits.truncate(count);
    Ok(bits)
}
