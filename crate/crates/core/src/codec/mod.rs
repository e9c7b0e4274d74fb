//! Spinal encoder and bubble decoder.
//!
//! A message of `n` bits is cut into `n/k` blocks of `k` bits. A hash chain
//! over the blocks produces the spine `s_1..s_{n/k}`; every spine value seeds
//! a random-access bit stream, and each pass takes `c` fresh bits per spine
//! value and maps them onto a truncated Gaussian constellation.
//!
//! Bit order is MSB-first everywhere: message bits into blocks, RNG words
//! into symbol indices, and message bits into bytes.

mod decoder;
mod encoder;
mod hash;
mod mapper;

pub use decoder::{bubble_decode, DecodeResult};
pub use encoder::{compute_spine, encode_pass, encode_passes, Encoder, SpineChain};
pub use hash::{hash_state, one_at_a_time, rng_bits, rng_word, OneAtATime};
pub use mapper::{map_symbol, SymbolMapper};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every constant the encoder and decoder must agree on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Message length in bits.
    pub n: usize,
    /// Message bits absorbed per spine value.
    pub k: u32,
    /// RNG bits consumed per constellation symbol.
    pub c: u32,
    /// Spine state width in bits. Only 32 is supported.
    pub v: u32,
    /// Number of candidates the bubble decoder keeps per tree level.
    pub beam_width: usize,
    /// Truncation width, in standard deviations, of the constellation.
    pub beta_trunc: f64,
    /// Variance of the (untruncated) constellation Gaussian.
    pub p_star: f64,
    /// Pre-shared initial spine state.
    pub s0: u32,
    /// Pre-shared RNG seed; it initializes the RNG hash accumulator.
    pub rng_seed: u32,
    /// Bit width of the pass-index input of the RNG (a multiple of 8, at most 32).
    pub seed_width: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            n: 1024,
            k: 4,
            c: 6,
            v: 32,
            beam_width: 256,
            beta_trunc: 3.0,
            p_star: 1.0,
            s0: 0,
            rng_seed: 0,
            seed_width: 32,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 8 {
            return Err(Error::invalid(format!("k must be in 1..=8, got {}", self.k)));
        }
        if self.n == 0 || !self.n.is_multiple_of(self.k as usize) {
            return Err(Error::invalid(format!(
                "n = {} is not a positive multiple of k = {}",
                self.n, self.k
            )));
        }
        if self.c == 0 || self.c > 16 {
            return Err(Error::invalid(format!("c must be in 1..=16, got {}", self.c)));
        }
        if self.v != 32 {
            return Err(Error::invalid(format!("only v = 32 is supported, got {}", self.v)));
        }
        if self.beam_width == 0 {
            return Err(Error::invalid("beam width must be at least 1"));
        }
        if !(self.p_star > 0.0 && self.p_star.is_finite()) {
            return Err(Error::invalid(format!("p_star must be positive, got {}", self.p_star)));
        }
        if !(self.beta_trunc > 0.0 && self.beta_trunc.is_finite()) {
            return Err(Error::invalid(format!(
                "beta_trunc must be positive, got {}",
                self.beta_trunc
            )));
        }
        if self.seed_width == 0 || self.seed_width > 32 || !self.seed_width.is_multiple_of(8) {
            return Err(Error::invalid(format!(
                "seed width must be 8, 16, 24 or 32 bits, got {}",
                self.seed_width
            )));
        }
        Ok(())
    }

    /// Number of spine values, i.e. symbols per pass.
    pub fn spine_len(&self) -> usize {
        self.n / self.k as usize
    }

    /// Largest magnitude a mapped symbol can approach.
    pub fn amplitude_bound(&self) -> f64 {
        self.beta_trunc * self.p_star.sqrt()
    }
}

/// An `n`-bit message, one `bool` per bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Message(Vec<bool>);

impl Message {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Message(bits)
    }

    /// Builds a message from `k`-bit block values, MSB-first within each block.
    pub fn from_blocks(blocks: &[u32], k: u32) -> Self {
        let mut bits = Vec::with_capacity(blocks.len() * k as usize);
        for &block in blocks {
            for j in (0..k).rev() {
                bits.push((block >> j) & 1 == 1);
            }
        }
        Message(bits)
    }

    /// Draws `n` uniform bits.
    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Message((0..n).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] = !self.0[index];
    }

    /// Splits into `k`-bit block values. `len()` must be a multiple of `k`.
    pub fn blocks(&self, k: u32) -> Vec<u32> {
        self.0
            .chunks(k as usize)
            .map(|chunk| chunk.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32))
            .collect()
    }

    /// Packs the bits MSB-first into bytes; a trailing partial byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (j, &b)| acc | ((b as u8) << (7 - j)))
            })
            .collect()
    }
}

/// One pass worth of real-valued symbols (or their noisy versions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassBlock {
    /// 1-based pass number.
    pub pass_index: u32,
    pub symbols: Vec<f64>,
}
