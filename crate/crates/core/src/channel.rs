//! Correlated Gaussian raw data and the noise-transfer algebra.
//!
//! Alice holds `X ~ N(0, V_A)`, Bob holds `Y = X + Z` with `Z ~ N(0, V_Z)`.
//! Bob publishes `Δ = Y − C` for his spinal symbols `C`; Alice computes
//! `C' = X − Δ = C − Z`, a noisy copy of `C` over a virtual AWGN channel.
//!
//! Sampling uses ChaCha20 seeded from a 64-bit seed and the ziggurat
//! standard normal of `rand_distr`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataBlock {
    /// Alice's samples.
    pub x: Vec<f64>,
    /// Bob's samples.
    pub y: Vec<f64>,
    pub v_a: f64,
    pub v_z: f64,
    pub seed: u64,
}

/// Draws `count` pairs `(x_i, y_i = x_i + z_i)` with `V_Z = V_A / snr`.
pub fn generate_correlated(count: usize, v_a: f64, snr: f64, seed: u64) -> Result<RawDataBlock> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if !(v_a > 0.0 && v_a.is_finite()) {
        return Err(Error::invalid(format!("v_a must be positive, got {v_a}")));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::invalid(format!("snr must be positive, got {snr}")));
    }
    let v_z = v_a / snr;
    let (sd_x, sd_z) = (v_a.sqrt(), v_z.sqrt());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(count);
    let mut y = Vec::with_capacity(count);
    for _ in 0..count {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let xi = sd_x * xi;
        let zi: f64 = StandardNormal.sample(&mut rng);
        x.push(xi);
        y.push(xi + sd_z * zi);
    }
    Ok(RawDataBlock { x, y, v_a, v_z, seed })
}

/// Noiseless variant (`Y = X`, `V_Z = 0`), used to test the protocol path.
pub fn generate_noiseless(count: usize, v_a: f64, seed: u64) -> Result<RawDataBlock> {
    let mut block = generate_correlated(count, v_a, 1.0, seed)?;
    block.y = block.x.clone();
    block.v_z = 0.0;
    Ok(block)
}

/// `Δ_i = y_i − c_i`.
pub fn compute_differences(y: &[f64], symbols: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y.len(), symbols.len())?;
    Ok(y.iter().zip(symbols).map(|(y, c)| y - c).collect())
}

/// `c'_i = x_i − Δ_i`.
pub fn recover_side_info(x: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
    check_lengths(x.len(), delta.len())?;
    Ok(x.iter().zip(delta).map(|(x, d)| x - d).collect())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

const DUMP_MAGIC: &[u8; 4] = b"CVRW";
const DUMP_VERSION: u16 = 1;

impl RawDataBlock {
    /// Writes the block as `"CVRW" | version u16 | count u64 | v_a f64 |
    /// v_z f64 | seed u64 | x[count] | y[count]`, all little-endian.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::invalid("x and y differ in length"));
        }
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.x.len() as u64).to_le_bytes())?;
        out.write_all(&self.v_a.to_le_bytes())?;
        out.write_all(&self.v_z.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in self.x.iter().chain(&self.y) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a raw-data dump (bad magic)"));
        }
        let mut b2 = [0u8; 2];
        input.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != DUMP_VERSION {
            return Err(Error::invalid(format!("unsupported dump version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut b8)?;
            Ok(b8)
        };
        let count = u64::from_le_bytes(next(&mut input)?) as usize;
        let v_a = f64::from_le_bytes(next(&mut input)?);
        let v_z = f64::from_le_bytes(next(&mut input)?);
        let seed = u64::from_le_bytes(next(&mut input)?);
        let mut read_vec = |input: &mut R| -> Result<Vec<f64>> {
            (0..count).map(|_| Ok(f64::from_le_bytes(next(input)?))).collect()
        };
        let x = read_vec(&mut input)?;
        let y = read_vec(&mut input)?;
        Ok(RawDataBlock { x, y, v_a, v_z, seed })
    }
}
