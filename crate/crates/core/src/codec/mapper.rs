use crate::error::{Error, Result};
use crate::normal;

use super::CodecConfig;

/// Maps a `c`-bit index onto the truncated Gaussian constellation:
/// `f(b) = Φ⁻¹(γ + (1 − 2γ)·α)·√P*` with `α = (2b + 1) / 2^(c+1)` and
/// `γ = Φ(−β_trunc)`.
pub fn map_symbol(b: u32, cfg: &CodecConfig) -> Result<f64> {
    if cfg.c == 0 || cfg.c > 31 || b >> cfg.c != 0 {
        return Err(Error::invalid(format!("symbol index {b} does not fit in c = {} bits", cfg.c)));
    }
    Ok(level(b, cfg.c, normal::cdf(-cfg.beta_trunc), cfg.p_star.sqrt()))
}

fn level(b: u32, c: u32, gamma: f64, scale: f64) -> f64 {
    let alpha = (2.0 * b as f64 + 1.0) / 2f64.powi(c as i32 + 1);
    normal::quantile(gamma + (1.0 - 2.0 * gamma) * alpha) * scale
}

/// All `2^c` constellation levels, precomputed.
#[derive(Clone, Debug)]
pub struct SymbolMapper {
    c: u32,
    levels: Vec<f64>,
}

impl SymbolMapper {
    pub fn new(cfg: &CodecConfig) -> Self {
        let gamma = normal::cdf(-cfg.beta_trunc);
        let scale = cfg.p_star.sqrt();
        let levels = (0..1u32 << cfg.c)
            .map(|b| level(b, cfg.c, gamma, scale))
            .collect();
        SymbolMapper { c: cfg.c, levels }
    }

    /// Level for the top `c` bits of an RNG word.
    #[inline(always)]
    pub fn from_word(&self, word: u32) -> f64 {
        self.levels[(word >> (32 - self.c)) as usize]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}
