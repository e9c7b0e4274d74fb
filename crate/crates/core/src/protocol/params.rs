//! Session parameters, rate and efficiency formulas, and leakage accounting.

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::error::{Error, Result};

/// Everything both parties derive before the first pass is sent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// SNR the parameters were derived for (the estimated channel SNR).
    pub snr: f64,
    pub v_a: f64,
    /// Physical noise variance `V_A / snr`.
    pub v_z: f64,
    /// Constellation variance `(2^η − 1)·V_A / snr`.
    pub p_star: f64,
    pub eta: f64,
    /// SNR of the virtual channel, `P* / V_Z = 2^η − 1`.
    pub s_nr_virtual: f64,
    /// Passes sent before the first decoding attempt.
    pub l_min: u32,
    /// CRC tag width in bits.
    pub lambda: u32,
    pub n: u32,
    pub k: u32,
    pub c: u32,
    pub v: u32,
    pub w: u32,
    pub beam_width: u32,
    pub beta_trunc: f64,
    /// Accounted bits of pre-shared RNG seed material, `ceil(w·l_min·c / v)`.
    pub omega: u32,
    /// Privacy-amplification compression rate.
    pub r: f64,
    pub i_max: u32,
}

/// Pre-shared secrets: the initial spine state and the RNG seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSecrets {
    pub s0: u32,
    pub rng_seed: u32,
}

impl ProtocolParams {
    /// Codec configuration for a session with the given secrets.
    pub fn codec_config(&self, secrets: SessionSecrets) -> CodecConfig {
        CodecConfig {
            n: self.n as usize,
            k: self.k,
            c: self.c,
            v: self.v,
            beam_width: self.beam_width as usize,
            beta_trunc: self.beta_trunc,
            p_star: self.p_star,
            s0: secrets.s0,
            rng_seed: secrets.rng_seed,
            seed_width: self.w,
        }
    }

    /// Symbols per pass.
    pub fn pass_len(&self) -> usize {
        (self.n / self.k) as usize
    }

    /// Raw samples needed to run every allowed attempt.
    pub fn max_samples(&self) -> usize {
        self.pass_len() * (self.l_min + self.i_max - 1) as usize
    }

    pub fn code_rate(&self, passes: u32) -> f64 {
        code_rate(self.n, self.k, passes, self.v, self.omega, self.lambda, self.r)
    }

    pub fn leakage_bound(&self) -> f64 {
        leakage_bound(self.n, self.v, self.omega, self.lambda)
    }
}

/// Gaussian channel capacity `0.5·log2(1 + snr)` in bits per sample.
pub fn capacity(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}

/// Secure code rate after `passes` passes:
/// `k·[n − (n/2^(v+ω) + λ) − (v+ω)/r] / (n·L)`.
pub fn code_rate(n: u32, k: u32, passes: u32, v: u32, omega: u32, lambda: u32, r: f64) -> f64 {
    let n = n as f64;
    let secret_bits = (v + omega) as f64;
    let retained = n - (n * (-secret_bits).exp2() + lambda as f64) - secret_bits / r;
    k as f64 * retained / (n * passes as f64)
}

/// Upper bound on what the classical transcript reveals about the key:
/// `n / 2^(v+ω) + λ` bits.
pub fn leakage_bound(n: u32, v: u32, omega: u32, lambda: u32) -> f64 {
    n as f64 * (-((v + omega) as f64)).exp2() + lambda as f64
}

/// Compression rate `1 − (λ/n + 2^−(v+ω))` that removes the leaked bits.
pub fn compression_rate(n: u32, v: u32, omega: u32, lambda: u32) -> f64 {
    1.0 - (lambda as f64 / n as f64 + (-((v + omega) as f64)).exp2())
}

/// Minimum passes for `k` bits per spine value over a channel of SNR `snr_virtual`.
pub fn min_passes(k: u32, snr_virtual: f64) -> u32 {
    (k as f64 / capacity(snr_virtual)).ceil() as u32
}

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_STEPS: usize = 100;

/// Derives the session parameters for channel SNR `snr`.
///
/// `η`, `l_min`, `ω` and `r` depend on each other in a cycle
/// (`r → η → l_min → ω → r`), so they are iterated from `r = 1 − λ/n` until
/// `r` moves by less than 1e-12.
pub fn derive_params(
    snr: f64,
    v_a: f64,
    cfg: &CodecConfig,
    lambda: u32,
    i_max: u32,
) -> Result<ProtocolParams> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::invalid(format!("snr must be positive, got {snr}")));
    }
    if !(v_a > 0.0 && v_a.is_finite()) {
        return Err(Error::invalid(format!("v_a must be positive, got {v_a}")));
    }
    if i_max == 0 {
        return Err(Error::invalid("i_max must be at least 1"));
    }
    cfg.validate()?;

    let n = cfg.n as u32;
    let (k, c, v, w) = (cfg.k, cfg.c, cfg.v, cfg.seed_width);
    let (nf, vf, lf) = (n as f64, v as f64, lambda as f64);
    if nf - lf <= vf {
        return Err(Error::invalid(format!(
            "n = {n} leaves no key bits after λ = {lambda} and v = {v}"
        )));
    }

    let eta_for = |r: f64| {
        (vf * r * nf * (1.0 + snr).log2() + 2.0 * (k * c * w) as f64)
            / (vf * r * (nf - vf / r - lf))
    };

    let mut r = 1.0 - lf / nf;
    for _ in 0..FIXED_POINT_MAX_STEPS {
        let eta = eta_for(r);
        let s_nr_virtual = eta.exp2() - 1.0;
        let l_min = min_passes(k, s_nr_virtual);
        let omega = (w as u64 * l_min as u64 * c as u64).div_ceil(v as u64) as u32;
        let next_r = compression_rate(n, v, omega, lambda);
        if (next_r - r).abs() < FIXED_POINT_TOL {
            let v_z = v_a / snr;
            return Ok(ProtocolParams {
                snr,
                v_a,
                v_z,
                p_star: s_nr_virtual * v_z,
                eta,
                s_nr_virtual,
                l_min,
                lambda,
                n,
                k,
                c,
                v,
                w,
                beam_width: cfg.beam_width as u32,
                beta_trunc: cfg.beta_trunc,
                omega,
                r: next_r,
                i_max,
            });
        }
        r = next_r;
    }
    Err(Error::Internal(format!(
        "parameter fixed point did not converge: snr = {snr}, n = {n}, k = {k}, c = {c}, \
         v = {v}, w = {w}, λ = {lambda}, last r = {r}"
    )))
}
