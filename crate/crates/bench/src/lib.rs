//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use spinal_recon::channel::{compute_differences, generate_correlated, recover_side_info};
use spinal_recon::codec::{encode_passes, CodecConfig, Message, PassBlock};
use spinal_recon::protocol::{derive_params, ProtocolParams, SessionSecrets};

pub const SECRETS: SessionSecrets = SessionSecrets { s0: 0x51_7a1, rng_seed: 0xbe_4c4 };

/// Default-size parameters at `snr`.
pub fn params(snr: f64) -> ProtocolParams {
    derive_params(snr, 1.0, &CodecConfig::default(), 32, 50).expect("default parameters derive")
}

/// A random key and Alice's side information for its first `passes` passes.
pub fn received(params: &ProtocolParams, passes: u32, seed: u64) -> (Message, Vec<PassBlock>) {
    let cfg = params.codec_config(SECRETS);
    let message = Message::random(cfg.n, &mut ChaCha20Rng::seed_from_u64(seed));
    let sent = encode_passes(&message, 1, passes, &cfg).expect("valid pass range");
    let raw = generate_correlated(params.pass_len() * passes as usize, params.v_a, params.snr, seed)
        .expect("valid channel");
    let len = params.pass_len();
    let side = sent
        .iter()
        .enumerate()
        .map(|(i, pass)| {
            let span = i * len..(i + 1) * len;
            let delta = compute_differences(&raw.y[span.clone()], &pass.symbols).unwrap();
            PassBlock {
                pass_index: pass.pass_index,
                symbols: recover_side_info(&raw.x[span], &delta).unwrap(),
            }
        })
        .collect();
    (message, side)
}
