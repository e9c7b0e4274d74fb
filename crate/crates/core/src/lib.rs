//! Rateless information reconciliation for continuous-variable QKD built on
//! spinal codes.
//!
//! The crate is split along the data path of one reconciliation block:
//!
//! * [`codec`]: spine hashing, RNG expansion, truncated-Gaussian mapping and
//!   the bubble (beam search) decoder.
//! * [`channel`]: correlated Gaussian raw data and the difference algebra
//!   that turns the physical channel into a virtual AWGN channel for the
//!   spinal symbols.
//! * [`protocol`]: parameter derivation, CRC gating, leakage accounting and
//!   the Bob (encoder) / Alice (decoder) state machines.
//! * [`transport`]: length-prefixed framing and stream-driven sessions.
//! * [`experiment`]: Monte-Carlo sweeps and aggregate statistics.

pub mod channel;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod normal;
pub mod protocol;
pub mod transport;

pub use codec::{
    bubble_decode, compute_spine, encode_passes, hash_state, map_symbol, rng_bits, CodecConfig,
    DecodeResult, Message, PassBlock, SpineChain,
};
pub use error::{Error, Result};
pub use protocol::{
    capacity, code_rate, crc_tag, derive_params, leakage_bound, AliceSession, BobSession,
    OutcomeRecord, ProtocolMessage, ProtocolParams, SessionSecrets,
};
