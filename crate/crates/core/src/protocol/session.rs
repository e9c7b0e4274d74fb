//! Bob (encoder) and Alice (decoder) session state machines.
//!
//! Bob owns the key `M` and the raw data `Y`; Alice owns `X`. Message flow:
//!
//! ```text
//! Bob   -> HELLO(params), DELTA x l_min, CRC_TAG
//! Alice -> ACK | NACK | ABORT
//! Bob   -> DELTA (one more pass) | ABORT        (after NACK)
//! ...
//! ```
//!
//! Neither side ever touches the other's private data; everything crosses
//! as [`ProtocolMessage`] values.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{compute_spine, Encoder, Message, PassBlock, SpineChain};
use crate::error::{Error, Result};

use super::crc::crc_tag;
use super::params::{capacity, ProtocolParams, SessionSecrets};

/// Passes Bob adds after every NACK.
pub const PASS_INCREMENT: u32 = 1;

/// Why a session gave up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    /// Alice failed `i_max` decoding attempts.
    AttemptsExhausted = 1,
    /// Bob has no raw samples left for another pass.
    RawDataExhausted = 2,
    /// Malformed or unexpected message.
    ProtocolError = 3,
    /// The peer went away mid-session.
    Disconnected = 4,
}

impl AbortReason {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => AbortReason::AttemptsExhausted,
            2 => AbortReason::RawDataExhausted,
            3 => AbortReason::ProtocolError,
            4 => AbortReason::Disconnected,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolMessage {
    Hello(ProtocolParams),
    Delta { pass_index: u32, values: Vec<f64> },
    CrcTag(u32),
    Ack,
    Nack,
    Abort(AbortReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub sender: Party,
    pub message: ProtocolMessage,
}

/// Everything that crossed the classical channel, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub decode_attempts: u32,
    pub passes_sent: u32,
    /// Δ samples published by Bob.
    pub delta_samples: u64,
    /// 64 bits per Δ sample plus the CRC tag once it is sent.
    pub classical_bits_disclosed: u64,
}

impl SessionTranscript {
    fn record(&mut self, sender: Party, message: &ProtocolMessage, lambda: u32) {
        match message {
            ProtocolMessage::Delta { values, .. } => {
                self.passes_sent += 1;
                self.delta_samples += values.len() as u64;
                self.classical_bits_disclosed += 64 * values.len() as u64;
            }
            ProtocolMessage::CrcTag(_) => self.classical_bits_disclosed += lambda as u64,
            _ => {}
        }
        self.entries.push(TranscriptEntry {
            sender,
            message: message.clone(),
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionState {
    Running,
    Succeeded,
    Failed(AbortReason),
}

/// Alice's verdict after one decoding attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ack,
    Nack,
    Fail,
}

/// Per-block result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    /// True channel SNR of the block.
    pub snr: f64,
    pub seed: u64,
    pub success: bool,
    /// Passes used.
    #[serde(rename = "L")]
    pub passes: u32,
    /// Decoding attempts.
    pub iterations: u32,
    /// Secure code rate at `L` passes.
    #[serde(rename = "R")]
    pub code_rate: f64,
    /// `R / capacity(snr)`, only on success.
    pub beta: Option<f64>,
    pub leaked_bits: f64,
    pub millis: f64,
}

impl OutcomeRecord {
    /// The record with wall-clock time cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        OutcomeRecord {
            millis: 0.0,
            ..self.clone()
        }
    }
}

fn outcome(
    params: &ProtocolParams,
    transcript: &SessionTranscript,
    state: SessionState,
    channel_snr: f64,
) -> OutcomeRecord {
    let success = state == SessionState::Succeeded;
    let passes = transcript.passes_sent;
    let code_rate = params.code_rate(passes.max(1));
    OutcomeRecord {
        snr: channel_snr,
        seed: 0,
        success,
        passes,
        iterations: transcript.decode_attempts,
        code_rate,
        beta: success.then(|| code_rate / capacity(channel_snr)),
        leaked_bits: params.leakage_bound(),
        millis: 0.0,
    }
}

/// Bob's side: draws the key, encodes passes and publishes differences.
#[derive(Debug)]
pub struct BobSession {
    params: ProtocolParams,
    encoder: Encoder,
    message: Message,
    spine: SpineChain,
    y: Vec<f64>,
    cursor: usize,
    state: SessionState,
    transcript: SessionTranscript,
}

impl BobSession {
    /// Draws `M` from `key_seed`, encodes passes `1..=l_min` and returns the
    /// opening messages: HELLO, one DELTA per pass, CRC_TAG.
    pub fn start(
        params: ProtocolParams,
        secrets: SessionSecrets,
        y: Vec<f64>,
        key_seed: u64,
    ) -> Result<(Self, Vec<ProtocolMessage>)> {
        let needed = params.pass_len() * params.l_min as usize;
        if y.len() < needed {
            return Err(Error::ResourceExhausted(format!(
                "{} raw samples cannot cover l_min = {} passes ({needed} samples)",
                y.len(),
                params.l_min
            )));
        }
        let encoder = Encoder::new(params.codec_config(secrets))?;
        let mut rng = ChaCha20Rng::seed_from_u64(key_seed);
        let message = Message::random(params.n as usize, &mut rng);
        let spine = compute_spine(&message, encoder.config())?;

        let mut session = BobSession {
            params,
            encoder,
            message,
            spine,
            y,
            cursor: 0,
            state: SessionState::Running,
            transcript: SessionTranscript::default(),
        };
        let mut out = vec![ProtocolMessage::Hello(session.params.clone())];
        for _ in 0..session.params.l_min {
            out.push(session.next_delta()?);
        }
        out.push(ProtocolMessage::CrcTag(crc_tag(&session.message)));
        session.log_sent(&out);
        Ok((session, out))
    }

    fn next_delta(&mut self) -> Result<ProtocolMessage> {
        let len = self.params.pass_len();
        let pass_index = self.transcript.passes_sent + 1 + self.pending_in_flight();
        let pass = self.encoder.pass(&self.spine, pass_index)?;
        let y = &self.y[self.cursor..self.cursor + len];
        self.cursor += len;
        let values = crate::channel::compute_differences(y, &pass.symbols)?;
        Ok(ProtocolMessage::Delta { pass_index, values })
    }

    /// Passes built but not yet logged (only non-zero inside `start`/`more`).
    fn pending_in_flight(&self) -> u32 {
        (self.cursor / self.params.pass_len()) as u32 - self.transcript.passes_sent
    }

    fn log_sent(&mut self, out: &[ProtocolMessage]) {
        for m in out {
            self.transcript.record(Party::Bob, m, self.params.lambda);
        }
    }

    /// Encodes and publishes the next `n_passes` passes. Running out of raw
    /// data fails the session and yields a single ABORT instead.
    pub fn more(&mut self, n_passes: u32) -> Result<Vec<ProtocolMessage>> {
        if self.state != SessionState::Running {
            return Err(Error::Protocol("session is not running".into()));
        }
        let len = self.params.pass_len();
        if self.y.len() - self.cursor < len * n_passes as usize {
            self.state = SessionState::Failed(AbortReason::RawDataExhausted);
            let out = vec![ProtocolMessage::Abort(AbortReason::RawDataExhausted)];
            self.log_sent(&out);
            return Ok(out);
        }
        let out = (0..n_passes)
            .map(|_| self.next_delta())
            .collect::<Result<Vec<_>>>()?;
        self.log_sent(&out);
        Ok(out)
    }

    /// Reacts to one message from Alice.
    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>> {
        self.transcript.record(Party::Alice, &msg, self.params.lambda);
        if self.state != SessionState::Running {
            return Err(Error::Protocol(format!("message after session end: {msg:?}")));
        }
        match msg {
            ProtocolMessage::Ack => {
                self.transcript.decode_attempts += 1;
                self.state = SessionState::Succeeded;
                Ok(vec![])
            }
            ProtocolMessage::Nack => {
                self.transcript.decode_attempts += 1;
                self.more(PASS_INCREMENT)
            }
            ProtocolMessage::Abort(reason) => {
                if reason == AbortReason::AttemptsExhausted {
                    self.transcript.decode_attempts += 1;
                }
                self.state = SessionState::Failed(reason);
                Ok(vec![])
            }
            other => {
                self.state = SessionState::Failed(AbortReason::ProtocolError);
                let out = vec![ProtocolMessage::Abort(AbortReason::ProtocolError)];
                self.log_sent(&out);
                Err(Error::Protocol(format!("Bob cannot handle {other:?}")))
            }
        }
    }

    /// Marks the session failed after the transport lost the peer.
    pub fn disconnect(&mut self) {
        if self.state == SessionState::Running {
            self.state = SessionState::Failed(AbortReason::Disconnected);
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn message(&self) -> &Message {
        &self.message
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn transcript(&self) -> &SessionTranscript {
        &self.transcript
    }

    pub fn passes_sent(&self) -> u32 {
        self.transcript.passes_sent
    }

    pub fn finalize(&self, channel_snr: f64) -> OutcomeRecord {
        outcome(&self.params, &self.transcript, self.state, channel_snr)
    }
}

/// Alice's side: turns differences into side information and decodes.
#[derive(Debug)]
pub struct AliceSession {
    expected: ProtocolParams,
    encoder: Encoder,
    x: Vec<f64>,
    cursor: usize,
    side_info: Vec<PassBlock>,
    pending: Vec<(u32, Vec<f64>)>,
    hello_seen: bool,
    tag: Option<u32>,
    /// Passes that must arrive before the next attempt.
    awaiting: u32,
    state: SessionState,
    key: Option<Message>,
    last_cost: Option<f64>,
    transcript: SessionTranscript,
}

impl AliceSession {
    /// `expected` are the parameters Alice derived herself; Bob's HELLO must match.
    pub fn new(expected: ProtocolParams, secrets: SessionSecrets, x: Vec<f64>) -> Result<Self> {
        let encoder = Encoder::new(expected.codec_config(secrets))?;
        let awaiting = expected.l_min;
        Ok(AliceSession {
            expected,
            encoder,
            x,
            cursor: 0,
            side_info: Vec::new(),
            pending: Vec::new(),
            hello_seen: false,
            tag: None,
            awaiting,
            state: SessionState::Running,
            key: None,
            last_cost: None,
            transcript: SessionTranscript::default(),
        })
    }

    /// Reacts to one message from Bob; returns Alice's replies.
    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>> {
        self.transcript.record(Party::Bob, &msg, self.expected.lambda);
        if self.state != SessionState::Running {
            return Err(Error::Protocol(format!("message after session end: {msg:?}")));
        }
        let result = match msg {
            ProtocolMessage::Hello(params) => {
                if self.hello_seen {
                    Err(Error::Protocol("duplicate HELLO".into()))
                } else if params != self.expected {
                    Err(Error::Protocol("HELLO parameters differ from the local derivation".into()))
                } else {
                    self.hello_seen = true;
                    Ok(vec![])
                }
            }
            _ if !self.hello_seen => Err(Error::Protocol("expected HELLO first".into())),
            ProtocolMessage::Delta { pass_index, values } => {
                self.pending.push((pass_index, values));
                self.maybe_attempt()
            }
            ProtocolMessage::CrcTag(tag) => {
                if self.tag.replace(tag).is_some() {
                    Err(Error::Protocol("duplicate CRC tag".into()))
                } else {
                    self.maybe_attempt()
                }
            }
            ProtocolMessage::Abort(reason) => {
                self.state = SessionState::Failed(reason);
                Ok(vec![])
            }
            other => Err(Error::Protocol(format!("Alice cannot handle {other:?}"))),
        };
        match result {
            Ok(out) => {
                self.log_sent(&out);
                Ok(out)
            }
            Err(e) => {
                self.state = SessionState::Failed(AbortReason::ProtocolError);
                self.log_sent(&[ProtocolMessage::Abort(AbortReason::ProtocolError)]);
                Err(e)
            }
        }
    }

    fn log_sent(&mut self, out: &[ProtocolMessage]) {
        for m in out {
            self.transcript.record(Party::Alice, m, self.expected.lambda);
        }
    }

    fn maybe_attempt(&mut self) -> Result<Vec<ProtocolMessage>> {
        if self.tag.is_none() || (self.pending.len() as u32) < self.awaiting {
            return Ok(vec![]);
        }
        let deltas = std::mem::take(&mut self.pending);
        let reply = match self.attempt(deltas)? {
            Verdict::Ack => ProtocolMessage::Ack,
            Verdict::Nack => ProtocolMessage::Nack,
            Verdict::Fail => ProtocolMessage::Abort(AbortReason::AttemptsExhausted),
        };
        Ok(vec![reply])
    }

    /// Folds `new_deltas` into the side information, decodes over every pass
    /// so far and checks the CRC tag.
    pub fn attempt(&mut self, new_deltas: Vec<(u32, Vec<f64>)>) -> Result<Verdict> {
        let tag = self
            .tag
            .ok_or_else(|| Error::Protocol("decoding attempt before the CRC tag".into()))?;
        let len = self.expected.pass_len();
        for (pass_index, delta) in new_deltas {
            let expected_index = self.side_info.len() as u32 + 1;
            if pass_index != expected_index || delta.len() != len {
                return Err(Error::Protocol(format!(
                    "DELTA for pass {pass_index} with {} samples does not align with pass \
                     {expected_index} of {len} samples",
                    delta.len()
                )));
            }
            if self.x.len() - self.cursor < len {
                return Err(Error::Protocol("DELTA beyond Alice's raw data".into()));
            }
            let x = &self.x[self.cursor..self.cursor + len];
            self.cursor += len;
            let symbols = crate::channel::recover_side_info(x, &delta)?;
            self.side_info.push(PassBlock { pass_index, symbols });
        }

        self.transcript.decode_attempts += 1;
        let decoded = self.encoder.decode(&self.side_info)?;
        self.last_cost = Some(decoded.cost);
        if crc_tag(&decoded.message) == tag {
            self.key = Some(decoded.message);
            self.state = SessionState::Succeeded;
            return Ok(Verdict::Ack);
        }
        if self.transcript.decode_attempts >= self.expected.i_max {
            self.state = SessionState::Failed(AbortReason::AttemptsExhausted);
            return Ok(Verdict::Fail);
        }
        self.awaiting = PASS_INCREMENT;
        Ok(Verdict::Nack)
    }

    pub fn disconnect(&mut self) {
        if self.state == SessionState::Running {
            self.state = SessionState::Failed(AbortReason::Disconnected);
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    /// The corrected key, once the CRC check has passed.
    pub fn key(&self) -> Option<&Message> {
        self.key.as_ref()
    }

    /// Path cost of the most recent decoding attempt.
    pub fn last_cost(&self) -> Option<f64> {
        self.last_cost
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.expected
    }

    pub fn transcript(&self) -> &SessionTranscript {
        &self.transcript
    }

    pub fn finalize(&self, channel_snr: f64) -> OutcomeRecord {
        outcome(&self.expected, &self.transcript, self.state, channel_snr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_correlated, generate_noiseless};
    use crate::codec::{encode_passes, CodecConfig};
    use crate::protocol::derive_params;

    fn small_params(snr: f64, i_max: u32) -> ProtocolParams {
        let cfg = CodecConfig { n: 256, beam_width: 16, ..Default::default() };
        derive_params(snr, 1.0, &cfg, 32, i_max).unwrap()
    }

    const SECRETS: SessionSecrets = SessionSecrets { s0: 0x1234, rng_seed: 0x9876 };

    /// Runs both sides to completion in memory.
    fn run(bob: &mut BobSession, alice: &mut AliceSession, opening: Vec<ProtocolMessage>) {
        let mut to_alice = opening;
        while !to_alice.is_empty() {
            let mut to_bob = Vec::new();
            for m in to_alice.drain(..) {
                to_bob.extend(alice.handle(m).unwrap());
            }
            for m in to_bob {
                to_alice.extend(bob.handle(m).unwrap());
            }
        }
    }

    #[test]
    fn opening_messages() {
        let p = small_params(0.3, 50);
        let y = vec![0.0; p.max_samples()];
        let (bob, out) = BobSession::start(p.clone(), SECRETS, y, 7).unwrap();
        assert_eq!(out.len(), p.l_min as usize + 2);
        assert!(matches!(out[0], ProtocolMessage::Hello(_)));
        assert!(matches!(out.last(), Some(ProtocolMessage::CrcTag(_))));
        let samples: usize = out
            .iter()
            .map(|m| match m {
                ProtocolMessage::Delta { values, .. } => values.len(),
                _ => 0,
            })
            .sum();
        assert_eq!(samples, p.l_min as usize * p.pass_len());
        assert_eq!(bob.transcript().classical_bits_disclosed, 64 * samples as u64 + 32);

        let (again, _) = BobSession::start(p.clone(), SECRETS, vec![0.0; p.max_samples()], 7).unwrap();
        assert_eq!(again.message(), bob.message());
        let (other, _) = BobSession::start(p, SECRETS, vec![0.0; 10_000], 8).unwrap();
        assert_ne!(other.message(), bob.message());
    }

    #[test]
    fn too_little_raw_data() {
        let p = small_params(0.3, 50);
        let y = vec![0.0; p.pass_len() * p.l_min as usize - 1];
        assert!(matches!(
            BobSession::start(p, SECRETS, y, 1),
            Err(Error::ResourceExhausted(_))
        ));
    }

    #[test]
    fn extra_passes_extend_the_encoding() {
        let p = small_params(0.3, 50);
        let y = vec![0.0; p.max_samples()];
        let (mut bob, _) = BobSession::start(p.clone(), SECRETS, y, 3).unwrap();
        let out = bob.more(1).unwrap();
        assert_eq!(bob.passes_sent(), p.l_min + 1);
        let symbols = encode_passes(bob.message(), p.l_min + 1, p.l_min + 1, &p.codec_config(SECRETS))
            .unwrap()
            .remove(0)
            .symbols;
        match &out[0] {
            ProtocolMessage::Delta { pass_index, values } => {
                assert_eq!(*pass_index, p.l_min + 1);
                // y = 0, so Δ = −c.
                let negated: Vec<f64> = symbols.iter().map(|c| -c).collect();
                assert_eq!(values, &negated);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_call_of_two_equals_two_calls_of_one() {
        let p = small_params(0.3, 50);
        let raw = generate_correlated(p.max_samples(), 1.0, 0.3, 5).unwrap();
        let (mut a, _) = BobSession::start(p.clone(), SECRETS, raw.y.clone(), 9).unwrap();
        let (mut b, _) = BobSession::start(p, SECRETS, raw.y, 9).unwrap();
        let mut split = a.more(1).unwrap();
        split.extend(a.more(1).unwrap());
        assert_eq!(split, b.more(2).unwrap());
        assert_eq!(a.transcript(), b.transcript());
    }

    #[test]
    fn noiseless_session_acks_first_time() {
        let p = small_params(0.2, 50);
        let raw = generate_noiseless(p.max_samples(), 1.0, 11).unwrap();
        let (mut bob, opening) = BobSession::start(p.clone(), SECRETS, raw.y.clone(), 4).unwrap();
        let mut alice = AliceSession::new(p.clone(), SECRETS, raw.x).unwrap();
        run(&mut bob, &mut alice, opening);
        assert_eq!(bob.state(), SessionState::Succeeded);
        assert_eq!(alice.state(), SessionState::Succeeded);
        assert_eq!(alice.key(), Some(bob.message()));
        assert!(alice.last_cost().unwrap() < 1e-20);
        let record = alice.finalize(0.2);
        assert_eq!(record.passes, p.l_min);
        assert_eq!(record.iterations, 1);
        assert_eq!(record, bob.finalize(0.2));
        assert_eq!(alice.transcript().entries, bob.transcript().entries);
    }

    #[test]
    fn tampered_tag_fails_at_i_max() {
        let p = small_params(0.2, 50);
        let raw = generate_noiseless(p.max_samples(), 1.0, 12).unwrap();
        let (mut bob, mut opening) = BobSession::start(p.clone(), SECRETS, raw.y, 4).unwrap();
        if let Some(ProtocolMessage::CrcTag(tag)) = opening.last_mut() {
            *tag ^= 1;
        }
        let mut alice = AliceSession::new(p.clone(), SECRETS, raw.x).unwrap();
        run(&mut bob, &mut alice, opening);
        assert_eq!(alice.state(), SessionState::Failed(AbortReason::AttemptsExhausted));
        assert_eq!(bob.state(), SessionState::Failed(AbortReason::AttemptsExhausted));
        let record = bob.finalize(0.2);
        assert!(!record.success);
        assert_eq!(record.beta, None);
        assert_eq!(record.iterations, 50);
        assert_eq!(record.passes, p.l_min + 49);
        assert_eq!(record, alice.finalize(0.2));
        assert!(alice.key().is_none());
    }

    #[test]
    fn raw_data_exhaustion_aborts() {
        let p = small_params(0.2, 50);
        let raw = generate_noiseless(p.pass_len() * (p.l_min as usize + 2), 1.0, 13).unwrap();
        let (mut bob, mut opening) = BobSession::start(p.clone(), SECRETS, raw.y, 4).unwrap();
        if let Some(ProtocolMessage::CrcTag(tag)) = opening.last_mut() {
            *tag ^= 1;
        }
        let mut alice = AliceSession::new(p.clone(), SECRETS, raw.x).unwrap();
        run(&mut bob, &mut alice, opening);
        assert_eq!(bob.state(), SessionState::Failed(AbortReason::RawDataExhausted));
        assert_eq!(alice.state(), SessionState::Failed(AbortReason::RawDataExhausted));
        assert_eq!(bob.passes_sent(), p.l_min + 2);
        assert_eq!(bob.finalize(0.2), alice.finalize(0.2));
    }

    #[test]
    fn misaligned_delta_is_a_protocol_error() {
        let p = small_params(0.2, 50);
        let raw = generate_noiseless(p.max_samples(), 1.0, 14).unwrap();
        let (_, opening) = BobSession::start(p.clone(), SECRETS, raw.y, 4).unwrap();
        let mut alice = AliceSession::new(p.clone(), SECRETS, raw.x).unwrap();
        let mut msgs = opening.into_iter();
        alice.handle(msgs.next().unwrap()).unwrap();
        let err = alice.handle(ProtocolMessage::Delta { pass_index: 1, values: vec![0.0; 3] });
        // Deltas are buffered until the tag arrives, so feed the rest.
        let err = err.and_then(|_| {
            for m in msgs {
                alice.handle(m)?;
            }
            Ok(())
        });
        assert!(matches!(err, Err(Error::Protocol(_))));
        assert_eq!(alice.state(), SessionState::Failed(AbortReason::ProtocolError));
    }

    #[test]
    fn hello_mismatch_is_rejected() {
        let p = small_params(0.2, 50);
        let mut alice = AliceSession::new(p.clone(), SECRETS, vec![0.0; 10]).unwrap();
        let other = small_params(0.25, 50);
        assert!(alice.handle(ProtocolMessage::Hello(other)).is_err());
    }

    #[test]
    fn ack_only_with_matching_key() {
        // Moderate noise, small block: whatever happens, an ACK implies M̂ = M.
        let p = small_params(0.5, 20);
        for seed in 0..5 {
            let raw = generate_correlated(p.max_samples(), 1.0, 0.5, seed).unwrap();
            let (mut bob, opening) = BobSession::start(p.clone(), SECRETS, raw.y, seed).unwrap();
            let mut alice = AliceSession::new(p.clone(), SECRETS, raw.x).unwrap();
            run(&mut bob, &mut alice, opening);
            if alice.state() == SessionState::Succeeded {
                assert_eq!(alice.key(), Some(bob.message()));
            }
            let record = alice.finalize(0.5);
            assert!(record.iterations <= 20);
            assert_eq!(record.passes, p.l_min + record.iterations - 1);
        }
    }
}
