//! Length-prefixed framing and stream-driven sessions.
//!
//! Every frame is `type (1 byte) | length (u32 BE) | payload`. Payloads:
//!
//! | type | message | payload |
//! |------|---------|---------|
//! | 0x01 | HELLO   | [`ProtocolParams`] packed little-endian, see [`encode_params`] |
//! | 0x02 | DELTA   | pass index u32 LE, count u32 LE, `count` f64 LE |
//! | 0x03 | CRC_TAG | tag u32 LE |
//! | 0x04 | ACK     | empty |
//! | 0x05 | NACK    | empty |
//! | 0x06 | ABORT   | optional reason byte |

use std::io::{ErrorKind, Read, Write};
use std::time::Instant;

use crate::channel::RawDataBlock;
use crate::error::{Error, Result};
use crate::protocol::{
    AbortReason, AliceSession, BobSession, OutcomeRecord, ProtocolMessage, ProtocolParams,
    SessionSecrets, SessionState,
};

const HEADER_LEN: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    Delta = 0x02,
    CrcTag = 0x03,
    Ack = 0x04,
    Nack = 0x05,
    Abort = 0x06,
}

impl TryFrom<u8> for MessageType {
    type Error = Error;

    fn try_from(byte: u8) -> Result<Self> {
        Ok(match byte {
            0x01 => MessageType::Hello,
            0x02 => MessageType::Delta,
            0x03 => MessageType::CrcTag,
            0x04 => MessageType::Ack,
            0x05 => MessageType::Nack,
            0x06 => MessageType::Abort,
            other => return Err(Error::Protocol(format!("unknown message type {other:#04x}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

/// `[type | length | payload]`.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    let len = u32::try_from(frame.payload.len())
        .map_err(|_| Error::invalid(format!("payload of {} bytes is too large", frame.payload.len())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Parses one frame from the front of `bytes`.
///
/// Returns `Ok(None)` when more bytes are needed, otherwise the frame and
/// the number of bytes it occupied.
pub fn decode_frame(bytes: &[u8]) -> Result<Option<(Frame, usize)>> {
    let Some(&type_byte) = bytes.first() else {
        return Ok(None);
    };
    let msg_type = MessageType::try_from(type_byte)?;
    if bytes.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes(bytes[1..HEADER_LEN].try_into().unwrap()) as usize;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Ok(None);
    }
    let frame = Frame {
        msg_type,
        payload: bytes[HEADER_LEN..total].to_vec(),
    };
    Ok(Some((frame, total)))
}

/// Field order of the HELLO payload: `snr, v_a, v_z, p_star, eta,
/// s_nr_virtual` (f64), `l_min, lambda, n, k, c, v, w, beam_width` (u32),
/// `beta_trunc` (f64), `omega` (u32), `r` (f64), `i_max` (u32).
pub fn encode_params(p: &ProtocolParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HELLO_LEN);
    for f in [p.snr, p.v_a, p.v_z, p.p_star, p.eta, p.s_nr_virtual] {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for u in [p.l_min, p.lambda, p.n, p.k, p.c, p.v, p.w, p.beam_width] {
        out.extend_from_slice(&u.to_le_bytes());
    }
    out.extend_from_slice(&p.beta_trunc.to_le_bytes());
    out.extend_from_slice(&p.omega.to_le_bytes());
    out.extend_from_slice(&p.r.to_le_bytes());
    out.extend_from_slice(&p.i_max.to_le_bytes());
    out
}

const HELLO_LEN: usize = 6 * 8 + 8 * 4 + 8 + 4 + 8 + 4;

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        head.try_into().unwrap()
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
}

pub fn decode_params(payload: &[u8]) -> Result<ProtocolParams> {
    if payload.len() != HELLO_LEN {
        return Err(Error::Protocol(format!(
            "HELLO payload has {} bytes, expected {HELLO_LEN}",
            payload.len()
        )));
    }
    let mut c = Cursor(payload);
    Ok(ProtocolParams {
        snr: c.f64(),
        v_a: c.f64(),
        v_z: c.f64(),
        p_star: c.f64(),
        eta: c.f64(),
        s_nr_virtual: c.f64(),
        l_min: c.u32(),
        lambda: c.u32(),
        n: c.u32(),
        k: c.u32(),
        c: c.u32(),
        v: c.u32(),
        w: c.u32(),
        beam_width: c.u32(),
        beta_trunc: c.f64(),
        omega: c.u32(),
        r: c.f64(),
        i_max: c.u32(),
    })
}

impl From<&ProtocolMessage> for Frame {
    fn from(msg: &ProtocolMessage) -> Frame {
        let (msg_type, payload) = match msg {
            ProtocolMessage::Hello(p) => (MessageType::Hello, encode_params(p)),
            ProtocolMessage::Delta { pass_index, values } => {
                let mut payload = Vec::with_capacity(8 + 8 * values.len());
                payload.extend_from_slice(&pass_index.to_le_bytes());
                payload.extend_from_slice(&(values.len() as u32).to_le_bytes());
                for v in values {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
                (MessageType::Delta, payload)
            }
            ProtocolMessage::CrcTag(tag) => (MessageType::CrcTag, tag.to_le_bytes().to_vec()),
            ProtocolMessage::Ack => (MessageType::Ack, vec![]),
            ProtocolMessage::Nack => (MessageType::Nack, vec![]),
            ProtocolMessage::Abort(reason) => (MessageType::Abort, vec![reason.code()]),
        };
        Frame { msg_type, payload }
    }
}

impl TryFrom<&Frame> for ProtocolMessage {
    type Error = Error;

    fn try_from(frame: &Frame) -> Result<Self> {
        let p = &frame.payload;
        let expect_len = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Protocol(format!(
                    "{:?} payload has {} bytes, expected {n}",
                    frame.msg_type,
                    p.len()
                )))
            }
        };
        Ok(match frame.msg_type {
            MessageType::Hello => ProtocolMessage::Hello(decode_params(p)?),
            MessageType::Delta => {
                if p.len() < 8 {
                    return Err(Error::Protocol("DELTA payload shorter than its header".into()));
                }
                let mut c = Cursor(p);
                let pass_index = c.u32();
                let count = c.u32() as usize;
                expect_len(8 + 8 * count)?;
                let values = (0..count).map(|_| c.f64()).collect();
                ProtocolMessage::Delta { pass_index, values }
            }
            MessageType::CrcTag => {
                expect_len(4)?;
                ProtocolMessage::CrcTag(Cursor(p).u32())
            }
            MessageType::Ack => {
                expect_len(0)?;
                ProtocolMessage::Ack
            }
            MessageType::Nack => {
                expect_len(0)?;
                ProtocolMessage::Nack
            }
            MessageType::Abort => match p.as_slice() {
                [] => ProtocolMessage::Abort(AbortReason::ProtocolError),
                [code] => ProtocolMessage::Abort(AbortReason::from_code(*code).ok_or_else(|| {
                    Error::Protocol(format!("unknown abort reason {code}"))
                })?),
                _ => return Err(Error::Protocol("ABORT payload longer than one byte".into())),
            },
        })
    }
}

pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>> {
    encode_frame(&Frame::from(msg))
}

/// Incremental frame parser for bytes arriving in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
    start: usize,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    /// The next complete frame, if one is buffered.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        match decode_frame(&self.buf[self.start..])? {
            Some((frame, used)) => {
                self.start += used;
                if self.start > 1 << 16 && self.start * 2 > self.buf.len() {
                    self.buf.drain(..self.start);
                    self.start = 0;
                }
                Ok(Some(frame))
            }
            None => Ok(None),
        }
    }

    /// Bytes received but not yet returned as a frame.
    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Fails with [`Error::IncompleteFrame`] if a partial frame is pending.
    pub fn finish(&self) -> Result<()> {
        let rest = &self.buf[self.start..];
        if rest.is_empty() {
            return Ok(());
        }
        let need = if rest.len() < HEADER_LEN {
            HEADER_LEN
        } else {
            HEADER_LEN + u32::from_be_bytes(rest[1..HEADER_LEN].try_into().unwrap()) as usize
        };
        Err(Error::IncompleteFrame { have: rest.len(), need })
    }
}

/// Blocking message reader over any byte stream.
#[derive(Debug)]
pub struct MessageReader<R> {
    inner: R,
    frames: FrameReader,
}

impl<R: Read> MessageReader<R> {
    pub fn new(inner: R) -> Self {
        MessageReader {
            inner,
            frames: FrameReader::new(),
        }
    }

    /// Next message, or `None` on a clean end of stream.
    pub fn read_message(&mut self) -> Result<Option<ProtocolMessage>> {
        let mut chunk = [0u8; 16 * 1024];
        loop {
            if let Some(frame) = self.frames.next_frame()? {
                return ProtocolMessage::try_from(&frame).map(Some);
            }
            let got = match self.inner.read(&mut chunk) {
                Ok(got) => got,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if got == 0 {
                self.frames.finish()?;
                return Ok(None);
            }
            self.frames.push(&chunk[..got]);
        }
    }
}

pub fn write_messages<W: Write>(out: &mut W, msgs: &[ProtocolMessage]) -> Result<()> {
    for m in msgs {
        out.write_all(&encode_message(m)?)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Decoder side: holds `X`, listens for HELLO.
    Alice,
    /// Encoder side: holds `Y` and the key.
    Bob,
}

/// Everything one endpoint needs to run a session.
#[derive(Clone, Debug)]
pub struct Endpoint {
    pub params: ProtocolParams,
    pub secrets: SessionSecrets,
    /// Alice's `x` or Bob's `y`.
    pub samples: Vec<f64>,
    /// Bob's key seed (ignored by Alice).
    pub key_seed: u64,
    /// True channel SNR, used for the efficiency in the outcome.
    pub channel_snr: f64,
}

/// Runs Bob over a stream. The write half is `writer`, the read half `reader`.
pub fn run_bob<R: Read, W: Write>(reader: R, mut writer: W, ep: Endpoint) -> Result<BobSession> {
    let (mut bob, opening) = BobSession::start(ep.params, ep.secrets, ep.samples, ep.key_seed)?;
    write_messages(&mut writer, &opening)?;
    let mut reader = MessageReader::new(reader);
    while bob.state() == SessionState::Running {
        match reader.read_message() {
            Ok(Some(msg)) => {
                let reply = bob.handle(msg);
                // A protocol error still leaves an ABORT to send.
                let out = match &reply {
                    Ok(out) => out.clone(),
                    Err(_) => vec![ProtocolMessage::Abort(AbortReason::ProtocolError)],
                };
                let sent = write_messages(&mut writer, &out);
                reply?;
                if sent.is_err() && bob.state() == SessionState::Running {
                    bob.disconnect();
                }
            }
            Ok(None) | Err(Error::Stream(_)) => bob.disconnect(),
            Err(e) => {
                let _ = write_messages(&mut writer, &[ProtocolMessage::Abort(AbortReason::ProtocolError)]);
                return Err(e);
            }
        }
    }
    Ok(bob)
}

/// Runs Alice over a stream until the session ends.
pub fn run_alice<R: Read, W: Write>(reader: R, mut writer: W, ep: Endpoint) -> Result<AliceSession> {
    let mut alice = AliceSession::new(ep.params, ep.secrets, ep.samples)?;
    let mut reader = MessageReader::new(reader);
    while alice.state() == SessionState::Running {
        match reader.read_message() {
            Ok(Some(msg)) => match alice.handle(msg) {
                Ok(out) => {
                    if write_messages(&mut writer, &out).is_err() {
                        alice.disconnect();
                    }
                }
                Err(e) => {
                    let _ = write_messages(&mut writer, &[ProtocolMessage::Abort(AbortReason::ProtocolError)]);
                    return Err(e);
                }
            },
            Ok(None) | Err(Error::Stream(_)) => alice.disconnect(),
            Err(e) => {
                let _ = write_messages(&mut writer, &[ProtocolMessage::Abort(AbortReason::ProtocolError)]);
                return Err(e);
            }
        }
    }
    Ok(alice)
}

/// Drives one side of a session over `stream` and returns its outcome.
pub fn run_session<S>(role: Role, stream: S, ep: Endpoint) -> Result<OutcomeRecord>
where
    S: Read + Write,
{
    let started = Instant::now();
    let snr = ep.channel_snr;
    let seed = ep.key_seed;
    let stream = std::cell::RefCell::new(stream);
    let reader = RefReader(&stream);
    let writer = RefWriter(&stream);
    let mut record = match role {
        Role::Alice => run_alice(reader, writer, ep)?.finalize(snr),
        Role::Bob => run_bob(reader, writer, ep)?.finalize(snr),
    };
    record.seed = seed;
    record.millis = started.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

struct RefReader<'a, S>(&'a std::cell::RefCell<S>);
struct RefWriter<'a, S>(&'a std::cell::RefCell<S>);

impl<S: Read> Read for RefReader<'_, S> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().read(buf)
    }
}

impl<S: Write> Write for RefWriter<'_, S> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.borrow_mut().flush()
    }
}

/// Both finished sessions of a loopback run.
#[derive(Debug)]
pub struct LoopbackRun {
    pub bob: BobSession,
    pub alice: AliceSession,
}

/// Runs both parties in-process, passing every message through the wire
/// encoding so the result matches a real byte stream.
pub fn run_loopback(
    params: &ProtocolParams,
    secrets: SessionSecrets,
    raw: &RawDataBlock,
    key_seed: u64,
) -> Result<LoopbackRun> {
    let (mut bob, opening) = BobSession::start(params.clone(), secrets, raw.y.clone(), key_seed)?;
    let mut alice = AliceSession::new(params.clone(), secrets, raw.x.clone())?;
    let mut to_alice = opening;
    let mut to_bob = Vec::new();
    while !to_alice.is_empty() {
        for msg in wire(&to_alice)? {
            match alice.handle(msg) {
                Ok(out) => to_bob.extend(out),
                Err(_) => to_bob.push(ProtocolMessage::Abort(AbortReason::ProtocolError)),
            }
            if alice.state() != SessionState::Running {
                break;
            }
        }
        to_alice.clear();
        for msg in wire(&to_bob)? {
            if bob.state() != SessionState::Running {
                break;
            }
            match bob.handle(msg) {
                Ok(out) => to_alice.extend(out),
                Err(_) => to_alice.push(ProtocolMessage::Abort(AbortReason::ProtocolError)),
            }
        }
        to_bob.clear();
        if alice.state() != SessionState::Running {
            to_alice.clear();
        }
    }
    bob.disconnect();
    alice.disconnect();
    Ok(LoopbackRun { bob, alice })
}

fn wire(msgs: &[ProtocolMessage]) -> Result<Vec<ProtocolMessage>> {
    let mut reader = FrameReader::new();
    for m in msgs {
        reader.push(&encode_message(m)?);
    }
    let mut out = Vec::with_capacity(msgs.len());
    while let Some(frame) = reader.next_frame()? {
        out.push(ProtocolMessage::try_from(&frame)?);
    }
    reader.finish()?;
    Ok(out)
}
