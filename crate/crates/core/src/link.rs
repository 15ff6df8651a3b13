//! Space-to-ground downlink: the binary message format and a FIFO channel with
//! finite capacity, fixed latency and optional seeded loss.
//!
//! Wire layout, little-endian:
//!
//! ```text
//! header     magic "EVS1" (4) | msg_type u8 | seq u32
//! heartbeat  state u8 | rate_bps u32 | t u64
//! events     base_t u64 | count u16 | count x { dt u16 | x u16 | y u16 | p u8 | 0x00 }
//! trailer    crc32 u32 over every byte after the magic
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::event::{Event, Polarity};
use crate::monitor::LinkState;

pub const MAGIC: [u8; 4] = *b"EVS1";
pub const MSG_HEARTBEAT: u8 = 0x01;
pub const MSG_EVENTS: u8 = 0x02;

const HEADER_LEN: usize = 9;
const CRC_LEN: usize = 4;
pub const HEARTBEAT_LEN: usize = HEADER_LEN + 13 + CRC_LEN;
const EVENTS_FIXED_LEN: usize = HEADER_LEN + 10;
pub const EVENT_RECORD_LEN: usize = 8;
/// Shortest well-formed frame (a heartbeat has the smallest body).
const MIN_FRAME_LEN: usize = HEADER_LEN + CRC_LEN;

pub const MAX_EVENTS_PER_PACKET: usize = u16::MAX as usize;
pub const MAX_PACKET_SPAN_US: u64 = u16::MAX as u64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Heartbeat { state: LinkState, rate_bps: u32, t: u64 },
    Events { base_t: u64, events: Vec<Event> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub seq: u32,
    pub payload: Payload,
}

impl Message {
    pub fn heartbeat(seq: u32, state: LinkState, rate_bps: u32, t: u64) -> Self {
        Message {
            seq,
            payload: Payload::Heartbeat { state, rate_bps, t },
        }
    }

    pub fn events(seq: u32, base_t: u64, events: Vec<Event>) -> Self {
        Message {
            seq,
            payload: Payload::Events { base_t, events },
        }
    }

    /// Latest spacecraft timestamp the message carries.
    pub fn latest_time(&self) -> u64 {
        match &self.payload {
            Payload::Heartbeat { t, .. } => *t,
            Payload::Events { base_t, events } => events.last().map_or(*base_t, |e| e.t),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match &self.payload {
            Payload::Heartbeat { .. } => HEARTBEAT_LEN,
            Payload::Events { events, .. } => EVENTS_FIXED_LEN + EVENT_RECORD_LEN * events.len() + CRC_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("event packet is empty")]
    EmptyPacket,
    #[error("event packet holds {0} events (max 65535)")]
    TooManyEvents(usize),
    #[error("event at {t} us is {dt} us from packet base, outside 0..=65535")]
    TimestampOffset { t: u64, dt: i128 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("crc mismatch: frame says {expected:#010x}, computed {computed:#010x}")]
    CrcMismatch { expected: u32, computed: u32 },
    #[error("unknown message type {0:#04x}")]
    UnknownMsgType(u8),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

/// Error categories the ground station counts separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecodeErrorKind {
    Truncated,
    BadMagic,
    Crc,
    UnknownType,
    Malformed,
}

impl DecodeError {
    pub fn kind(&self) -> DecodeErrorKind {
        match self {
            DecodeError::Truncated { .. } => DecodeErrorKind::Truncated,
            DecodeError::BadMagic => DecodeErrorKind::BadMagic,
            DecodeError::CrcMismatch { .. } => DecodeErrorKind::Crc,
            DecodeError::UnknownMsgType(_) => DecodeErrorKind::UnknownType,
            DecodeError::Malformed(_) => DecodeErrorKind::Malformed,
        }
    }
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn encode(msg: &Message) -> std::result::Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    out.extend_from_slice(&MAGIC);
    match &msg.payload {
        Payload::Heartbeat { state, rate_bps, t } => {
            out.push(MSG_HEARTBEAT);
            out.extend_from_slice(&msg.seq.to_le_bytes());
            out.push(match state {
                LinkState::Normal => 0x00,
                LinkState::Abnormal => 0x01,
            });
            out.extend_from_slice(&rate_bps.to_le_bytes());
            out.extend_from_slice(&t.to_le_bytes());
        }
        Payload::Events { base_t, events } => {
            if events.is_empty() {
                return Err(EncodeError::EmptyPacket);
            }
            if events.len() > MAX_EVENTS_PER_PACKET {
                return Err(EncodeError::TooManyEvents(events.len()));
            }
            out.push(MSG_EVENTS);
            out.extend_from_slice(&msg.seq.to_le_bytes());
            out.extend_from_slice(&base_t.to_le_bytes());
            out.extend_from_slice(&(events.len() as u16).to_le_bytes());
            for ev in events {
                let dt = ev.t as i128 - *base_t as i128;
                if !(0..=MAX_PACKET_SPAN_US as i128).contains(&dt) {
                    return Err(EncodeError::TimestampOffset { t: ev.t, dt });
                }
                out.extend_from_slice(&(dt as u16).to_le_bytes());
                out.extend_from_slice(&ev.x.to_le_bytes());
                out.extend_from_slice(&ev.y.to_le_bytes());
                out.push(match ev.p {
                    Polarity::Negative => 0x00,
                    Polarity::Positive => 0x01,
                });
                out.push(0x00);
            }
        }
    }
    let crc = crc32(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], i: usize) -> u64 {
    u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"))
}

/// Decodes exactly one frame occupying all of `bytes`.
///
/// The trailer is the last four bytes and is checked before any structural
/// field is trusted, so a corrupted length or type byte reports as a CRC error.
pub fn decode(bytes: &[u8]) -> std::result::Result<Message, DecodeError> {
    if bytes.len() < MAGIC.len() {
        return Err(DecodeError::Truncated {
            needed: MIN_FRAME_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < MIN_FRAME_LEN {
        return Err(DecodeError::Truncated {
            needed: MIN_FRAME_LEN,
            got: bytes.len(),
        });
    }
    let body_end = bytes.len() - CRC_LEN;
    let expected = u32_at(bytes, body_end);
    let computed = crc32(&bytes[MAGIC.len()..body_end]);
    if expected != computed {
        return Err(DecodeError::CrcMismatch { expected, computed });
    }

    let msg_type = bytes[4];
    let seq = u32_at(bytes, 5);
    let payload = match msg_type {
        MSG_HEARTBEAT => {
            if bytes.len() != HEARTBEAT_LEN {
                return Err(DecodeError::Malformed(format!(
                    "heartbeat frame is {} bytes, expected {HEARTBEAT_LEN}",
                    bytes.len()
                )));
            }
            let state = match bytes[9] {
                0x00 => LinkState::Normal,
                0x01 => LinkState::Abnormal,
                other => return Err(DecodeError::Malformed(format!("state byte {other:#04x}"))),
            };
            Payload::Heartbeat {
                state,
                rate_bps: u32_at(bytes, 10),
                t: u64_at(bytes, 14),
            }
        }
        MSG_EVENTS => {
            if bytes.len() < EVENTS_FIXED_LEN + CRC_LEN {
                return Err(DecodeError::Malformed("event packet shorter than its header".into()));
            }
            let base_t = u64_at(bytes, 9);
            let count = u16_at(bytes, 17) as usize;
            let expected_len = EVENTS_FIXED_LEN + EVENT_RECORD_LEN * count + CRC_LEN;
            if count == 0 || bytes.len() != expected_len {
                return Err(DecodeError::Malformed(format!(
                    "event packet with count {count} is {} bytes, expected {expected_len}",
                    bytes.len()
                )));
            }
            let mut events = Vec::with_capacity(count);
            for rec in bytes[EVENTS_FIXED_LEN..body_end].chunks_exact(EVENT_RECORD_LEN) {
                let p = match rec[6] {
                    0x00 => Polarity::Negative,
                    0x01 => Polarity::Positive,
                    other => return Err(DecodeError::Malformed(format!("polarity byte {other:#04x}"))),
                };
                if rec[7] != 0 {
                    return Err(DecodeError::Malformed("reserved byte is not zero".into()));
                }
                events.push(Event::new(
                    u16_at(rec, 2),
                    u16_at(rec, 4),
                    base_t + u16_at(rec, 0) as u64,
                    p,
                ));
            }
            Payload::Events { base_t, events }
        }
        other => return Err(DecodeError::UnknownMsgType(other)),
    };
    Ok(Message { seq, payload })
}

/// Frame length announced by the header at the start of `bytes`.
fn announced_len(bytes: &[u8]) -> std::result::Result<usize, DecodeError> {
    let need = |needed: usize| DecodeError::Truncated { needed, got: bytes.len() };
    if bytes.len() < HEADER_LEN {
        return Err(need(HEADER_LEN));
    }
    match bytes[4] {
        MSG_HEARTBEAT => Ok(HEARTBEAT_LEN),
        MSG_EVENTS => {
            if bytes.len() < EVENTS_FIXED_LEN {
                return Err(need(EVENTS_FIXED_LEN));
            }
            Ok(EVENTS_FIXED_LEN + EVENT_RECORD_LEN * u16_at(bytes, 17) as usize + CRC_LEN)
        }
        other => Err(DecodeError::UnknownMsgType(other)),
    }
}

/// Splits a concatenated message stream (a `.evl` capture) into messages,
/// resynchronising on the next magic after a damaged frame.
pub struct MessageReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> MessageReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        MessageReader { buf, pos: 0 }
    }

    fn resync(&mut self) {
        let from = self.pos + 1;
        self.pos = self.buf[from.min(self.buf.len())..]
            .windows(MAGIC.len())
            .position(|w| w == MAGIC)
            .map_or(self.buf.len(), |i| from + i);
    }
}

impl Iterator for MessageReader<'_> {
    type Item = std::result::Result<Message, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rest = &self.buf[self.pos..];
        if rest.is_empty() {
            return None;
        }
        if rest.len() < MAGIC.len() || rest[..4] != MAGIC {
            let err = if rest.len() < MAGIC.len() && MAGIC.starts_with(rest) {
                DecodeError::Truncated {
                    needed: MIN_FRAME_LEN,
                    got: rest.len(),
                }
            } else {
                DecodeError::BadMagic
            };
            self.resync();
            return Some(Err(err));
        }
        let len = match announced_len(rest) {
            Ok(len) if len <= rest.len() => len,
            Ok(len) => {
                self.resync();
                return Some(Err(DecodeError::Truncated {
                    needed: len,
                    got: rest.len(),
                }));
            }
            Err(e) => {
                self.resync();
                return Some(Err(e));
            }
        };
        match decode(&rest[..len]) {
            Ok(msg) => {
                self.pos += len;
                Some(Ok(msg))
            }
            Err(e) => {
                self.resync();
                Some(Err(e))
            }
        }
    }
}

/// Splits a time-sorted event stream into packets that satisfy the wire limits:
/// at most 65535 events and at most 65535 us between base and last event.
pub fn packetize(events: &[Event]) -> Vec<(u64, Vec<Event>)> {
    let mut packets = Vec::new();
    let mut start = 0;
    while start < events.len() {
        let base = events[start].t;
        let mut end = start + 1;
        while end < events.len() && end - start < MAX_EVENTS_PER_PACKET && events[end].t - base <= MAX_PACKET_SPAN_US {
            end += 1;
        }
        packets.push((base, events[start..end].to_vec()));
        start = end;
    }
    packets
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub capacity_bps: f64,
    pub latency_us: u64,
    /// Per-message Bernoulli loss; 0 disables loss.
    pub loss_probability: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            capacity_bps: 20.0e6,
            latency_us: 5_000,
            loss_probability: 0.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_bps > 0.0 && self.capacity_bps.is_finite()) {
            return Err(Error::config("channel.capacity_bps", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(Error::config("channel.loss_probability", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// What happened to one message on the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub t_send: u64,
    /// Serialization interval on the link.
    pub tx_start: u64,
    pub tx_end: u64,
    /// `None` when the message was lost.
    pub t_arrive: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Channel {
    config: ChannelConfig,
    busy_until: u64,
    last_send: u64,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Channel {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            busy_until: 0,
            last_send: 0,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    /// Microseconds needed to clock `len` bytes onto the link, rounded up.
    pub fn serialization_us(&self, len: usize) -> u64 {
        ((len as f64 * 8.0 * 1e6) / self.config.capacity_bps).ceil() as u64
    }

    /// Queues `len` bytes sent at `t_send` behind anything still in flight.
    pub fn transmit(&mut self, len: usize, t_send: u64) -> Result<Transmission> {
        if t_send < self.last_send {
            return Err(Error::Ordering(format!(
                "send at {t_send} us precedes previous send at {} us",
                self.last_send
            )));
        }
        self.last_send = t_send;
        let tx_start = self.busy_until.max(t_send);
        let tx_end = tx_start + self.serialization_us(len);
        self.busy_until = tx_end;
        let lost = self.config.loss_probability > 0.0 && self.rng.random_bool(self.config.loss_probability);
        Ok(Transmission {
            t_send,
            tx_start,
            tx_end,
            t_arrive: (!lost).then_some(tx_end + self.config.latency_us),
        })
    }
}
