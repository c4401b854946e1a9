//! Length-delimited binary frames for node-to-node links.
//!
//! ```text
//! +----------------+--------+-----------------+
//! | length u16 BE  | type   | payload         |
//! +----------------+--------+-----------------+
//!   length = 1 + payload length
//! ```

use thiserror::Error;

use crate::model::{Mode, Side, StepEvent, TileId, Timestamp};
use crate::session::NodeRole;

pub const PROTO_VERSION: u8 = 1;

const HELLO: u8 = 0x01;
const STEP: u8 = 0x02;
const MODE: u8 = 0x03;
const HEARTBEAT: u8 = 0x04;
const PATTERN: u8 = 0x05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    Hello {
        proto_version: u8,
        role: NodeRole,
        node_id: u32,
    },
    Step {
        tile: u16,
        side: Side,
        t_us: u64,
        strength: u16,
    },
    Mode(Mode),
    Heartbeat {
        t_us: u64,
    },
    Pattern {
        count: u8,
    },
}

impl Message {
    pub fn step(e: &StepEvent) -> Self {
        Message::Step {
            tile: e.tile.0,
            side: e.side,
            t_us: e.t.0,
            strength: e.strength.min(u16::MAX as u32) as u16,
        }
    }

    /// The step carried by a STEP frame.
    pub fn as_step(&self) -> Option<StepEvent> {
        match *self {
            Message::Step {
                tile,
                side,
                t_us,
                strength,
            } => Some(StepEvent {
                tile: TileId(tile),
                side,
                t: Timestamp(t_us),
                strength: strength as u32,
            }),
            _ => None,
        }
    }

    fn type_code(&self) -> u8 {
        match self {
            Message::Hello { .. } => HELLO,
            Message::Step { .. } => STEP,
            Message::Mode(_) => MODE,
            Message::Heartbeat { .. } => HEARTBEAT,
            Message::Pattern { .. } => PATTERN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameErrorKind {
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("{field} value {value} out of range")]
    BadEnum { field: &'static str, value: u8 },
    #[error("frame type {ty:#04x} carries {got} payload bytes, expected {expected}")]
    LengthMismatch { ty: u8, got: usize, expected: usize },
}

/// A malformed frame. `consumed` bytes (the whole frame) should be dropped
/// to stay aligned with the next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} ({consumed} bytes skipped)")]
pub struct FrameError {
    pub kind: FrameErrorKind,
    pub consumed: usize,
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    encode_into(msg, &mut out);
    out
}

pub fn encode_into(msg: &Message, out: &mut Vec<u8>) {
    let mut payload = Vec::with_capacity(13);
    match *msg {
        Message::Hello {
            proto_version,
            role,
            node_id,
        } => {
            payload.push(proto_version);
            payload.push(role.wire_code());
            payload.extend_from_slice(&node_id.to_be_bytes());
        }
        Message::Step {
            tile,
            side,
            t_us,
            strength,
        } => {
            payload.extend_from_slice(&tile.to_be_bytes());
            payload.push(side_code(side));
            payload.extend_from_slice(&t_us.to_be_bytes());
            payload.extend_from_slice(&strength.to_be_bytes());
        }
        Message::Mode(m) => payload.push(mode_code(m)),
        Message::Heartbeat { t_us } => payload.extend_from_slice(&t_us.to_be_bytes()),
        Message::Pattern { count } => payload.push(count),
    }
    let len = (payload.len() + 1) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.push(msg.type_code());
    out.extend_from_slice(&payload);
}

/// Decodes one frame from the front of `buf`.
///
/// `Ok(None)` means the frame is incomplete and nothing was consumed.
pub fn decode(buf: &[u8]) -> Result<Option<(Message, usize)>, FrameError> {
    if buf.len() < 2 {
        return Ok(None);
    }
    let len = u16::from_be_bytes([buf[0], buf[1]]) as usize;
    let total = 2 + len;
    if len == 0 {
        return Err(FrameError {
            kind: FrameErrorKind::LengthMismatch {
                ty: 0,
                got: 0,
                expected: 1,
            },
            consumed: 2,
        });
    }
    if buf.len() < total {
        return Ok(None);
    }
    let ty = buf[2];
    let payload = &buf[3..total];
    let fail = |kind| FrameError {
        kind,
        consumed: total,
    };
    let expected = match ty {
        HELLO => 6,
        STEP => 13,
        MODE | PATTERN => 1,
        HEARTBEAT => 8,
        other => return Err(fail(FrameErrorKind::UnknownType(other))),
    };
    if payload.len() != expected {
        return Err(fail(FrameErrorKind::LengthMismatch {
            ty,
            got: payload.len(),
            expected,
        }));
    }
    let u64_at = |i: usize| u64::from_be_bytes(payload[i..i + 8].try_into().unwrap());
    let msg = match ty {
        HELLO => Message::Hello {
            proto_version: payload[0],
            role: NodeRole::from_wire(payload[1]).ok_or(fail(FrameErrorKind::BadEnum {
                field: "role",
                value: payload[1],
            }))?,
            node_id: u32::from_be_bytes(payload[2..6].try_into().unwrap()),
        },
        STEP => Message::Step {
            tile: u16::from_be_bytes([payload[0], payload[1]]),
            side: match payload[2] {
                0 => Side::Left,
                1 => Side::Right,
                v => {
                    return Err(fail(FrameErrorKind::BadEnum {
                        field: "side",
                        value: v,
                    }))
                }
            },
            t_us: u64_at(3),
            strength: u16::from_be_bytes([payload[11], payload[12]]),
        },
        MODE => Message::Mode(
            mode_from_code(payload[0]).ok_or(fail(FrameErrorKind::BadEnum {
                field: "mode",
                value: payload[0],
            }))?,
        ),
        HEARTBEAT => Message::Heartbeat { t_us: u64_at(0) },
        _ => match payload[0] {
            c @ 1..=3 => Message::Pattern { count: c },
            v => {
                return Err(fail(FrameErrorKind::BadEnum {
                    field: "count",
                    value: v,
                }))
            }
        },
    };
    Ok(Some((msg, total)))
}

fn side_code(side: Side) -> u8 {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn mode_code(m: Mode) -> u8 {
    match m {
        Mode::Solo => 0,
        Mode::Group => 1,
        Mode::Instruction => 2,
        Mode::Theater => 3,
    }
}

fn mode_from_code(c: u8) -> Option<Mode> {
    Mode::ALL.get(c as usize).copied()
}

/// Accumulates bytes from a stream and yields complete frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next frame, `None` when more bytes are needed. Malformed frames are
    /// removed from the buffer before the error is returned.
    pub fn next_frame(&mut self) -> Option<Result<Message, FrameError>> {
        match decode(&self.buf) {
            Ok(None) => None,
            Ok(Some((msg, n))) => {
                self.buf.drain(..n);
                Some(Ok(msg))
            }
            Err(e) => {
                self.buf.drain(..e.consumed);
                Some(Err(e))
            }
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
