//! Newline-delimited JSON control channel used by the CLI and the web UI.
//!
//! Every client line gets exactly one reply line. Impact and
//! step notifications are pushed separately as they happen.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::actuation::Firing;
use crate::model::{ImpactPattern, Mode, Side, SolenoidPos, StepEvent, TileId, Timestamp};
use crate::session::{Node, NodeId, NodeRole, Recording};

/// Strength given to steps injected over the control channel.
pub const INJECTED_STRENGTH: u32 = 560;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Step {
        side: Side,
    },
    Mode {
        mode: Mode,
    },
    Pattern {
        count: u8,
    },
    Record {
        action: RecordAction,
        /// Where to save the recording on stop.
        #[serde(default)]
        file: Option<String>,
    },
    Play {
        speed: f64,
        file: String,
    },
    Seek {
        t_us: u64,
    },
    /// Current node state, used by clients to resync after reconnecting.
    State,
}

const REQUEST_TYPES: [&str; 7] = ["step", "mode", "pattern", "record", "play", "seek", "state"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notice {
    Impact {
        tile: TileId,
        side: Side,
        pos: SolenoidPos,
        t_us: u64,
    },
    StepDetected {
        tile: TileId,
        side: Side,
        t_us: u64,
        strength: u32,
    },
    ModeAck {
        mode: Mode,
        pattern: u8,
    },
    RecordAck {
        action: RecordAction,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        events: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        file: Option<String>,
    },
    PlayAck {
        events: usize,
        speed: f64,
    },
    SeekAck {
        t_us: u64,
    },
    State {
        node_id: NodeId,
        role: NodeRole,
        mode: Mode,
        pattern: u8,
        recording: bool,
        playing: bool,
        links: usize,
    },
    Error {
        msg: String,
    },
}

impl Notice {
    pub fn impact(f: &Firing) -> Self {
        Notice::Impact {
            tile: f.tile,
            side: f.side,
            pos: f.pos,
            t_us: f.t.0,
        }
    }

    pub fn step_detected(e: &StepEvent) -> Self {
        Notice::StepDetected {
            tile: e.tile,
            side: e.side,
            t_us: e.t.0,
            strength: e.strength,
        }
    }

    pub fn error(msg: impl Into<String>) -> Self {
        Notice::Error { msg: msg.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("notices always serialize")
    }
}

/// Parses one client line. Unknown fields are ignored.
pub fn parse_request(line: &str) -> Result<Request, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed json: {e}"))?;
    let ty = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| "missing string field `type`".to_string())?
        .to_string();
    if !REQUEST_TYPES.contains(&ty.as_str()) {
        return Err(format!("unknown message type `{ty}`"));
    }
    serde_json::from_value(value).map_err(|e| format!("bad `{ty}` message: {e}"))
}

/// Parses one node-to-client line.
pub fn parse_notice(line: &str) -> Result<Notice, serde_json::Error> {
    serde_json::from_str(line)
}

/// Result of applying one control line to a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Handled {
    pub reply: Notice,
    /// Steps to forward to other nodes.
    pub sends: Vec<(NodeId, StepEvent)>,
}

impl Handled {
    fn reply(reply: Notice) -> Self {
        Handled {
            reply,
            sends: Vec::new(),
        }
    }
}

/// Applies one control line to `node` at time `now`.
pub fn handle_line(node: &mut Node, line: &str, now: Timestamp) -> Handled {
    match parse_request(line) {
        Ok(req) => handle_request(node, req, now),
        Err(msg) => Handled::reply(Notice::error(msg)),
    }
}

pub fn handle_request(node: &mut Node, req: Request, now: Timestamp) -> Handled {
    let mode_ack = |node: &Node| Notice::ModeAck {
        mode: node.mode(),
        pattern: node.pattern().count(),
    };
    match req {
        Request::Step { side } => {
            let e = StepEvent {
                tile: node.tile(),
                side,
                t: now,
                strength: INJECTED_STRENGTH,
            };
            match node.local_step(e) {
                Ok(sends) => Handled {
                    reply: Notice::step_detected(&e),
                    sends,
                },
                Err(err) => Handled::reply(Notice::error(err.to_string())),
            }
        }
        Request::Mode { mode } => match node.switch_mode(mode) {
            Ok(()) => Handled::reply(mode_ack(node)),
            Err(err) => Handled::reply(Notice::error(err.to_string())),
        },
        Request::Pattern { count } => match ImpactPattern::new(count) {
            Ok(p) => {
                node.set_pattern(p);
                Handled::reply(mode_ack(node))
            }
            Err(err) => Handled::reply(Notice::error(err.to_string())),
        },
        Request::Record {
            action: RecordAction::Start,
            ..
        } => match node.start_recording(now) {
            Ok(()) => Handled::reply(Notice::RecordAck {
                action: RecordAction::Start,
                events: None,
                file: None,
            }),
            Err(err) => Handled::reply(Notice::error(err.to_string())),
        },
        Request::Record {
            action: RecordAction::Stop,
            file,
        } => {
            let rec = match node.stop_recording() {
                Ok(r) => r,
                Err(err) => return Handled::reply(Notice::error(err.to_string())),
            };
            if let Some(path) = &file {
                if let Err(e) = std::fs::write(path, rec.to_text()) {
                    return Handled::reply(Notice::error(format!("cannot write {path}: {e}")));
                }
            }
            Handled::reply(Notice::RecordAck {
                action: RecordAction::Stop,
                events: Some(rec.len()),
                file,
            })
        }
        Request::Play { speed, file } => {
            if !(speed.is_finite() && speed > 0.0) {
                return Handled::reply(Notice::error("speed must be > 0"));
            }
            let rec = match std::fs::read_to_string(&file) {
                Ok(text) => match Recording::parse(&text) {
                    Ok(r) => r,
                    Err(e) => return Handled::reply(Notice::error(format!("{file}: {e}"))),
                },
                Err(e) => return Handled::reply(Notice::error(format!("cannot read {file}: {e}"))),
            };
            let events = rec.len();
            match node.start_playback(rec, speed, now) {
                Ok(()) => Handled::reply(Notice::PlayAck { events, speed }),
                Err(err) => Handled::reply(Notice::error(err.to_string())),
            }
        }
        Request::Seek { t_us } => match node.seek(t_us, now) {
            Ok(()) => Handled::reply(Notice::SeekAck { t_us }),
            Err(err) => Handled::reply(Notice::error(err.to_string())),
        },
        Request::State => Handled::reply(Notice::State {
            node_id: node.id(),
            role: node.role(),
            mode: node.mode(),
            pattern: node.pattern().count(),
            recording: node.is_recording(),
            playing: node.playback().is_some_and(|p| !p.is_finished()),
            links: node.links().len(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::NodeConfig;

    fn solo() -> Node {
        Node::new(NodeConfig::default())
    }

    #[test]
    fn pattern_ack_and_two_impacts() {
        let mut n = solo();
        let h = handle_line(&mut n, r#"{"type":"pattern","count":2}"#, Timestamp(0));
        assert_eq!(
            h.reply,
            Notice::ModeAck {
                mode: Mode::Solo,
                pattern: 2
            }
        );
        handle_line(&mut n, r#"{"type":"step","side":"L"}"#, Timestamp(0));
        let fired = n.advance(Timestamp(1_000_000)).fired;
        let pos: Vec<_> = fired.iter().map(|f| f.pos).collect();
        assert_eq!(pos, vec![SolenoidPos::Front, SolenoidPos::Back]);
    }

    #[test]
    fn impact_line_shape() {
        let f = Firing {
            t: Timestamp(90_000),
            tile: TileId(0),
            side: Side::Right,
            pos: SolenoidPos::Back,
            origin: Timestamp(0),
        };
        assert_eq!(
            Notice::impact(&f).to_line(),
            r#"{"type":"impact","tile":0,"side":"R","pos":"back","t_us":90000}"#
        );
    }

    #[test]
    fn zero_speed_is_rejected() {
        let mut n = solo();
        let h = handle_line(
            &mut n,
            r#"{"type":"play","speed":0,"file":"x"}"#,
            Timestamp(0),
        );
        assert_eq!(h.reply, Notice::error("speed must be > 0"));
    }

    #[test]
    fn malformed_and_unknown_lines_get_errors() {
        let mut n = solo();
        for line in [
            "not json",
            r#"{"type":"dance"}"#,
            r#"{"side":"L"}"#,
            r#"{"type":"step","side":"X"}"#,
            r#"{"type":"pattern","count":4}"#,
        ] {
            let h = handle_line(&mut n, line, Timestamp(0));
            assert!(matches!(h.reply, Notice::Error { .. }), "{line}");
        }
        let h = handle_line(&mut n, r#"{"type":"dance"}"#, Timestamp(0));
        assert_eq!(h.reply, Notice::error("unknown message type `dance`"));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let mut n = solo();
        let h = handle_line(
            &mut n,
            r#"{"type":"mode","mode":"instruction","extra":[1,2]}"#,
            Timestamp(0),
        );
        assert!(matches!(
            h.reply,
            Notice::ModeAck {
                mode: Mode::Instruction,
                ..
            }
        ));
    }

    #[test]
    fn group_without_peer_errors() {
        let mut n = solo();
        let h = handle_line(&mut n, r#"{"type":"mode","mode":"group"}"#, Timestamp(0));
        assert!(matches!(h.reply, Notice::Error { .. }));
        assert_eq!(n.mode(), Mode::Solo);
    }

    #[test]
    fn record_save_and_play_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("take.rec");
        let path_s = path.to_str().unwrap();
        let mut n = solo();
        handle_line(
            &mut n,
            r#"{"type":"record","action":"start"}"#,
            Timestamp(1_000_000),
        );
        handle_line(
            &mut n,
            r#"{"type":"step","side":"R"}"#,
            Timestamp(1_400_000),
        );
        let stop = format!(r#"{{"type":"record","action":"stop","file":"{path_s}"}}"#);
        let h = handle_line(&mut n, &stop, Timestamp(2_000_000));
        assert!(matches!(
            h.reply,
            Notice::RecordAck {
                events: Some(1),
                ..
            }
        ));
        let rec = Recording::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rec.events()[0].t, Timestamp(400_000));

        handle_line(
            &mut n,
            r#"{"type":"mode","mode":"instruction"}"#,
            Timestamp(2_000_000),
        );
        let missing = dir.path().join("nope.rec");
        let play = format!(
            r#"{{"type":"play","speed":1.0,"file":"{}"}}"#,
            missing.to_str().unwrap()
        );
        let h = handle_line(&mut n, &play, Timestamp(2_000_000));
        assert!(matches!(h.reply, Notice::Error { .. }));
        let play = format!(r#"{{"type":"play","speed":0.5,"file":"{path_s}"}}"#);
        let h = handle_line(&mut n, &play, Timestamp(2_000_000));
        assert_eq!(
            h.reply,
            Notice::PlayAck {
                events: 1,
                speed: 0.5
            }
        );
        let played = n.advance(Timestamp(3_000_000)).played;
        assert_eq!(played[0].t, Timestamp(2_800_000));
    }

    #[test]
    fn state_reports_mode() {
        let mut n = solo();
        let h = handle_line(&mut n, r#"{"type":"state"}"#, Timestamp(0));
        assert!(matches!(
            h.reply,
            Notice::State {
                mode: Mode::Solo,
                recording: false,
                ..
            }
        ));
    }
}
