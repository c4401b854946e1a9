//! `SOLEFULTAP-REC v1` recordings.

use std::fmt::Write as _;

use super::SessionError;
use crate::model::{StepEvent, TileId, Timestamp};

pub const REC_MAGIC: &str = "SOLEFULTAP-REC";
pub const REC_VERSION: u32 = 1;

/// Time-sorted steps, rebased so the recording starts at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recording {
    events: Vec<StepEvent>,
}

impl Recording {
    pub fn new(mut events: Vec<StepEvent>) -> Self {
        events.sort_by_key(|e| e.t);
        Recording { events }
    }

    pub fn events(&self) -> &[StepEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REC_MAGIC} v{REC_VERSION}");
        let _ = writeln!(out, "epoch_us=0");
        for e in &self.events {
            let _ = writeln!(out, "{} {} {} {}", e.t, e.tile, e.side, e.strength);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let err = |line: usize, msg: String| SessionError::RecordingFormat { line, msg };
        let mut lines = text.lines().enumerate();

        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let version = header
            .strip_prefix(REC_MAGIC)
            .and_then(|rest| rest.strip_prefix(" v"))
            .ok_or_else(|| err(1, format!("expected `{REC_MAGIC} v{REC_VERSION}`")))?;
        match version.parse::<u32>() {
            Ok(REC_VERSION) => {}
            _ => return Err(SessionError::UnsupportedVersion(version.to_string())),
        }
        match lines.next() {
            Some((_, "epoch_us=0")) => {}
            _ => return Err(err(2, "expected `epoch_us=0`".into())),
        }

        let mut events: Vec<StepEvent> = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let n = i + 1;
            let fields: Vec<&str> = line.split(' ').collect();
            let [t, tile, side, strength] = fields[..] else {
                return Err(err(n, "expected `<t_us> <tile> <L|R> <strength>`".into()));
            };
            let e = StepEvent {
                t: Timestamp(t.parse().map_err(|_| err(n, format!("bad time `{t}`")))?),
                tile: TileId(
                    tile.parse()
                        .map_err(|_| err(n, format!("bad tile `{tile}`")))?,
                ),
                side: side
                    .parse()
                    .map_err(|_| err(n, format!("bad side `{side}`")))?,
                strength: strength
                    .parse()
                    .map_err(|_| err(n, format!("bad strength `{strength}`")))?,
            };
            if events.last().is_some_and(|prev| prev.t > e.t) {
                return Err(err(n, "events out of order".into()));
            }
            events.push(e);
        }
        Ok(Recording { events })
    }
}

/// Collects steps between `record` and `stop_record`.
#[derive(Debug, Clone)]
pub(crate) struct Recorder {
    start: Timestamp,
    events: Vec<StepEvent>,
}

impl Recorder {
    pub(crate) fn start(at: Timestamp) -> Self {
        Recorder {
            start: at,
            events: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, e: &StepEvent) {
        if e.t >= self.start {
            self.events.push(StepEvent {
                t: Timestamp(e.t.since(self.start)),
                ..*e
            });
        }
    }

    pub(crate) fn finish(self) -> Recording {
        Recording::new(self.events)
    }
}
