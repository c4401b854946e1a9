//! A node's interaction mode, step routing, recording and playback.
//!
//! | mode        | own steps fire locally     | own steps sent to        | remote steps fire |
//! |-------------|----------------------------|--------------------------|-------------------|
//! | Solo        | yes                        | nobody                   | no                |
//! | Group       | if `group_echo`            | the single peer          | yes               |
//! | Theater     | performer: if `theater_echo` | every audience node    | audience only     |
//! | Instruction | if `follow_along`          | nobody                   | no                |
//!
//! In Instruction mode the learner's tile plays back a recording.

mod cluster;
mod playback;
mod recording;

pub use cluster::Cluster;
pub use playback::{scale_time, PlaybackState};
pub use recording::{Recording, REC_MAGIC, REC_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{expand, Actuator, BankConfig, Clocking, Firing};
use crate::model::{ImpactPattern, Mode, ModelError, StepEvent, TileId, Timestamp};
use recording::Recorder;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("{mode} mode needs {need}")]
    TopologyUnsatisfied { mode: Mode, need: &'static str },
    #[error("routing rule violates {0} mode invariants")]
    RuleInvalid(Mode),
    #[error("already recording")]
    AlreadyRecording,
    #[error("not recording")]
    NotRecording,
    #[error("speed must be > 0")]
    SpeedInvalid(f64),
    #[error("playback requires instruction mode (node is in {0} mode)")]
    NotInstructionMode(Mode),
    #[error("nothing is playing")]
    NotPlaying,
    #[error("unsupported recording version `{0}`")]
    UnsupportedVersion(String),
    #[error("recording line {line}: {msg}")]
    RecordingFormat { line: usize, msg: String },
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    #[default]
    Standalone,
    Performer,
    Audience,
    Peer,
}

impl NodeRole {
    pub fn wire_code(self) -> u8 {
        match self {
            NodeRole::Standalone => 0,
            NodeRole::Performer => 1,
            NodeRole::Audience => 2,
            NodeRole::Peer => 3,
        }
    }

    pub fn from_wire(code: u8) -> Option<Self> {
        match code {
            0 => Some(NodeRole::Standalone),
            1 => Some(NodeRole::Performer),
            2 => Some(NodeRole::Audience),
            3 => Some(NodeRole::Peer),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeRole::Standalone => "standalone",
            NodeRole::Performer => "performer",
            NodeRole::Audience => "audience",
            NodeRole::Peer => "peer",
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeRole {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        (0..4)
            .filter_map(NodeRole::from_wire)
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Parse {
                what: "role",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingRule {
    pub mode: Mode,
    pub role: NodeRole,
    pub local_echo: bool,
    pub destinations: BTreeSet<NodeId>,
}

impl RoutingRule {
    pub fn validate(&self) -> Result<(), SessionError> {
        let ok = match self.mode {
            Mode::Solo => self.destinations.is_empty() && self.local_echo,
            Mode::Group => self.destinations.len() == 1,
            Mode::Theater => match self.role {
                NodeRole::Performer => !self.destinations.is_empty(),
                NodeRole::Audience => self.destinations.is_empty(),
                _ => false,
            },
            Mode::Instruction => self.destinations.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(SessionError::RuleInvalid(self.mode))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Routed {
    pub local: Vec<StepEvent>,
    pub remote: Vec<(NodeId, StepEvent)>,
}

/// Where a locally detected step goes under `rule`.
pub fn route(rule: &RoutingRule, e: &StepEvent) -> Result<Routed, SessionError> {
    rule.validate()?;
    let local = if rule.local_echo {
        vec![*e]
    } else {
        Vec::new()
    };
    let remote = rule.destinations.iter().map(|&id| (id, *e)).collect();
    Ok(Routed { local, remote })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub id: NodeId,
    pub tile: TileId,
    pub role: NodeRole,
    pub mode: Mode,
    pub pattern: ImpactPattern,
    /// Fire your own steps locally in Group mode as well as on the peer.
    pub group_echo: bool,
    /// Fire the performer's steps on the performer's own tile in Theater mode.
    pub theater_echo: bool,
    /// Keep live steps active locally while playing back in Instruction mode.
    pub follow_along: bool,
    /// Delay added to remote steps on arrival.
    pub smoothing_us: u64,
    pub dispatch_delay_us: u64,
    pub bank: BankConfig,
    pub clocking: Clocking,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            id: NodeId(0),
            tile: TileId(0),
            role: NodeRole::Standalone,
            mode: Mode::Solo,
            pattern: ImpactPattern::default(),
            group_echo: false,
            theater_echo: false,
            follow_along: false,
            smoothing_us: 0,
            dispatch_delay_us: 0,
            bank: BankConfig::default(),
            clocking: Clocking::Virtual,
        }
    }
}

/// Output of one [`Node::advance`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Advance {
    pub fired: Vec<Firing>,
    pub played: Vec<StepEvent>,
}

/// One node's session state machine. All inputs are applied in call
/// order, so a mode switch never splits the handling of a single step.
#[derive(Debug, Clone)]
pub struct Node {
    config: NodeConfig,
    mode: Mode,
    pattern: ImpactPattern,
    links: BTreeMap<NodeId, NodeRole>,
    actuator: Actuator,
    recorder: Option<Recorder>,
    playback: Option<PlaybackState>,
    dropped: usize,
}

impl Node {
    pub fn new(config: NodeConfig) -> Self {
        Node {
            mode: config.mode,
            pattern: config.pattern,
            links: BTreeMap::new(),
            actuator: Actuator::new(config.bank, config.clocking),
            recorder: None,
            playback: None,
            dropped: 0,
            config,
        }
    }

    pub fn id(&self) -> NodeId {
        self.config.id
    }

    pub fn tile(&self) -> TileId {
        self.config.tile
    }

    pub fn role(&self) -> NodeRole {
        self.config.role
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pattern(&self) -> ImpactPattern {
        self.pattern
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn links(&self) -> &BTreeMap<NodeId, NodeRole> {
        &self.links
    }

    pub fn connect(&mut self, id: NodeId, role: NodeRole) {
        self.links.insert(id, role);
    }

    pub fn disconnect(&mut self, id: NodeId) {
        self.links.remove(&id);
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    pub fn playback(&self) -> Option<&PlaybackState> {
        self.playback.as_ref()
    }

    /// Steps that could not be routed because the topology was incomplete.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn log(&self) -> &[Firing] {
        self.actuator.log()
    }

    pub fn pending_impacts(&self) -> usize {
        self.actuator.pending()
    }

    /// Earliest future instant at which this node has work to do.
    pub fn next_wakeup(&self) -> Option<Timestamp> {
        let play = self.playback.as_ref().and_then(PlaybackState::next_due);
        match (self.actuator.next_due(), play) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Routing rule for `mode` given the current links.
    pub fn rule_for(&self, mode: Mode) -> Result<RoutingRule, SessionError> {
        let role = self.config.role;
        let of_role = |r: NodeRole| -> BTreeSet<NodeId> {
            self.links
                .iter()
                .filter(|(_, &lr)| lr == r)
                .map(|(&id, _)| id)
                .collect()
        };
        let (local_echo, destinations) = match mode {
            Mode::Solo => (true, BTreeSet::new()),
            Mode::Group => {
                let peers = of_role(NodeRole::Peer);
                if peers.len() != 1 {
                    return Err(SessionError::TopologyUnsatisfied {
                        mode,
                        need: "exactly one connected peer",
                    });
                }
                (self.config.group_echo, peers)
            }
            Mode::Theater => match role {
                NodeRole::Audience => (false, BTreeSet::new()),
                NodeRole::Performer => {
                    let audience = of_role(NodeRole::Audience);
                    if audience.is_empty() {
                        return Err(SessionError::TopologyUnsatisfied {
                            mode,
                            need: "at least one connected audience node",
                        });
                    }
                    (self.config.theater_echo, audience)
                }
                _ => {
                    return Err(SessionError::TopologyUnsatisfied {
                        mode,
                        need: "a performer or audience role",
                    })
                }
            },
            Mode::Instruction => {
                let echo = self.playback.is_none() || self.config.follow_along;
                (echo, BTreeSet::new())
            }
        };
        let rule = RoutingRule {
            mode,
            role,
            local_echo,
            destinations,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn rule(&self) -> Result<RoutingRule, SessionError> {
        self.rule_for(self.mode)
    }

    /// Changes mode if the current links satisfy it. Impacts already
    /// scheduled still fire; playback stops when leaving Instruction.
    pub fn switch_mode(&mut self, mode: Mode) -> Result<(), SessionError> {
        if mode == self.mode {
            return Ok(());
        }
        self.rule_for(mode)?;
        self.mode = mode;
        if mode != Mode::Instruction {
            self.playback = None;
        }
        Ok(())
    }

    pub fn set_pattern(&mut self, pattern: ImpactPattern) {
        self.pattern = pattern;
    }

    fn schedule(&mut self, e: &StepEvent) {
        self.actuator
            .enqueue(expand(e, self.pattern, self.config.dispatch_delay_us));
    }

    /// Handles a step detected on this node. Returns the copies to send to
    /// other nodes.
    pub fn local_step(&mut self, e: StepEvent) -> Result<Vec<(NodeId, StepEvent)>, SessionError> {
        if let Some(rec) = &mut self.recorder {
            rec.push(&e);
        }
        let routed = match self.rule().and_then(|rule| route(&rule, &e)) {
            Ok(r) => r,
            Err(err) => {
                self.dropped += 1;
                return Err(err);
            }
        };
        for l in &routed.local {
            self.schedule(l);
        }
        Ok(routed.remote)
    }

    /// Whether steps arriving from `from` fire on this node right now.
    pub fn accepts_remote(&self, from: NodeId) -> bool {
        match self.mode {
            Mode::Group => self.links.get(&from) == Some(&NodeRole::Peer),
            Mode::Theater => {
                self.config.role == NodeRole::Audience
                    && self.links.get(&from) == Some(&NodeRole::Performer)
            }
            _ => false,
        }
    }

    /// Schedules a step received from `from` on this node's tile, timed
    /// from its arrival. Returns false if the current mode ignores it.
    pub fn remote_step(&mut self, from: NodeId, e: StepEvent, arrival: Timestamp) -> bool {
        if !self.accepts_remote(from) {
            self.dropped += 1;
            return false;
        }
        let local = StepEvent {
            tile: self.config.tile,
            t: arrival + self.config.smoothing_us,
            ..e
        };
        self.schedule(&local);
        true
    }

    pub fn start_recording(&mut self, now: Timestamp) -> Result<(), SessionError> {
        if self.recorder.is_some() {
            return Err(SessionError::AlreadyRecording);
        }
        self.recorder = Some(Recorder::start(now));
        Ok(())
    }

    pub fn stop_recording(&mut self) -> Result<Recording, SessionError> {
        self.recorder
            .take()
            .map(Recorder::finish)
            .ok_or(SessionError::NotRecording)
    }

    pub fn start_playback(
        &mut self,
        recording: Recording,
        speed: f64,
        now: Timestamp,
    ) -> Result<(), SessionError> {
        let state = PlaybackState::new(recording, speed, now)?;
        if self.mode != Mode::Instruction {
            return Err(SessionError::NotInstructionMode(self.mode));
        }
        self.playback = Some(state);
        Ok(())
    }

    pub fn seek(&mut self, t_us: u64, now: Timestamp) -> Result<(), SessionError> {
        let p = self.playback.as_mut().ok_or(SessionError::NotPlaying)?;
        p.seek(t_us, now);
        Ok(())
    }

    pub fn stop_playback(&mut self) {
        self.playback = None;
    }

    /// Emits due playback steps, then fires every impact due by `now`.
    pub fn advance(&mut self, now: Timestamp) -> Advance {
        let played = match &mut self.playback {
            Some(p) => p.due(now),
            None => Vec::new(),
        };
        for e in &played {
            self.schedule(e);
        }
        Advance {
            fired: self.actuator.tick(now),
            played,
        }
    }
}
