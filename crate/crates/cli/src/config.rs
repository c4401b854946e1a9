//! Effective configuration: every default in one place, overridable from
//! flags or `SOLEFULTAP_*` environment variables.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use solefultap::detection::DetectorParams;
use solefultap::simkit::{PulseShape, RigConfig};
use solefultap::{ImpactPattern, Mode, NodeConfig, NodeId, NodeRole, TileId};

pub const DEFAULT_CONTROL_PORT: u16 = 7070;

#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Impacts per step (1, 2 or 3).
    #[arg(long, env = "SOLEFULTAP_PATTERN", default_value_t = 1)]
    pub pattern: u8,
    /// Detector window length in samples.
    #[arg(long, env = "SOLEFULTAP_LAG", default_value_t = DetectorParams::default().lag)]
    pub lag: usize,
    /// Detector threshold in standard deviations.
    #[arg(long, env = "SOLEFULTAP_THRESHOLD", default_value_t = DetectorParams::default().threshold)]
    pub threshold: f64,
    #[arg(long, env = "SOLEFULTAP_INFLUENCE", default_value_t = DetectorParams::default().influence)]
    pub influence: f64,
    #[arg(long, env = "SOLEFULTAP_REFRACTORY_US", default_value_t = DetectorParams::default().refractory_us)]
    pub refractory_us: u64,
    #[arg(long, env = "SOLEFULTAP_MIN_DELTA", default_value_t = DetectorParams::default().min_delta)]
    pub min_delta: i32,
    /// Resting sensor value of the synthetic pulse.
    #[arg(long, env = "SOLEFULTAP_BASELINE", default_value_t = PulseShape::default().baseline)]
    pub baseline: u16,
    #[arg(long, env = "SOLEFULTAP_RISE_US", default_value_t = PulseShape::default().rise_us)]
    pub rise_us: u64,
    #[arg(long, env = "SOLEFULTAP_HOLD_US", default_value_t = PulseShape::default().hold_us)]
    pub hold_us: u64,
    #[arg(long, env = "SOLEFULTAP_DECAY_US", default_value_t = PulseShape::default().decay_us)]
    pub decay_us: u64,
    /// Solenoid strike delay applied to reported strike latency.
    #[arg(long, env = "SOLEFULTAP_MECHANICAL_DELAY_US", default_value_t = RigConfig::default().mechanical_delay_us)]
    pub mechanical_delay_us: u64,
}

impl TuningArgs {
    pub fn pattern(&self) -> Result<ImpactPattern> {
        Ok(ImpactPattern::new(self.pattern)?)
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        let p = DetectorParams {
            lag: self.lag,
            threshold: self.threshold,
            influence: self.influence,
            refractory_us: self.refractory_us,
            min_delta: self.min_delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn pulse(&self) -> PulseShape {
        PulseShape {
            baseline: self.baseline,
            rise_us: self.rise_us,
            hold_us: self.hold_us,
            decay_us: self.decay_us,
        }
    }

    pub fn rig(&self) -> RigConfig {
        RigConfig {
            mechanical_delay_us: self.mechanical_delay_us,
            ..RigConfig::default()
        }
    }

    pub fn render(&self, out: &mut String) {
        let rig = self.rig();
        let _ = writeln!(out, "pattern = {}", self.pattern);
        let _ = writeln!(out, "detector.lag = {}", self.lag);
        let _ = writeln!(out, "detector.threshold = {}", self.threshold);
        let _ = writeln!(out, "detector.influence = {}", self.influence);
        let _ = writeln!(out, "detector.refractory_us = {}", self.refractory_us);
        let _ = writeln!(out, "detector.min_delta = {}", self.min_delta);
        let _ = writeln!(out, "pulse.baseline = {}", self.baseline);
        let _ = writeln!(out, "pulse.rise_us = {}", self.rise_us);
        let _ = writeln!(out, "pulse.hold_us = {}", self.hold_us);
        let _ = writeln!(out, "pulse.decay_us = {}", self.decay_us);
        let _ = writeln!(out, "rig.dispatch_delay_us = {}", rig.dispatch_delay_us);
        let _ = writeln!(out, "rig.mechanical_delay_us = {}", rig.mechanical_delay_us);
        let _ = writeln!(out, "rig.on_time_us = {}", rig.bank.on_time_us);
        let _ = writeln!(out, "rig.rearm_us = {}", rig.bank.rearm_us);
    }
}

/// Accepts `PORT` (bound on loopback) or a full `HOST:PORT`.
pub fn parse_addr(s: &str) -> Result<SocketAddr, String> {
    if let Ok(port) = s.parse::<u16>() {
        return Ok(SocketAddr::from(([127, 0, 0, 1], port)));
    }
    s.parse()
        .map_err(|e| format!("`{s}` is neither a port nor an address: {e}"))
}

#[derive(Debug, Clone, Args)]
pub struct NodeArgs {
    #[arg(long, env = "SOLEFULTAP_MODE", default_value = "solo")]
    pub mode: Mode,
    /// Defaults to `peer` in group mode and `standalone` otherwise.
    #[arg(long, env = "SOLEFULTAP_ROLE")]
    pub role: Option<NodeRole>,
    #[arg(long, env = "SOLEFULTAP_NODE_ID", default_value_t = 1)]
    pub node_id: u32,
    #[arg(long, env = "SOLEFULTAP_TILE", default_value_t = 0)]
    pub tile: u16,
    /// Peer link address to dial (repeatable).
    #[arg(long = "peer", value_parser = parse_addr)]
    pub peers: Vec<SocketAddr>,
    /// Address to accept peer links on.
    #[arg(long, env = "SOLEFULTAP_LISTEN", value_parser = parse_addr)]
    pub listen: Option<SocketAddr>,
    /// Control channel port or address.
    #[arg(long, env = "SOLEFULTAP_CONTROL", value_parser = parse_addr,
          default_value_t = SocketAddr::from(([127, 0, 0, 1], DEFAULT_CONTROL_PORT)))]
    pub control: SocketAddr,
    /// Fire your own steps locally in group mode.
    #[arg(long)]
    pub group_echo: bool,
    /// Fire the performer's steps on their own tile in theater mode.
    #[arg(long)]
    pub theater_echo: bool,
    /// Keep live steps active during instruction playback.
    #[arg(long)]
    pub follow_along: bool,
    /// Delay added to remote steps on arrival.
    #[arg(long, env = "SOLEFULTAP_SMOOTHING_US", default_value_t = 0)]
    pub smoothing_us: u64,
    /// Feed synthetic sensor samples from a script in real time.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Write each firing to this actuation log as it happens.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Exit after this many milliseconds.
    #[arg(long)]
    pub exit_after_ms: Option<u64>,
}

impl NodeArgs {
    pub fn role(&self) -> NodeRole {
        self.role.unwrap_or(match self.mode {
            Mode::Group => NodeRole::Peer,
            _ => NodeRole::Standalone,
        })
    }

    /// Rejects topologies the starting mode can never satisfy.
    pub fn check_topology(&self) -> Result<()> {
        let role = self.role();
        let reachable = !self.peers.is_empty() || self.listen.is_some();
        match self.mode {
            Mode::Group => {
                if role != NodeRole::Peer {
                    bail!("group mode needs role peer, got {role}");
                }
                if self.peers.len() > 1 || (self.peers.is_empty() && self.listen.is_none()) {
                    bail!("group mode needs exactly one peer: pass one --peer, or --listen for the peer to dial in");
                }
            }
            Mode::Theater => {
                if !matches!(role, NodeRole::Performer | NodeRole::Audience) {
                    bail!("theater mode needs role performer or audience, got {role}");
                }
                if !reachable {
                    bail!("theater mode needs --listen or at least one --peer");
                }
            }
            Mode::Solo | Mode::Instruction => {}
        }
        Ok(())
    }

    pub fn node_config(&self, tuning: &TuningArgs) -> Result<NodeConfig> {
        let rig = tuning.rig();
        Ok(NodeConfig {
            id: NodeId(self.node_id),
            tile: TileId(self.tile),
            role: self.role(),
            mode: self.mode,
            pattern: tuning.pattern().context("invalid --pattern")?,
            group_echo: self.group_echo,
            theater_echo: self.theater_echo,
            follow_along: self.follow_along,
            smoothing_us: self.smoothing_us,
            dispatch_delay_us: rig.dispatch_delay_us,
            bank: rig.bank,
            ..NodeConfig::default()
        })
    }

    pub fn render(&self, out: &mut String) {
        let _ = writeln!(out, "node.id = {}", self.node_id);
        let _ = writeln!(out, "node.tile = {}", self.tile);
        let _ = writeln!(out, "node.mode = {}", self.mode);
        let _ = writeln!(out, "node.role = {}", self.role());
        let _ = writeln!(out, "node.control = {}", self.control);
        let listen = self.listen.map_or("-".to_string(), |a| a.to_string());
        let _ = writeln!(out, "node.listen = {listen}");
        for p in &self.peers {
            let _ = writeln!(out, "node.peer = {p}");
        }
        let _ = writeln!(out, "node.group_echo = {}", self.group_echo);
        let _ = writeln!(out, "node.theater_echo = {}", self.theater_echo);
        let _ = writeln!(out, "node.follow_along = {}", self.follow_along);
        let _ = writeln!(out, "node.smoothing_us = {}", self.smoothing_us);
    }
}
