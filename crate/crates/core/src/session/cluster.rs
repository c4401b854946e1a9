//! Several nodes on one virtual clock, linked by in-process byte pipes
//! that carry the binary frame protocol.

use std::collections::BTreeMap;

use super::{Node, NodeConfig, NodeId, SessionError};
use crate::actuation::Firing;
use crate::detection::{DetectError, DetectorParams, TileDetector};
use crate::model::{Mode, SensorSample, StepEvent, Timestamp, SAMPLE_PERIOD_US};
use crate::netproto::{encode_into, FrameDecoder, FrameError, Message, PROTO_VERSION};

struct Member {
    node: Node,
    detector: TileDetector,
    inbound: BTreeMap<NodeId, FrameDecoder>,
}

#[derive(Default)]
pub struct Cluster {
    members: Vec<Member>,
    index: BTreeMap<NodeId, usize>,
    /// Bytes in flight from one node to another.
    pipes: BTreeMap<(NodeId, NodeId), Vec<u8>>,
    frame_errors: Vec<FrameError>,
    route_errors: Vec<(NodeId, SessionError)>,
    now: Timestamp,
}

impl Cluster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        config: NodeConfig,
        params: DetectorParams,
    ) -> Result<NodeId, DetectError> {
        let id = config.id;
        assert!(!self.index.contains_key(&id), "duplicate node id {id}");
        self.index.insert(id, self.members.len());
        self.members.push(Member {
            node: Node::new(config),
            detector: TileDetector::new(params)?,
            inbound: BTreeMap::new(),
        });
        Ok(id)
    }

    /// Opens a bidirectional link; both ends exchange HELLO frames.
    pub fn link(&mut self, a: NodeId, b: NodeId) {
        for (from, to) in [(a, b), (b, a)] {
            let hello = Message::Hello {
                proto_version: PROTO_VERSION,
                role: self.node(from).role(),
                node_id: from.0,
            };
            self.send(from, to, &hello);
            self.member_mut(to).inbound.entry(from).or_default();
        }
        self.deliver();
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.members[self.index[&id]].node
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.member_mut(id).node
    }

    fn member_mut(&mut self, id: NodeId) -> &mut Member {
        let i = self.index[&id];
        &mut self.members[i]
    }

    pub fn log(&self, id: NodeId) -> &[Firing] {
        self.node(id).log()
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn frame_errors(&self) -> &[FrameError] {
        &self.frame_errors
    }

    pub fn route_errors(&self) -> &[(NodeId, SessionError)] {
        &self.route_errors
    }

    pub fn switch_mode(&mut self, id: NodeId, mode: Mode) -> Result<(), SessionError> {
        self.node_mut(id).switch_mode(mode)
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: &Message) {
        encode_into(msg, self.pipes.entry((from, to)).or_default());
    }

    /// A step detected on `id` now, e.g. manual injection.
    pub fn inject(&mut self, id: NodeId, e: StepEvent) {
        self.handle_local(id, e);
        self.deliver();
    }

    fn handle_local(&mut self, id: NodeId, e: StepEvent) {
        match self.node_mut(id).local_step(e) {
            Ok(sends) => {
                for (to, e) in sends {
                    if self.index.contains_key(&to) {
                        self.send(id, to, &Message::step(&e));
                    }
                }
            }
            Err(err) => self.route_errors.push((id, err)),
        }
    }

    /// Drains every pipe into its receiver's decoder and applies frames.
    fn deliver(&mut self) {
        let now = self.now;
        let pipes = std::mem::take(&mut self.pipes);
        let mut frame_errors = Vec::new();
        let mut route_errors = Vec::new();
        for ((from, to), bytes) in pipes {
            if bytes.is_empty() || !self.index.contains_key(&to) {
                continue;
            }
            let member = self.member_mut(to);
            let dec = member.inbound.entry(from).or_default();
            dec.extend(&bytes);
            let mut frames = Vec::new();
            while let Some(f) = dec.next_frame() {
                frames.push(f);
            }
            for f in frames {
                match f {
                    Ok(Message::Hello { role, node_id, .. }) => {
                        member.node.connect(NodeId(node_id), role);
                    }
                    Ok(msg @ Message::Step { .. }) => {
                        let e = msg.as_step().expect("step frame");
                        member.node.remote_step(from, e, now);
                    }
                    Ok(Message::Mode(m)) => {
                        if let Err(err) = member.node.switch_mode(m) {
                            route_errors.push((to, err));
                        }
                    }
                    Ok(Message::Pattern { count }) => {
                        if let Ok(p) = crate::model::ImpactPattern::new(count) {
                            member.node.set_pattern(p);
                        }
                    }
                    Ok(Message::Heartbeat { .. }) => {}
                    Err(e) => frame_errors.push(e),
                }
            }
        }
        self.frame_errors.extend(frame_errors);
        self.route_errors.extend(route_errors);
    }

    /// Advances the clock to `now`: feeds the samples taken at `now`,
    /// routes resulting steps, delivers frames and fires due impacts.
    pub fn tick(
        &mut self,
        now: Timestamp,
        samples: &[(NodeId, SensorSample)],
    ) -> Result<(), DetectError> {
        self.now = now;
        for &(id, s) in samples {
            if let Some(e) = self.member_mut(id).detector.push(s)? {
                self.handle_local(id, e);
            }
        }
        self.deliver();
        for m in &mut self.members {
            m.node.advance(now);
        }
        Ok(())
    }

    fn busy(&self) -> bool {
        self.members
            .iter()
            .any(|m| m.node.pending_impacts() > 0 || m.node.next_wakeup().is_some())
            || self.pipes.values().any(|p| !p.is_empty())
    }

    /// Plays per-node sample streams tick by tick, then keeps ticking until
    /// every scheduled impact has fired. Samples must be period-aligned.
    pub fn run(&mut self, streams: &[(NodeId, Vec<SensorSample>)]) -> Result<(), DetectError> {
        let mut by_tick: BTreeMap<u64, Vec<(NodeId, SensorSample)>> = BTreeMap::new();
        for (id, samples) in streams {
            for s in samples {
                by_tick.entry(s.t.0).or_default().push((*id, *s));
            }
        }
        let last = by_tick.keys().next_back().copied().unwrap_or(self.now.0);
        let mut t = self.now.0.div_ceil(SAMPLE_PERIOD_US) * SAMPLE_PERIOD_US;
        loop {
            let samples = by_tick.remove(&t).unwrap_or_default();
            self.tick(Timestamp(t), &samples)?;
            if t >= last && !self.busy() {
                break;
            }
            t += SAMPLE_PERIOD_US;
        }
        Ok(())
    }

    /// Ticks with no sensor input until `until`.
    pub fn run_until(&mut self, until: Timestamp) {
        let mut t = self.now.0 - self.now.0 % SAMPLE_PERIOD_US + SAMPLE_PERIOD_US;
        while t <= until.0 {
            self.tick(Timestamp(t), &[]).expect("no samples");
            t += SAMPLE_PERIOD_US;
        }
    }
}
