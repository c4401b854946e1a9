//! Wall-clock node runtime.
//!
//! One loop thread owns the [`Node`], ticks every sample period and also
//! wakes whenever an impact or playback step falls due. TCP
//! connections (control clients and peer links) each get a reader thread
//! and a writer thread; readers feed a single ordered input queue, writers
//! drain per-connection outboxes. Nothing else is shared.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::actuation::{Clocking, Firing};
use crate::detection::{DetectError, DetectorParams, TileDetector};
use crate::model::{SensorSample, StepEvent, Timestamp, SAMPLE_PERIOD_US};
use crate::netproto::control::{handle_line, Notice};
use crate::netproto::{encode, FrameDecoder, Message, PROTO_VERSION};
use crate::session::{Node, NodeConfig, NodeId};

const HEARTBEAT_US: u64 = 1_000_000;
const ACCEPT_POLL: Duration = Duration::from_millis(10);
const DIAL_RETRY: Duration = Duration::from_millis(50);

/// Source of pressure samples for a live node. Hardware backends (ADC or
/// GPIO readers) implement this; the crate ships only [`ScriptedSource`].
pub trait SensorSource: Send {
    /// Samples taken at or before `now`, in time order.
    fn poll(&mut self, now: Timestamp) -> Vec<SensorSample>;
}

/// Replays pre-synthesized samples against the wall clock.
pub struct ScriptedSource {
    samples: Vec<SensorSample>,
    next: usize,
}

impl ScriptedSource {
    pub fn new(mut samples: Vec<SensorSample>) -> Self {
        samples.sort_by_key(|s| (s.t, s.tile, s.side));
        ScriptedSource { samples, next: 0 }
    }
}

impl SensorSource for ScriptedSource {
    fn poll(&mut self, now: Timestamp) -> Vec<SensorSample> {
        let end = self.next + self.samples[self.next..].partition_point(|s| s.t <= now);
        let out = self.samples[self.next..end].to_vec();
        self.next = end;
        out
    }
}

pub struct LiveConfig {
    pub node: NodeConfig,
    pub detector: DetectorParams,
    /// Control channel listen address.
    pub control: Option<SocketAddr>,
    /// Peer link listen address.
    pub listen: Option<SocketAddr>,
    /// Peer link addresses to dial.
    pub peers: Vec<SocketAddr>,
    pub tick_us: u64,
    pub source: Option<Box<dyn SensorSource>>,
    /// Write every firing to this file (truncated at start) as it happens.
    pub log_path: Option<std::path::PathBuf>,
}

impl LiveConfig {
    pub fn new(node: NodeConfig) -> Self {
        LiveConfig {
            node,
            detector: DetectorParams::default(),
            control: None,
            listen: None,
            peers: Vec::new(),
            tick_us: SAMPLE_PERIOD_US,
            source: None,
            log_path: None,
        }
    }
}

enum Input {
    ControlOpen { conn: u64, tx: Sender<String> },
    ControlLine { conn: u64, line: String },
    ControlClosed { conn: u64 },
    LinkOpen { link: u64, tx: Sender<Vec<u8>> },
    LinkFrame { link: u64, msg: Message },
    LinkClosed { link: u64 },
    Shutdown,
}

#[derive(Clone)]
struct Shared {
    inputs: Sender<Input>,
    stop: Arc<AtomicBool>,
    ids: Arc<AtomicU64>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
}

impl Shared {
    fn next_id(&self) -> u64 {
        self.ids.fetch_add(1, Ordering::Relaxed)
    }

    fn track(&self, s: &TcpStream) {
        if let Ok(c) = s.try_clone() {
            self.streams.lock().unwrap().push(c);
        }
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }
}

/// A running live node.
pub struct LiveNode {
    shared: Shared,
    control_addr: Option<SocketAddr>,
    link_addr: Option<SocketAddr>,
    main: Option<JoinHandle<io::Result<Node>>>,
    aux: Vec<JoinHandle<()>>,
}

impl LiveNode {
    pub fn spawn(mut cfg: LiveConfig) -> io::Result<LiveNode> {
        cfg.node.clocking = Clocking::Live;
        let detector = TileDetector::new(cfg.detector).map_err(io::Error::other)?;
        let (tx, rx) = mpsc::channel();
        let shared = Shared {
            inputs: tx,
            stop: Arc::new(AtomicBool::new(false)),
            ids: Arc::new(AtomicU64::new(1)),
            streams: Arc::new(Mutex::new(Vec::new())),
        };
        let mut aux = Vec::new();

        let control_addr = match cfg.control {
            Some(addr) => {
                let listener = TcpListener::bind(addr)?;
                let local = listener.local_addr()?;
                let sh = shared.clone();
                aux.push(thread::spawn(move || {
                    accept_loop(listener, sh, serve_control)
                }));
                info!("control channel on {local}");
                Some(local)
            }
            None => None,
        };
        let link_addr = match cfg.listen {
            Some(addr) => {
                let listener = TcpListener::bind(addr)?;
                let local = listener.local_addr()?;
                let sh = shared.clone();
                aux.push(thread::spawn(move || accept_loop(listener, sh, serve_link)));
                info!("peer links on {local}");
                Some(local)
            }
            None => None,
        };
        for peer in cfg.peers.clone() {
            let sh = shared.clone();
            aux.push(thread::spawn(move || dial(peer, sh)));
        }

        let log = match &cfg.log_path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        let runner = Runner {
            node: Node::new(cfg.node.clone()),
            detector,
            source: cfg.source.take(),
            tick_us: cfg.tick_us.max(1),
            controls: BTreeMap::new(),
            links: BTreeMap::new(),
            log,
            start: Instant::now(),
            last_heartbeat: 0,
        };
        let main = thread::spawn(move || runner.run(rx));

        Ok(LiveNode {
            shared,
            control_addr,
            link_addr,
            main: Some(main),
            aux,
        })
    }

    pub fn control_addr(&self) -> Option<SocketAddr> {
        self.control_addr
    }

    pub fn link_addr(&self) -> Option<SocketAddr> {
        self.link_addr
    }

    /// Stops every thread and returns the node's final state.
    pub fn shutdown(mut self) -> io::Result<Node> {
        self.stop_threads();
        self.main
            .take()
            .expect("joined once")
            .join()
            .map_err(|_| io::Error::other("node loop panicked"))?
    }

    /// Blocks until the node loop exits on its own.
    pub fn wait(mut self) -> io::Result<Node> {
        let out = self
            .main
            .take()
            .expect("joined once")
            .join()
            .map_err(|_| io::Error::other("node loop panicked"))?;
        self.stop_threads();
        out
    }

    fn stop_threads(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        let _ = self.shared.inputs.send(Input::Shutdown);
        for s in self.shared.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for h in self.aux.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for LiveNode {
    fn drop(&mut self) {
        if self.main.is_some() {
            self.stop_threads();
        }
    }
}

fn accept_loop(listener: TcpListener, sh: Shared, serve: fn(TcpStream, Shared)) {
    if listener.set_nonblocking(true).is_err() {
        return;
    }
    while !sh.stopped() {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("accepted {peer}");
                let _ = stream.set_nonblocking(false);
                serve(stream, sh.clone());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
}

fn dial(addr: SocketAddr, sh: Shared) {
    while !sh.stopped() {
        match TcpStream::connect(addr) {
            Ok(stream) => {
                info!("linked to {addr}");
                serve_link(stream, sh);
                return;
            }
            Err(_) => thread::sleep(DIAL_RETRY),
        }
    }
}

fn serve_control(stream: TcpStream, sh: Shared) {
    let _ = stream.set_nodelay(true);
    sh.track(&stream);
    let conn = sh.next_id();
    let (tx, rx) = mpsc::channel::<String>();
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    thread::spawn(move || {
        for line in rx {
            if writer.write_all(line.as_bytes()).is_err() || writer.write_all(b"\n").is_err() {
                break;
            }
        }
    });
    if sh.inputs.send(Input::ControlOpen { conn, tx }).is_err() {
        return;
    }
    let inputs = sh.inputs.clone();
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if inputs.send(Input::ControlLine { conn, line }).is_err() {
                return;
            }
        }
        let _ = inputs.send(Input::ControlClosed { conn });
    });
}

fn serve_link(stream: TcpStream, sh: Shared) {
    let _ = stream.set_nodelay(true);
    sh.track(&stream);
    let link = sh.next_id();
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    thread::spawn(move || {
        for bytes in rx {
            if writer.write_all(&bytes).is_err() {
                break;
            }
        }
    });
    if sh.inputs.send(Input::LinkOpen { link, tx }).is_err() {
        return;
    }
    let inputs = sh.inputs.clone();
    thread::spawn(move || {
        let mut stream = stream;
        let mut dec = FrameDecoder::new();
        let mut buf = [0u8; 1024];
        loop {
            let n = match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            dec.extend(&buf[..n]);
            while let Some(frame) = dec.next_frame() {
                match frame {
                    Ok(msg) => {
                        if inputs.send(Input::LinkFrame { link, msg }).is_err() {
                            return;
                        }
                    }
                    Err(e) => warn!("link {link}: {e}"),
                }
            }
        }
        let _ = inputs.send(Input::LinkClosed { link });
    });
}

struct Link {
    tx: Sender<Vec<u8>>,
    peer: Option<NodeId>,
}

struct Runner {
    node: Node,
    detector: TileDetector,
    source: Option<Box<dyn SensorSource>>,
    tick_us: u64,
    controls: BTreeMap<u64, Sender<String>>,
    links: BTreeMap<u64, Link>,
    log: Option<BufWriter<File>>,
    start: Instant,
    last_heartbeat: u64,
}

impl Runner {
    fn now(&self) -> Timestamp {
        Timestamp(self.start.elapsed().as_micros() as u64)
    }

    fn run(mut self, rx: Receiver<Input>) -> io::Result<Node> {
        let period = Duration::from_micros(self.tick_us);
        let mut next_tick = self.start;
        loop {
            // Sample on the tick cadence, but fire impacts at their own
            // due time rather than on the next tick.
            let due = self
                .node
                .next_wakeup()
                .map(|t| self.start + Duration::from_micros(t.0));
            let deadline = due.map_or(next_tick, |d| d.min(next_tick));
            let wait = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(Input::Shutdown) => break,
                Ok(input) => self.handle(input)?,
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            let now = Instant::now();
            if now >= next_tick {
                self.tick().map_err(io::Error::other)?;
                next_tick += period;
                // After a stall, resume the cadence from now.
                if next_tick < now {
                    next_tick = now + period;
                }
            } else if due.is_some_and(|d| now >= d) {
                self.advance(self.now());
            }
        }
        if let Some(log) = &mut self.log {
            log.flush()?;
        }
        Ok(self.node)
    }

    fn tick(&mut self) -> Result<(), DetectError> {
        let now = self.now();
        if let Some(src) = &mut self.source {
            for s in src.poll(now) {
                if let Some(e) = self.detector.push(s)? {
                    self.local_step(e);
                }
            }
        }
        if now.0 >= self.last_heartbeat + HEARTBEAT_US {
            self.last_heartbeat = now.0;
            self.broadcast_links(&Message::Heartbeat { t_us: now.0 });
        }
        self.advance(now);
        Ok(())
    }

    fn advance(&mut self, now: Timestamp) {
        let adv = self.node.advance(now);
        for e in &adv.played {
            self.notify(&Notice::step_detected(e));
        }
        for f in &adv.fired {
            self.record_firing(f);
            self.notify(&Notice::impact(f));
        }
    }

    fn record_firing(&mut self, f: &Firing) {
        if let Some(log) = &mut self.log {
            let _ = writeln!(log, "{}", f.log_line());
            let _ = log.flush();
        }
    }

    fn notify(&mut self, n: &Notice) {
        let line = n.to_line();
        self.controls.retain(|_, tx| tx.send(line.clone()).is_ok());
    }

    fn broadcast_links(&mut self, msg: &Message) {
        let bytes = encode(msg);
        self.links.retain(|_, l| l.tx.send(bytes.clone()).is_ok());
    }

    fn local_step(&mut self, e: StepEvent) {
        self.notify(&Notice::step_detected(&e));
        match self.node.local_step(e) {
            Ok(sends) => self.forward(sends),
            Err(err) => debug!("step dropped: {err}"),
        }
    }

    fn forward(&mut self, sends: Vec<(NodeId, StepEvent)>) {
        for (to, e) in sends {
            let bytes = encode(&Message::step(&e));
            match self.links.values().find(|l| l.peer == Some(to)) {
                Some(l) => {
                    let _ = l.tx.send(bytes);
                }
                None => warn!("no link to node {to}"),
            }
        }
    }

    fn handle(&mut self, input: Input) -> io::Result<()> {
        let now = self.now();
        match input {
            Input::ControlOpen { conn, tx } => {
                self.controls.insert(conn, tx);
            }
            Input::ControlClosed { conn } => {
                self.controls.remove(&conn);
            }
            Input::ControlLine { conn, line } => {
                let handled = handle_line(&mut self.node, &line, now);
                if let Some(tx) = self.controls.get(&conn) {
                    let _ = tx.send(handled.reply.to_line());
                }
                self.forward(handled.sends);
                self.advance(now);
            }
            Input::LinkOpen { link, tx } => {
                let hello = Message::Hello {
                    proto_version: PROTO_VERSION,
                    role: self.node.role(),
                    node_id: self.node.id().0,
                };
                let _ = tx.send(encode(&hello));
                self.links.insert(link, Link { tx, peer: None });
            }
            Input::LinkClosed { link } => {
                if let Some(Link { peer: Some(id), .. }) = self.links.remove(&link) {
                    info!("node {id} disconnected");
                    self.node.disconnect(id);
                }
            }
            Input::LinkFrame { link, msg } => self.handle_frame(link, msg, now),
            Input::Shutdown => {}
        }
        Ok(())
    }

    fn handle_frame(&mut self, link: u64, msg: Message, now: Timestamp) {
        let from = self.links.get(&link).and_then(|l| l.peer);
        match msg {
            Message::Hello {
                proto_version,
                role,
                node_id,
            } => {
                if proto_version != PROTO_VERSION {
                    warn!("link {link}: protocol version {proto_version} unsupported");
                    return;
                }
                let id = NodeId(node_id);
                if let Some(l) = self.links.get_mut(&link) {
                    l.peer = Some(id);
                }
                info!("node {id} connected as {role}");
                self.node.connect(id, role);
            }
            Message::Step { .. } => {
                let (Some(from), Some(e)) = (from, msg.as_step()) else {
                    warn!("link {link}: step before hello");
                    return;
                };
                if self.node.remote_step(from, e, now) {
                    self.advance(now);
                }
            }
            Message::Mode(m) => {
                if let Err(e) = self.node.switch_mode(m) {
                    warn!("remote mode switch refused: {e}");
                }
            }
            Message::Pattern { count } => {
                if let Ok(p) = crate::model::ImpactPattern::new(count) {
                    self.node.set_pattern(p);
                }
            }
            Message::Heartbeat { .. } => {}
        }
    }
}
