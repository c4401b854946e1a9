use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc::{self, Receiver};
use std::thread;
use std::time::{Duration, Instant};

use solefultap::live::{LiveConfig, LiveNode, ScriptedSource};
use solefultap::netproto::control::parse_notice;
use solefultap::netproto::Notice;
use solefultap::simkit::{parse_script, synth, PulseShape};
use solefultap::{Mode, NodeConfig, NodeId, NodeRole, Side, SolenoidPos, TileId};

const WAIT: Duration = Duration::from_secs(5);

struct Client {
    stream: TcpStream,
    rx: Receiver<Notice>,
}

impl Client {
    fn connect(addr: SocketAddr) -> Client {
        let stream = TcpStream::connect(addr).unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if tx
                    .send(parse_notice(&line).expect("node sends valid lines"))
                    .is_err()
                {
                    break;
                }
            }
        });
        Client { stream, rx }
    }

    fn send(&mut self, line: &str) {
        self.stream.write_all(line.as_bytes()).unwrap();
        self.stream.write_all(b"\n").unwrap();
    }

    fn next(&self) -> Notice {
        self.rx.recv_timeout(WAIT).expect("node went quiet")
    }

    /// Next line that is not an impact notification.
    fn reply(&self) -> Notice {
        loop {
            match self.next() {
                Notice::Impact { .. } => continue,
                n => return n,
            }
        }
    }

    fn impacts(&self, n: usize) -> Vec<(Side, SolenoidPos, u64)> {
        let mut out = Vec::new();
        while out.len() < n {
            if let Notice::Impact {
                side, pos, t_us, ..
            } = self.next()
            {
                out.push((side, pos, t_us));
            }
        }
        out
    }

    fn request(&mut self, line: &str) -> Notice {
        self.send(line);
        self.reply()
    }
}

fn node(id: u32, mode: Mode, role: NodeRole) -> LiveConfig {
    let mut cfg = LiveConfig::new(NodeConfig {
        id: NodeId(id),
        tile: TileId(id as u16),
        mode,
        role,
        ..NodeConfig::default()
    });
    cfg.control = Some("127.0.0.1:0".parse().unwrap());
    cfg
}

fn wait_for_links(c: &mut Client, n: usize) {
    let deadline = Instant::now() + WAIT;
    loop {
        if let Notice::State { links, .. } = c.request(r#"{"type":"state"}"#) {
            if links >= n {
                return;
            }
        }
        assert!(Instant::now() < deadline, "links never came up");
        thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn injected_step_fires_front_back_front() {
    let live = LiveNode::spawn(node(1, Mode::Solo, NodeRole::Standalone)).unwrap();
    let mut c = Client::connect(live.control_addr().unwrap());
    assert_eq!(
        c.request(r#"{"type":"pattern","count":3}"#),
        Notice::ModeAck {
            mode: Mode::Solo,
            pattern: 3
        }
    );
    assert!(matches!(
        c.request(r#"{"type":"step","side":"L"}"#),
        Notice::StepDetected {
            side: Side::Left,
            ..
        }
    ));
    let hits = c.impacts(3);
    let pos: Vec<SolenoidPos> = hits.iter().map(|h| h.1).collect();
    assert_eq!(
        pos,
        [SolenoidPos::Front, SolenoidPos::Back, SolenoidPos::Front]
    );
    assert!(hits.iter().all(|h| h.0 == Side::Left));
    for w in hits.windows(2) {
        let gap = w[1].2 - w[0].2;
        assert!((80_000..=100_000).contains(&gap), "gap {gap}");
    }
    let final_node = live.shutdown().unwrap();
    assert_eq!(final_node.log().len(), 3);
}

#[test]
fn every_line_gets_one_reply() {
    let live = LiveNode::spawn(node(1, Mode::Solo, NodeRole::Standalone)).unwrap();
    let mut c = Client::connect(live.control_addr().unwrap());
    let lines = [
        "garbage",
        r#"{"type":"nope"}"#,
        r#"{"type":"play","speed":0,"file":"x"}"#,
        r#"{"type":"mode","mode":"group"}"#,
        r#"{"type":"state","extra":1}"#,
        r#"{"type":"record","action":"stop"}"#,
    ];
    for l in lines {
        c.send(l);
    }
    let replies: Vec<Notice> = lines.iter().map(|_| c.reply()).collect();
    assert!(matches!(replies[0], Notice::Error { .. }));
    assert_eq!(replies[1], Notice::error("unknown message type `nope`"));
    assert_eq!(replies[2], Notice::error("speed must be > 0"));
    assert!(matches!(replies[3], Notice::Error { .. }));
    assert!(matches!(
        replies[4],
        Notice::State {
            mode: Mode::Solo,
            ..
        }
    ));
    assert!(matches!(replies[5], Notice::Error { .. }));
    assert!(c.rx.recv_timeout(Duration::from_millis(100)).is_err());
}

#[test]
fn group_peers_feel_each_other() {
    let mut a_cfg = node(1, Mode::Group, NodeRole::Peer);
    a_cfg.listen = Some("127.0.0.1:0".parse().unwrap());
    let a = LiveNode::spawn(a_cfg).unwrap();
    let mut b_cfg = node(2, Mode::Group, NodeRole::Peer);
    b_cfg.peers = vec![a.link_addr().unwrap()];
    let b = LiveNode::spawn(b_cfg).unwrap();

    let mut ca = Client::connect(a.control_addr().unwrap());
    let mut cb = Client::connect(b.control_addr().unwrap());
    wait_for_links(&mut ca, 1);
    wait_for_links(&mut cb, 1);

    ca.request(r#"{"type":"step","side":"R"}"#);
    let on_b = cb.impacts(1);
    assert_eq!((on_b[0].0, on_b[0].1), (Side::Right, SolenoidPos::Front));

    cb.request(r#"{"type":"step","side":"L"}"#);
    let on_a = ca.impacts(1);
    assert_eq!((on_a[0].0, on_a[0].1), (Side::Left, SolenoidPos::Front));

    let a_node = a.shutdown().unwrap();
    let b_node = b.shutdown().unwrap();
    assert!(a_node.log().iter().all(|f| f.tile == TileId(1)));
    assert!(b_node.log().iter().all(|f| f.tile == TileId(2)));
    assert_eq!(a_node.log().len(), 1);
    assert_eq!(b_node.log().len(), 1);
}

#[test]
fn scripted_source_drives_detection() {
    let shape = PulseShape::default();
    let script = parse_script(
        "SOLEFULTAP-SCRIPT v1\nsigma 3\n100000 1 R 600\n300000 1 L 600\n",
        shape.len_us(),
    )
    .unwrap();
    let mut cfg = node(1, Mode::Solo, NodeRole::Standalone);
    cfg.source = Some(Box::new(ScriptedSource::new(
        synth(&script, &shape).unwrap().interleaved(),
    )));
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("act.log");
    cfg.log_path = Some(log_path.clone());
    let live = LiveNode::spawn(cfg).unwrap();
    let c = Client::connect(live.control_addr().unwrap());
    let hits = c.impacts(2);
    assert_eq!(hits[0].0, Side::Right);
    assert_eq!(hits[1].0, Side::Left);
    live.shutdown().unwrap();
    let text = std::fs::read_to_string(log_path).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn record_then_play_at_half_speed() {
    let live = LiveNode::spawn(node(1, Mode::Solo, NodeRole::Standalone)).unwrap();
    let mut c = Client::connect(live.control_addr().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("lesson.rec");
    let file = file.to_str().unwrap();

    c.request(r#"{"type":"record","action":"start"}"#);
    c.request(r#"{"type":"step","side":"L"}"#);
    thread::sleep(Duration::from_millis(150));
    c.request(r#"{"type":"step","side":"R"}"#);
    let stop = c.request(&format!(
        r#"{{"type":"record","action":"stop","file":"{file}"}}"#
    ));
    assert!(matches!(
        stop,
        Notice::RecordAck {
            events: Some(2),
            ..
        }
    ));
    let rec = solefultap::Recording::parse(&std::fs::read_to_string(file).unwrap()).unwrap();
    let gap = rec.events()[1].t.0 - rec.events()[0].t.0;

    let play = format!(r#"{{"type":"play","speed":0.5,"file":"{file}"}}"#);
    assert!(
        matches!(c.request(&play), Notice::Error { .. }),
        "solo mode cannot play"
    );
    c.request(r#"{"type":"mode","mode":"instruction"}"#);
    assert_eq!(
        c.request(&play),
        Notice::PlayAck {
            events: 2,
            speed: 0.5
        }
    );
    let mut played = Vec::new();
    while played.len() < 2 {
        if let Notice::StepDetected { t_us, .. } = c.next() {
            played.push(t_us);
        }
    }
    let scaled = played[1] - played[0];
    assert!(
        scaled.abs_diff(2 * gap) <= 10_000,
        "gap {gap} played as {scaled}"
    );
}
