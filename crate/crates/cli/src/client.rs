//! Control-channel client used by `record`, `play` and `send`.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use solefultap::netproto::{Notice, Request};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RecordVerb {
    Start,
    Stop,
}

/// Sends one line and returns the node's reply, skipping any impact or
/// step notifications pushed in between. A step request is answered with
/// a `step_detected` line of its own, so for those the first one on the
/// requested side is the reply.
fn request(addr: SocketAddr, line: &str) -> Result<Notice> {
    let step_side = match solefultap::netproto::parse_request(line) {
        Ok(Request::Step { side }) => Some(side),
        _ => None,
    };
    let mut stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))
        .with_context(|| format!("cannot reach node at {addr}"))?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    stream.write_all(line.as_bytes())?;
    stream.write_all(b"\n")?;
    let mut reader = BufReader::new(stream);
    let mut buf = String::new();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            bail!("node closed the connection without replying");
        }
        let notice: Notice = serde_json_line(&buf)?;
        match notice {
            Notice::StepDetected { side, .. } if Some(side) == step_side => return Ok(notice),
            Notice::Impact { .. } | Notice::StepDetected { .. } => continue,
            other => return Ok(other),
        }
    }
}

fn serde_json_line(line: &str) -> Result<Notice> {
    solefultap::netproto::control::parse_notice(line.trim_end())
        .with_context(|| format!("unexpected reply `{}`", line.trim_end()))
}

fn finish(reply: Notice) -> Result<()> {
    println!("{}", reply.to_line());
    match reply {
        Notice::Error { msg } => bail!("node refused: {msg}"),
        _ => Ok(()),
    }
}

pub fn record(addr: SocketAddr, verb: RecordVerb, file: Option<&Path>) -> Result<()> {
    let mut msg = serde_json::json!({
        "type": "record",
        "action": match verb {
            RecordVerb::Start => "start",
            RecordVerb::Stop => "stop",
        },
    });
    if let Some(f) = file {
        msg["file"] = absolute(f)?.into();
    }
    finish(request(addr, &msg.to_string())?)
}

pub fn play(addr: SocketAddr, file: &Path, speed: f64) -> Result<()> {
    let msg = serde_json::json!({
        "type": "play",
        "speed": speed,
        "file": absolute(file)?,
    });
    finish(request(addr, &msg.to_string())?)
}

pub fn send(addr: SocketAddr, json: &str) -> Result<()> {
    finish(request(addr, json)?)
}

fn absolute(p: &Path) -> Result<String> {
    let abs = std::path::absolute(p).with_context(|| format!("bad path {}", p.display()))?;
    Ok(abs.to_string_lossy().into_owned())
}
