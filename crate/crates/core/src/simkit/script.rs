//! `SOLEFULTAP-SCRIPT v1` step scripts.
//!
//! ```text
//! SOLEFULTAP-SCRIPT v1
//! sigma 3
//! seed 42
//! duration_us 2000000
//! 100000 0 L 600
//! 400000 0 R 600
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Directives may
//! appear anywhere after the header. A missing `duration_us` defaults to
//! the end of the last pulse plus [`DEFAULT_TAIL_US`].

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Side, TileId, Timestamp, ADC_MAX};

pub const SCRIPT_HEADER: &str = "SOLEFULTAP-SCRIPT v1";
pub const DEFAULT_TAIL_US: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid script: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedStep {
    pub onset: Timestamp,
    pub tile: TileId,
    pub side: Side,
    pub peak: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepScript {
    pub steps: Vec<ScriptedStep>,
    pub duration: Timestamp,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl StepScript {
    /// Script with the given steps and a duration covering every pulse.
    pub fn new(steps: Vec<ScriptedStep>, pulse_len_us: u64, noise_sigma: f64, seed: u64) -> Self {
        let duration = default_duration(&steps, pulse_len_us);
        StepScript {
            steps,
            duration,
            noise_sigma,
            seed,
        }
    }

    pub fn validate(&self, baseline: u16, pulse_len_us: u64) -> Result<(), ScriptError> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(ScriptError::Invalid(format!(
                "noise sigma {} must be a non-negative number",
                self.noise_sigma
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 && self.steps[i - 1].onset > s.onset {
                return Err(ScriptError::Invalid(format!(
                    "step {} onset {} precedes previous onset",
                    i + 1,
                    s.onset
                )));
            }
            if s.onset + pulse_len_us > self.duration {
                return Err(ScriptError::Invalid(format!(
                    "step {} pulse ends at {} past duration {}",
                    i + 1,
                    s.onset + pulse_len_us,
                    self.duration
                )));
            }
            if s.peak <= baseline || s.peak as u32 > ADC_MAX {
                return Err(ScriptError::Invalid(format!(
                    "step {} peak {} outside ({baseline}, {ADC_MAX}]",
                    i + 1,
                    s.peak
                )));
            }
        }
        Ok(())
    }
}

fn default_duration(steps: &[ScriptedStep], pulse_len_us: u64) -> Timestamp {
    steps
        .iter()
        .map(|s| s.onset + pulse_len_us)
        .max()
        .unwrap_or(Timestamp::ZERO)
        + DEFAULT_TAIL_US
}

pub fn parse_script(text: &str, pulse_len_us: u64) -> Result<StepScript, ScriptError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == SCRIPT_HEADER => {}
        Some((_, l)) => {
            return Err(ScriptError::Parse {
                line: 1,
                msg: format!("expected header `{SCRIPT_HEADER}`, found `{l}`"),
            })
        }
        None => {
            return Err(ScriptError::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }

    let mut steps = Vec::new();
    let mut sigma = 0.0;
    let mut seed = 0;
    let mut duration = None;
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| ScriptError::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[..] {
            ["sigma", v] => {
                sigma = v.parse().map_err(|_| err(format!("bad sigma `{v}`")))?;
            }
            ["seed", v] => {
                seed = v.parse().map_err(|_| err(format!("bad seed `{v}`")))?;
            }
            ["duration_us", v] => {
                duration = Some(Timestamp(
                    v.parse().map_err(|_| err(format!("bad duration `{v}`")))?,
                ));
            }
            [onset, tile, side, peak] => steps.push(ScriptedStep {
                onset: Timestamp(
                    onset
                        .parse()
                        .map_err(|_| err(format!("bad onset `{onset}`")))?,
                ),
                tile: TileId(
                    tile.parse()
                        .map_err(|_| err(format!("bad tile `{tile}`")))?,
                ),
                side: side
                    .parse()
                    .map_err(|_| err(format!("bad side `{side}`")))?,
                peak: peak
                    .parse()
                    .map_err(|_| err(format!("bad peak `{peak}`")))?,
            }),
            _ => return Err(err(format!("unrecognized line `{line}`"))),
        }
    }

    let duration = duration.unwrap_or_else(|| default_duration(&steps, pulse_len_us));
    Ok(StepScript {
        steps,
        duration,
        noise_sigma: sigma,
        seed,
    })
}

pub fn render_script(script: &StepScript) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCRIPT_HEADER}");
    let _ = writeln!(out, "sigma {}", script.noise_sigma);
    let _ = writeln!(out, "seed {}", script.seed);
    let _ = writeln!(out, "duration_us {}", script.duration);
    for s in &script.steps {
        let _ = writeln!(out, "{} {} {} {}", s.onset, s.tile, s.side, s.peak);
    }
    out
}
