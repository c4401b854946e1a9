//! Pressure waveform synthesis.
//!
//! Noise contract: each (tile, side) stream draws from its own
//! `ChaCha8Rng::seed_from_u64(seed)` positioned on stream number
//! `tile * 2 + side` (Left = 0, Right = 1). Every sample consumes exactly
//! one `StandardNormal` draw, scaled by `noise_sigma`, whether or not sigma
//! is zero. The noisy value is rounded half away from zero and clamped to
//! the ADC range.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::script::{ScriptError, StepScript};
use crate::model::{SensorSample, Side, TileId, Timestamp, ADC_MAX, SAMPLE_PERIOD_US};

/// Piecewise-linear step transient: rise from baseline to peak, hold, then
/// decay back to baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseShape {
    pub baseline: u16,
    pub rise_us: u64,
    pub hold_us: u64,
    pub decay_us: u64,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape {
            baseline: 40,
            rise_us: 15_000,
            hold_us: 60_000,
            decay_us: 40_000,
        }
    }
}

impl PulseShape {
    pub const DEFAULT_PEAK: u16 = 600;

    pub fn len_us(&self) -> u64 {
        self.rise_us + self.hold_us + self.decay_us
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.rise_us == 0 || self.hold_us == 0 || self.decay_us == 0 {
            return Err(ScriptError::Invalid(
                "pulse rise, hold and decay must be positive".into(),
            ));
        }
        if self.baseline as u32 >= ADC_MAX {
            return Err(ScriptError::Invalid("baseline leaves no headroom".into()));
        }
        Ok(())
    }

    /// Noise-free value of a pulse with `peak` starting at `onset`, or
    /// `None` outside the pulse.
    pub fn value_at(&self, onset: Timestamp, peak: u16, t: Timestamp) -> Option<f64> {
        if t < onset {
            return None;
        }
        let dt = t.since(onset);
        let base = self.baseline as f64;
        let span = peak as f64 - base;
        let hold_end = self.rise_us + self.hold_us;
        if dt < self.rise_us {
            Some(base + span * dt as f64 / self.rise_us as f64)
        } else if dt <= hold_end {
            Some(peak as f64)
        } else if dt <= self.len_us() {
            Some(peak as f64 - span * (dt - hold_end) as f64 / self.decay_us as f64)
        } else {
            None
        }
    }
}

/// Synthesized streams, one per (tile, side), all covering the same ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStreams {
    streams: Vec<((TileId, Side), Vec<SensorSample>)>,
    ticks: usize,
}

impl SampleStreams {
    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn stream(&self, tile: TileId, side: Side) -> Option<&[SensorSample]> {
        self.streams
            .iter()
            .find(|(k, _)| *k == (tile, side))
            .map(|(_, s)| s.as_slice())
    }

    pub fn streams(&self) -> impl Iterator<Item = (TileId, Side, &[SensorSample])> {
        self.streams
            .iter()
            .map(|((t, s), v)| (*t, *s, v.as_slice()))
    }

    /// Samples of every stream at tick `i`, in (tile, side) order.
    pub fn at_tick(&self, i: usize) -> impl Iterator<Item = SensorSample> + '_ {
        self.streams.iter().map(move |(_, v)| v[i])
    }

    /// All samples, time-major.
    pub fn interleaved(&self) -> Vec<SensorSample> {
        (0..self.ticks).flat_map(|i| self.at_tick(i)).collect()
    }
}

pub fn synth(script: &StepScript, shape: &PulseShape) -> Result<SampleStreams, ScriptError> {
    shape.validate()?;
    script.validate(shape.baseline, shape.len_us())?;

    let mut tiles: BTreeSet<TileId> = script.steps.iter().map(|s| s.tile).collect();
    if tiles.is_empty() {
        tiles.insert(TileId(0));
    }
    let ticks = (script.duration.0 / SAMPLE_PERIOD_US) as usize + 1;

    let mut streams = Vec::new();
    for tile in tiles {
        for side in Side::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
            rng.set_stream(tile.0 as u64 * 2 + side as u64);
            let steps: Vec<_> = script
                .steps
                .iter()
                .filter(|s| s.tile == tile && s.side == side)
                .collect();
            let samples = (0..ticks)
                .map(|i| {
                    let t = Timestamp(i as u64 * SAMPLE_PERIOD_US);
                    let clean = steps
                        .iter()
                        .filter_map(|s| shape.value_at(s.onset, s.peak, t))
                        .fold(shape.baseline as f64, f64::max);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let noisy = (clean + script.noise_sigma * z).round();
                    SensorSample {
                        tile,
                        side,
                        t,
                        value: noisy.clamp(0.0, ADC_MAX as f64) as u16,
                    }
                })
                .collect();
            streams.push(((tile, side), samples));
        }
    }
    Ok(SampleStreams { streams, ticks })
}

/// `<t_us> <tile> <side> <value>` per sample, time-major.
pub fn dump_samples(streams: &SampleStreams) -> String {
    let mut out = String::new();
    for s in streams.interleaved() {
        let _ = writeln!(out, "{} {} {} {}", s.t, s.tile, s.side, s.value);
    }
    out
}
