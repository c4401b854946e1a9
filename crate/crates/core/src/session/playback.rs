//! Time-scaled replay of a [`Recording`].

use super::{Recording, SessionError};
use crate::model::{StepEvent, Timestamp};

/// `t_us / speed` rounded half-up, computed exactly.
///
/// Every finite `f64` is `m * 2^e` with integer `m`, so the quotient is the
/// rational `t * 2^-e / m`; it is evaluated in 128-bit integers. Speeds too
/// extreme for that range fall back to floating point.
pub fn scale_time(t_us: u64, speed: f64) -> u64 {
    debug_assert!(speed.is_finite() && speed > 0.0);
    let bits = speed.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mant, mut exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    let tz = mant.trailing_zeros();
    mant >>= tz;
    exp += tz as i32;

    let exact = if exp <= 0 {
        let shift = (-exp) as u32;
        (shift <= 63).then(|| ((t_us as u128) << shift, mant as u128))
    } else {
        let shift = exp as u32;
        (shift <= 74).then(|| (t_us as u128, (mant as u128) << shift))
    };
    match exact {
        Some((num, den)) => ((2 * num + den) / (2 * den)) as u64,
        None => (t_us as f64 / speed + 0.5).floor() as u64,
    }
}

#[derive(Debug, Clone)]
pub struct PlaybackState {
    recording: Recording,
    speed: f64,
    cursor: usize,
    /// Wall or virtual time at which recording time `anchor` plays.
    base: Timestamp,
    anchor_scaled: u64,
}

impl PlaybackState {
    pub fn new(recording: Recording, speed: f64, now: Timestamp) -> Result<Self, SessionError> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(SessionError::SpeedInvalid(speed));
        }
        Ok(PlaybackState {
            recording,
            speed,
            cursor: 0,
            base: now,
            anchor_scaled: 0,
        })
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn recording(&self) -> &Recording {
        &self.recording
    }

    pub fn is_finished(&self) -> bool {
        self.cursor >= self.recording.len()
    }

    /// Scheduled emission time of event `i`.
    pub fn emit_time(&self, i: usize) -> Option<Timestamp> {
        let e = self.recording.events().get(i)?;
        let scaled = scale_time(e.t.0, self.speed);
        Some(self.base + scaled.saturating_sub(self.anchor_scaled))
    }

    pub fn next_due(&self) -> Option<Timestamp> {
        self.emit_time(self.cursor)
    }

    /// Events whose emission time is at or before `now`, restamped with
    /// their emission time.
    pub fn due(&mut self, now: Timestamp) -> Vec<StepEvent> {
        let mut out = Vec::new();
        while let Some(at) = self.emit_time(self.cursor) {
            if at > now {
                break;
            }
            out.push(StepEvent {
                t: at,
                ..self.recording.events()[self.cursor]
            });
            self.cursor += 1;
        }
        out
    }

    /// Moves to the first event at or after recording time `t_us`, which
    /// then plays at `now`.
    pub fn seek(&mut self, t_us: u64, now: Timestamp) {
        self.cursor = self.recording.events().partition_point(|e| e.t.0 < t_us);
        self.base = now;
        self.anchor_scaled = scale_time(t_us, self.speed);
    }
}
