//! Step detection: sample differencing followed by an online z-score peak
//! detector, one detector per (tile, side) stream.
//!
//! Each delta is compared against the mean and standard deviation of the
//! previous `lag` *filtered* deltas. A delta signals when it is positive,
//! exceeds the window mean by more than `threshold` standard deviations and
//! reaches `min_delta`. Signaling deltas enter the window damped by
//! `influence`; the first delta of each signaling run emits a
//! [`StepEvent`] unless it falls inside the refractory window of the
//! previous emission.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::model::{
    DeltaSample, SensorSample, Side, StepEvent, TileId, Timestamp, SAMPLE_PERIOD_US,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("samples belong to different streams ({0}/{1} vs {2}/{3})")]
    StreamMismatch(TileId, Side, TileId, Side),
    #[error("sample spacing {got} us on tile {tile} side {side}, expected {SAMPLE_PERIOD_US} us")]
    Gap { tile: TileId, side: Side, got: i64 },
    #[error("invalid detector parameters: {0}")]
    Params(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub lag: usize,
    pub threshold: f64,
    pub influence: f64,
    pub refractory_us: u64,
    pub min_delta: i32,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            lag: 8,
            threshold: 4.0,
            influence: 0.25,
            refractory_us: 80_000,
            min_delta: 30,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.lag < 2 {
            return Err(DetectError::Params("lag must be at least 2"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(DetectError::Params("threshold must be a positive number"));
        }
        if !(0.0..=1.0).contains(&self.influence) {
            return Err(DetectError::Params("influence must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Difference of two consecutive samples of one stream.
pub fn delta(prev: &SensorSample, cur: &SensorSample) -> Result<DeltaSample, DetectError> {
    if prev.tile != cur.tile || prev.side != cur.side {
        return Err(DetectError::StreamMismatch(
            prev.tile, prev.side, cur.tile, cur.side,
        ));
    }
    let spacing = cur.t.0 as i64 - prev.t.0 as i64;
    if spacing != SAMPLE_PERIOD_US as i64 {
        return Err(DetectError::Gap {
            tile: cur.tile,
            side: cur.side,
            got: spacing,
        });
    }
    Ok(DeltaSample {
        tile: cur.tile,
        side: cur.side,
        t: cur.t,
        delta: cur.value as i32 - prev.value as i32,
    })
}

/// Population mean and standard deviation of a window, summed in order.
pub(crate) fn window_stats<'a>(window: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64) {
    let n = window.clone().count() as f64;
    let mean = window.clone().sum::<f64>() / n;
    let var = window.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Streaming state of the z-score detector for one stream.
#[derive(Debug, Clone, Default)]
pub struct DetectorState {
    filtered: VecDeque<f64>,
    mean: f64,
    std: f64,
    last_fire: Option<Timestamp>,
    in_peak: bool,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_warm(&self, p: &DetectorParams) -> bool {
        self.filtered.len() >= p.lag
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn in_peak(&self) -> bool {
        self.in_peak
    }

    pub fn last_fire(&self) -> Option<Timestamp> {
        self.last_fire
    }

    /// Feeds one delta. Returns the step emitted by this delta, if any.
    pub fn step(&mut self, d: &DeltaSample, p: &DetectorParams) -> Option<StepEvent> {
        let x = d.delta as f64;
        if self.filtered.len() < p.lag {
            self.filtered.push_back(x);
            return None;
        }

        let (mean, std) = window_stats(self.filtered.iter());
        self.mean = mean;
        self.std = std;

        let signal = d.delta > 0 && d.delta >= p.min_delta && x - mean > p.threshold * std;
        let mut event = None;
        if signal {
            if !self.in_peak {
                let clear = self
                    .last_fire
                    .is_none_or(|last| d.t.since(last) >= p.refractory_us);
                if clear {
                    self.last_fire = Some(d.t);
                    event = Some(StepEvent {
                        tile: d.tile,
                        side: d.side,
                        t: d.t,
                        strength: d.delta as u32,
                    });
                }
            }
            let prev = *self.filtered.back().expect("window is warm");
            self.push(p.influence * x + (1.0 - p.influence) * prev, p.lag);
        } else {
            self.push(x, p.lag);
        }
        self.in_peak = signal;
        event
    }

    fn push(&mut self, v: f64, lag: usize) {
        self.filtered.push_back(v);
        while self.filtered.len() > lag {
            self.filtered.pop_front();
        }
    }
}

/// Detector for a single (tile, side) stream, fed raw samples.
#[derive(Debug, Clone)]
pub struct StreamDetector {
    params: DetectorParams,
    prev: Option<SensorSample>,
    state: DetectorState,
}

impl StreamDetector {
    pub fn new(params: DetectorParams) -> Self {
        StreamDetector {
            params,
            prev: None,
            state: DetectorState::new(),
        }
    }

    pub fn push(&mut self, sample: SensorSample) -> Result<Option<StepEvent>, DetectError> {
        let out = match &self.prev {
            Some(prev) => {
                let d = delta(prev, &sample)?;
                self.state.step(&d, &self.params)
            }
            None => None,
        };
        self.prev = Some(sample);
        Ok(out)
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }
}

/// Routes interleaved samples to one [`StreamDetector`] per stream.
#[derive(Debug, Clone)]
pub struct TileDetector {
    params: DetectorParams,
    streams: BTreeMap<(TileId, Side), StreamDetector>,
}

impl TileDetector {
    pub fn new(params: DetectorParams) -> Result<Self, DetectError> {
        params.validate()?;
        Ok(TileDetector {
            params,
            streams: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn push(&mut self, sample: SensorSample) -> Result<Option<StepEvent>, DetectError> {
        let params = self.params;
        self.streams
            .entry((sample.tile, sample.side))
            .or_insert_with(|| StreamDetector::new(params))
            .push(sample)
    }
}

/// Runs the detector over complete streams. Samples of different streams
/// may be interleaved in any order; within a stream they must be sorted
/// and period-spaced. Output is ordered by (t, tile, side).
pub fn detect_stream(
    samples: &[SensorSample],
    params: &DetectorParams,
) -> Result<Vec<StepEvent>, DetectError> {
    let mut det = TileDetector::new(*params)?;
    let mut events = Vec::new();
    for s in samples {
        if let Some(e) = det.push(*s)? {
            events.push(e);
        }
    }
    events.sort_by_key(|e| (e.t, e.tile, e.side));
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(side: Side, values: &[i64]) -> Vec<SensorSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                SensorSample::new(TileId(0), side, Timestamp(i as u64 * SAMPLE_PERIOD_US), v)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn delta_arithmetic() {
        let s = stream(Side::Left, &[512, 512, 100, 160, 700, 640]);
        assert_eq!(delta(&s[0], &s[1]).unwrap().delta, 0);
        assert_eq!(delta(&s[2], &s[3]).unwrap().delta, 60);
        let d = delta(&s[4], &s[5]).unwrap();
        assert_eq!(d.delta, -60);
        assert_eq!(d.t, s[5].t);
    }

    #[test]
    fn delta_rejects_mixed_streams_and_gaps() {
        let l = stream(Side::Left, &[1, 2]);
        let r = stream(Side::Right, &[1, 2]);
        assert!(matches!(
            delta(&l[0], &r[1]),
            Err(DetectError::StreamMismatch(..))
        ));
        assert!(matches!(
            delta(&l[1], &l[0]),
            Err(DetectError::Gap { got: -5000, .. })
        ));
        let mut far = l[1];
        far.t = Timestamp(15_000);
        assert!(matches!(delta(&l[0], &far), Err(DetectError::Gap { .. })));
    }

    #[test]
    fn flat_stream_is_silent() {
        let s = stream(Side::Left, &[300; 200]);
        assert!(detect_stream(&s, &DetectorParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_stream() {
        assert!(detect_stream(&[], &DetectorParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn warm_up_absorbs_without_firing() {
        // A jump inside the first `lag` deltas never fires.
        let mut v = vec![40; 4];
        v.extend([600; 40]);
        let s = stream(Side::Left, &v);
        assert!(detect_stream(&s, &DetectorParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn one_event_per_signaling_run() {
        // Staircase of +100 deltas after a quiet start: the run keeps
        // signaling for several samples but emits once.
        let mut v = vec![40; 20];
        for i in 1..=6 {
            v.push(40 + 100 * i);
        }
        v.extend([640; 10]);
        let s = stream(Side::Right, &v);
        let p = DetectorParams {
            refractory_us: 0,
            ..Default::default()
        };
        let ev = detect_stream(&s, &p).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].t, Timestamp(20 * SAMPLE_PERIOD_US));
        assert_eq!(ev[0].strength, 100);
        assert_eq!(ev[0].side, Side::Right);
    }

    #[test]
    fn negative_edges_never_fire() {
        let mut v = vec![900; 20];
        v.extend([100; 20]);
        let s = stream(Side::Left, &v);
        assert!(detect_stream(&s, &DetectorParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn min_delta_floor() {
        // Zero variance baseline, a +10 bump is above mean but below floor.
        let mut v = vec![100; 20];
        v.extend([110; 5]);
        let s = stream(Side::Left, &v);
        assert!(detect_stream(&s, &DetectorParams::default())
            .unwrap()
            .is_empty());
        let p = DetectorParams {
            min_delta: 5,
            ..Default::default()
        };
        assert_eq!(detect_stream(&s, &p).unwrap().len(), 1);
    }

    #[test]
    fn refractory_suppresses_close_runs() {
        // Two isolated +200 jumps 10 samples (50 ms) apart.
        let mut v = vec![40; 20];
        v.extend([240; 10]);
        v.extend([440; 20]);
        let s = stream(Side::Left, &v);
        let ev = detect_stream(&s, &DetectorParams::default()).unwrap();
        assert_eq!(ev.len(), 1);
        let p = DetectorParams {
            refractory_us: 40_000,
            ..Default::default()
        };
        assert_eq!(detect_stream(&s, &p).unwrap().len(), 2);
    }

    #[test]
    fn params_validation() {
        let bad = [
            DetectorParams {
                lag: 1,
                ..Default::default()
            },
            DetectorParams {
                threshold: 0.0,
                ..Default::default()
            },
            DetectorParams {
                influence: 1.5,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
        assert!(DetectorParams::default().validate().is_ok());
    }
}
