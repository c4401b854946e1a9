//! Offline reference for the streaming detector. Builds the full delta and
//! filtered series as arrays and recomputes every window's statistics from
//! scratch, then extracts rising edges and applies the refractory rule in a
//! separate pass. O(n * lag); meant for verification only.

use std::collections::BTreeMap;

use crate::detection::DetectorParams;
use crate::model::{SensorSample, Side, StepEvent, TileId};

/// Onsets of every stream in `samples`, ordered by (t, tile, side).
/// Streams must be sorted and period-spaced.
pub fn oracle_detect(samples: &[SensorSample], params: &DetectorParams) -> Vec<StepEvent> {
    let mut by_stream: BTreeMap<(TileId, Side), Vec<SensorSample>> = BTreeMap::new();
    for s in samples {
        by_stream.entry((s.tile, s.side)).or_default().push(*s);
    }
    let mut out: Vec<StepEvent> = by_stream
        .values()
        .flat_map(|stream| single_stream(stream, params))
        .collect();
    out.sort_by_key(|e| (e.t, e.tile, e.side));
    out
}

fn single_stream(stream: &[SensorSample], p: &DetectorParams) -> Vec<StepEvent> {
    if stream.len() < 2 {
        return Vec::new();
    }
    let deltas: Vec<i32> = stream
        .windows(2)
        .map(|w| w[1].value as i32 - w[0].value as i32)
        .collect();
    let n = deltas.len();
    let mut filtered = vec![0.0f64; n];
    let mut signal = vec![false; n];

    for j in 0..n {
        let x = deltas[j] as f64;
        if j < p.lag {
            filtered[j] = x;
            continue;
        }
        let window = &filtered[j - p.lag..j];
        let mut sum = 0.0;
        for v in window {
            sum += v;
        }
        let mean = sum / p.lag as f64;
        let mut sq = 0.0;
        for v in window {
            sq += (v - mean) * (v - mean);
        }
        let std = (sq / p.lag as f64).sqrt();

        signal[j] = deltas[j] > 0 && deltas[j] >= p.min_delta && x - mean > p.threshold * std;
        filtered[j] = if signal[j] {
            p.influence * x + (1.0 - p.influence) * filtered[j - 1]
        } else {
            x
        };
    }

    let rising: Vec<usize> = (0..n)
        .filter(|&j| signal[j] && (j == 0 || !signal[j - 1]))
        .collect();

    let mut events: Vec<StepEvent> = Vec::new();
    for j in rising {
        let s = &stream[j + 1];
        if let Some(last) = events.last() {
            if s.t.0 - last.t.0 < p.refractory_us {
                continue;
            }
        }
        events.push(StepEvent {
            tile: s.tile,
            side: s.side,
            t: s.t,
            strength: deltas[j] as u32,
        });
    }
    events
}
