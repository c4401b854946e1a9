use proptest::prelude::*;

use solefultap::detection::{detect_stream, DetectorParams};
use solefultap::simkit::{oracle_detect, random_script, synth, CorpusSpec, PulseShape};
use solefultap::{SensorSample, Side, StepEvent, TileId, Timestamp, SAMPLE_PERIOD_US};

fn params() -> impl Strategy<Value = DetectorParams> {
    (2usize..16, 0.5f64..8.0, 0.0f64..=1.0, 0u64..40, 0i32..80).prop_map(
        |(lag, threshold, influence, refr, min_delta)| DetectorParams {
            lag,
            threshold,
            influence,
            refractory_us: refr * SAMPLE_PERIOD_US,
            min_delta,
        },
    )
}

/// Pulse scripts with adversarial spacing, peaks and noise.
fn scripted(seed: u64, sigma: f64, tiles: u16) -> Vec<SensorSample> {
    let shape = PulseShape::default();
    let spec = CorpusSpec {
        steps: 12,
        tiles,
        gap_us: (10_000, 400_000),
        peak: (45, 1023),
        sigma,
        lead_in_us: 0,
    };
    synth(&random_script(&spec, &shape, seed), &shape)
        .unwrap()
        .interleaved()
}

/// Arbitrary bounded values on both sides of tile 0.
fn raw_streams() -> impl Strategy<Value = Vec<SensorSample>> {
    (
        prop::collection::vec(0i64..=1023, 0..400),
        prop::collection::vec(0i64..=1023, 0..400),
    )
        .prop_map(|(l, r)| {
            let mut out = Vec::new();
            for (side, vals) in [(Side::Left, l), (Side::Right, r)] {
                for (i, v) in vals.into_iter().enumerate() {
                    let t = Timestamp(i as u64 * SAMPLE_PERIOD_US);
                    out.push(SensorSample::new(TileId(0), side, t, v).unwrap());
                }
            }
            out.sort_by_key(|s| (s.t, s.side));
            out
        })
}

fn only(events: &[StepEvent], side: Side) -> Vec<StepEvent> {
    events.iter().filter(|e| e.side == side).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle_on_pulse_scripts(seed in any::<u64>(), sigma in 0.0f64..40.0, p in params()) {
        let samples = scripted(seed, sigma, 2);
        prop_assert_eq!(detect_stream(&samples, &p).unwrap(), oracle_detect(&samples, &p));
    }

    #[test]
    fn matches_oracle_on_raw_values(samples in raw_streams(), p in params()) {
        prop_assert_eq!(detect_stream(&samples, &p).unwrap(), oracle_detect(&samples, &p));
    }

    #[test]
    fn deterministic(seed in any::<u64>(), p in params()) {
        let samples = scripted(seed, 6.0, 1);
        prop_assert_eq!(detect_stream(&samples, &p).unwrap(), detect_stream(&samples, &p).unwrap());
    }

    #[test]
    fn sides_are_independent(seed in any::<u64>(), p in params()) {
        let samples = scripted(seed, 4.0, 1);
        let both = detect_stream(&samples, &p).unwrap();
        for side in Side::ALL {
            let alone: Vec<SensorSample> = samples.iter().filter(|s| s.side == side).copied().collect();
            prop_assert_eq!(detect_stream(&alone, &p).unwrap(), only(&both, side));
        }
        // Feeding one side completely before the other changes nothing.
        let mut separated = samples.clone();
        separated.sort_by_key(|s| (s.side, s.t));
        prop_assert_eq!(detect_stream(&separated, &p).unwrap(), both);
    }

    #[test]
    fn refractory_is_respected(seed in any::<u64>(), sigma in 0.0f64..40.0, p in params()) {
        let events = detect_stream(&scripted(seed, sigma, 2), &p).unwrap();
        for tile in [TileId(0), TileId(1)] {
            for side in Side::ALL {
                let ts: Vec<u64> = events
                    .iter()
                    .filter(|e| e.tile == tile && e.side == side)
                    .map(|e| e.t.0)
                    .collect();
                for w in ts.windows(2) {
                    prop_assert!(w[1] - w[0] >= p.refractory_us);
                }
            }
        }
        prop_assert!(events.iter().all(|e| e.strength > 0));
    }

    #[test]
    fn raising_threshold_never_adds_events(seed in any::<u64>(), sigma in 0.0f64..20.0, p in params(), bump in 0.0f64..4.0) {
        let samples = scripted(seed, sigma, 1);
        let high = DetectorParams { threshold: p.threshold + bump, ..p };
        prop_assert!(
            detect_stream(&samples, &high).unwrap().len() <= detect_stream(&samples, &p).unwrap().len()
        );
    }

    #[test]
    fn raising_threshold_never_adds_events_on_raw_values(samples in raw_streams(), p in params(), bump in 0.0f64..4.0) {
        let high = DetectorParams { threshold: p.threshold + bump, ..p };
        prop_assert!(
            detect_stream(&samples, &high).unwrap().len() <= detect_stream(&samples, &p).unwrap().len()
        );
    }
}

#[test]
fn flat_stream_never_fires() {
    let samples: Vec<SensorSample> = (0..500)
        .map(|i| {
            SensorSample::new(TileId(0), Side::Left, Timestamp(i * SAMPLE_PERIOD_US), 300).unwrap()
        })
        .collect();
    for lag in [2, 8, 30] {
        let p = DetectorParams {
            lag,
            min_delta: 0,
            ..Default::default()
        };
        assert!(detect_stream(&samples, &p).unwrap().is_empty());
        assert!(oracle_detect(&samples, &p).is_empty());
    }
}

#[test]
fn default_pulse_gives_one_onset_on_its_side() {
    let shape = PulseShape::default();
    let text = "SOLEFULTAP-SCRIPT v1\nsigma 0\n100000 0 L 600\n";
    let script = solefultap::simkit::parse_script(text, shape.len_us()).unwrap();
    let samples = synth(&script, &shape).unwrap().interleaved();
    let p = DetectorParams::default();
    let events = detect_stream(&samples, &p).unwrap();
    assert_eq!(events, oracle_detect(&samples, &p));
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].side, Side::Left);
    assert_eq!(events[0].t, Timestamp(105_000));
}

#[test]
fn baseline_noise_is_quiet_for_a_minute() {
    let shape = PulseShape::default();
    for seed in 0..20 {
        let text = format!("SOLEFULTAP-SCRIPT v1\nsigma 3\nseed {seed}\nduration_us 60000000\n");
        let script = solefultap::simkit::parse_script(&text, shape.len_us()).unwrap();
        let samples = synth(&script, &shape).unwrap().interleaved();
        assert!(samples.len() >= 2 * 12_000);
        assert!(
            detect_stream(&samples, &DetectorParams::default())
                .unwrap()
                .is_empty(),
            "seed {seed}"
        );
    }
}
