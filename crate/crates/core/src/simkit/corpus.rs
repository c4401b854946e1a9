//! Seeded random step scripts for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PulseShape, ScriptedStep, StepScript};
use crate::model::{Side, TileId, Timestamp, SAMPLE_PERIOD_US};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub steps: usize,
    pub tiles: u16,
    /// Range of the gap between consecutive onsets (any side).
    pub gap_us: (u64, u64),
    pub peak: (u16, u16),
    pub sigma: f64,
    /// Quiet time before the first onset; must cover detector warm-up.
    pub lead_in_us: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            steps: 20,
            tiles: 1,
            gap_us: (200_000, 600_000),
            peak: (400, 1023),
            sigma: 3.0,
            lead_in_us: 100_000,
        }
    }
}

/// Sample-aligned random script. Identical `(spec, seed)` pairs give
/// identical scripts; the script's noise seed is `seed` as well.
pub fn random_script(spec: &CorpusSpec, shape: &PulseShape, seed: u64) -> StepScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let align = |t: u64| t / SAMPLE_PERIOD_US * SAMPLE_PERIOD_US;
    let mut t = align(spec.lead_in_us);
    let mut steps = Vec::with_capacity(spec.steps);
    for i in 0..spec.steps {
        if i > 0 {
            t += align(rng.random_range(spec.gap_us.0..=spec.gap_us.1));
        }
        steps.push(ScriptedStep {
            onset: Timestamp(t),
            tile: TileId(rng.random_range(0..spec.tiles.max(1))),
            side: if rng.random_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            },
            peak: rng.random_range(spec.peak.0..=spec.peak.1),
        });
    }
    StepScript::new(steps, shape.len_us(), spec.sigma, seed)
}
