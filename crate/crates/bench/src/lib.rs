//! Shared fixtures for the benchmarks.

use solefultap::simkit::{random_script, synth, CorpusSpec, PulseShape, StepScript};
use solefultap::SensorSample;

/// A seeded script of `steps` steps at the default noise level.
pub fn corpus(steps: usize, seed: u64) -> StepScript {
    let spec = CorpusSpec {
        steps,
        ..CorpusSpec::default()
    };
    random_script(&spec, &PulseShape::default(), seed)
}

/// Interleaved samples of [`corpus`].
pub fn corpus_samples(steps: usize, seed: u64) -> Vec<SensorSample> {
    synth(&corpus(steps, seed), &PulseShape::default())
        .expect("generated scripts are valid")
        .interleaved()
}
