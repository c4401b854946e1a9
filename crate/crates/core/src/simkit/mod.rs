//! Software stand-in for a physical tile: scripted step stimuli, pressure
//! waveform synthesis, an end-to-end scenario runner on a virtual clock and
//! the brute-force reference detector used to check the streaming one.

mod corpus;
mod oracle;
mod report;
mod script;
mod synth;

pub use corpus::{random_script, CorpusSpec};
pub use oracle::oracle_detect;
pub use report::{StepTiming, TimelineReport};
pub use script::{parse_script, render_script, ScriptError, ScriptedStep, StepScript};
pub use synth::{dump_samples, synth, PulseShape, SampleStreams};

use thiserror::Error;

use crate::actuation::{expand, Actuator, BankConfig, Clocking, Firing};
use crate::detection::{DetectError, DetectorParams, TileDetector};
use crate::model::{ImpactPattern, StepEvent, Timestamp, SAMPLE_PERIOD_US};

/// End-to-end latency budget from pulse onset to the first strike.
pub const LATENCY_BUDGET_US: u64 = 30_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Knobs of the simulated rig that sit outside the detector and scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RigConfig {
    pub dispatch_delay_us: u64,
    /// Time from the solenoid driver switching on to the plunger striking.
    /// Only applied when reporting strike times.
    pub mechanical_delay_us: u64,
    pub bank: BankConfig,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            dispatch_delay_us: 0,
            mechanical_delay_us: 10_000,
            bank: BankConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub events: Vec<StepEvent>,
    pub log: Vec<Firing>,
    pub report: TimelineReport,
}

/// Synthesizes the script, detects steps and fires their patterns, all on
/// one virtual clock advancing by the sample period. The clock keeps
/// running past `duration` until every scheduled impact has fired.
pub fn run_scenario(
    script: &StepScript,
    shape: &PulseShape,
    params: &DetectorParams,
    pattern: ImpactPattern,
    rig: &RigConfig,
) -> Result<ScenarioOutput, SimError> {
    let streams = synth(script, shape)?;
    let mut detector = TileDetector::new(*params)?;
    let mut actuator = Actuator::new(rig.bank, Clocking::Virtual);
    let mut events = Vec::new();

    let ticks = streams.ticks();
    let mut tick = 0usize;
    loop {
        let now = Timestamp(tick as u64 * SAMPLE_PERIOD_US);
        if tick < ticks {
            for sample in streams.at_tick(tick) {
                if let Some(e) = detector.push(sample)? {
                    actuator.enqueue(expand(&e, pattern, rig.dispatch_delay_us));
                    events.push(e);
                }
            }
        } else if actuator.pending() == 0 {
            break;
        }
        actuator.tick(now);
        tick += 1;
    }

    let log = actuator.log().to_vec();
    let report = TimelineReport::build(script, shape, &events, &log, pattern, rig);
    Ok(ScenarioOutput {
        events,
        log,
        report,
    })
}
