//! Floor-tile node engine for audio-haptic step augmentation.
//!
//! A node watches two pressure streams per tile, turns pressure rises into
//! [`StepEvent`]s, expands each step into one to three solenoid impacts
//! spaced 90 ms apart, and routes steps between nodes according to the
//! active [`Mode`].

pub mod actuation;
pub mod detection;
pub mod live;
pub mod model;
pub mod netproto;
pub mod session;
pub mod simkit;

pub use actuation::{expand, Actuator, BankConfig, Clocking, Firing, ScheduleQueue, SolenoidBank};
pub use detection::{delta, detect_stream, DetectorParams, DetectorState, TileDetector};
pub use model::{
    solenoid_index, validate_sample, DeltaSample, ImpactCommand, ImpactPattern, Mode, SensorSample,
    Side, SolenoidPos, StepEvent, TileId, Timestamp, IMPACT_INTERVAL_US, SAMPLE_PERIOD_US,
};
pub use session::{Node, NodeConfig, NodeId, NodeRole, Recording};
