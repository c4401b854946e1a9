//! Shared domain vocabulary: time, tiles, sides, solenoids and the values
//! that flow between detection, actuation and routing.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensor sample period in microseconds (5 ms).
pub const SAMPLE_PERIOD_US: u64 = 5_000;

/// Spacing between consecutive impacts of one step (90 ms).
pub const IMPACT_INTERVAL_US: u64 = 90_000;

/// Largest value the 10-bit ADC can report.
pub const ADC_MAX: u32 = 1023;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("sample value {0} outside [0, {ADC_MAX}]")]
    OutOfRange(i64),
    #[error("impact count {0} not in {{1, 2, 3}}")]
    BadCount(u8),
    #[error("solenoid index {0} not in [0, 3]")]
    BadSolenoidIndex(u8),
    #[error("unrecognized {what} `{value}`")]
    Parse { what: &'static str, value: String },
}

/// Microseconds since the session epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    /// Elapsed microseconds since `earlier`, saturating at zero.
    pub fn since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;

    fn add(self, us: u64) -> Timestamp {
        Timestamp(self.0 + us)
    }
}

impl Sub<u64> for Timestamp {
    type Output = Timestamp;

    fn sub(self, us: u64) -> Timestamp {
        Timestamp(self.0 - us)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TileId(pub u16);

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Left, Side::Right];

    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Side {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(Side::Left),
            "R" => Ok(Side::Right),
            _ => Err(ModelError::Parse {
                what: "side",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolenoidPos {
    Front,
    Back,
}

impl SolenoidPos {
    pub fn letter(self) -> char {
        match self {
            SolenoidPos::Front => 'F',
            SolenoidPos::Back => 'B',
        }
    }
}

impl fmt::Display for SolenoidPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for SolenoidPos {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" => Ok(SolenoidPos::Front),
            "B" => Ok(SolenoidPos::Back),
            _ => Err(ModelError::Parse {
                what: "solenoid position",
                value: s.to_string(),
            }),
        }
    }
}

/// Maps a (side, position) pair onto the tile's four solenoid slots.
pub fn solenoid_index(side: Side, pos: SolenoidPos) -> u8 {
    match (side, pos) {
        (Side::Left, SolenoidPos::Front) => 0,
        (Side::Left, SolenoidPos::Back) => 1,
        (Side::Right, SolenoidPos::Front) => 2,
        (Side::Right, SolenoidPos::Back) => 3,
    }
}

/// Inverse of [`solenoid_index`].
pub fn solenoid_at(index: u8) -> Result<(Side, SolenoidPos), ModelError> {
    match index {
        0 => Ok((Side::Left, SolenoidPos::Front)),
        1 => Ok((Side::Left, SolenoidPos::Back)),
        2 => Ok((Side::Right, SolenoidPos::Front)),
        3 => Ok((Side::Right, SolenoidPos::Back)),
        _ => Err(ModelError::BadSolenoidIndex(index)),
    }
}

/// Checks a raw ADC reading against the 10-bit range.
pub fn validate_sample(raw: i64) -> Result<u16, ModelError> {
    if (0..=ADC_MAX as i64).contains(&raw) {
        Ok(raw as u16)
    } else {
        Err(ModelError::OutOfRange(raw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorSample {
    pub tile: TileId,
    pub side: Side,
    pub t: Timestamp,
    pub value: u16,
}

impl SensorSample {
    pub fn new(tile: TileId, side: Side, t: Timestamp, raw: i64) -> Result<Self, ModelError> {
        Ok(SensorSample {
            tile,
            side,
            t,
            value: validate_sample(raw)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeltaSample {
    pub tile: TileId,
    pub side: Side,
    pub t: Timestamp,
    pub delta: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepEvent {
    pub tile: TileId,
    pub side: Side,
    pub t: Timestamp,
    /// Peak rise in ADC counts. Recorded, never used to scale actuation.
    pub strength: u32,
}

/// How many impacts a step expands into. Spacing is always
/// [`IMPACT_INTERVAL_US`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImpactPattern {
    count: u8,
}

impl ImpactPattern {
    pub fn new(count: u8) -> Result<Self, ModelError> {
        match count {
            1..=3 => Ok(ImpactPattern { count }),
            _ => Err(ModelError::BadCount(count)),
        }
    }

    pub fn count(self) -> u8 {
        self.count
    }

    pub fn interval_us(self) -> u64 {
        IMPACT_INTERVAL_US
    }

    /// Solenoid positions in firing order.
    pub fn positions(self) -> &'static [SolenoidPos] {
        use SolenoidPos::*;
        match self.count {
            1 => &[Front],
            2 => &[Front, Back],
            _ => &[Front, Back, Front],
        }
    }
}

impl Default for ImpactPattern {
    fn default() -> Self {
        ImpactPattern { count: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImpactCommand {
    pub tile: TileId,
    pub side: Side,
    pub pos: SolenoidPos,
    pub fire_at: Timestamp,
    /// Time of the step this command was expanded from.
    pub origin: Timestamp,
}

impl ImpactCommand {
    pub fn solenoid(&self) -> u8 {
        solenoid_index(self.side, self.pos)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Solo,
    Group,
    Instruction,
    Theater,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Solo, Mode::Group, Mode::Instruction, Mode::Theater];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Solo => "solo",
            Mode::Group => "group",
            Mode::Instruction => "instruction",
            Mode::Theater => "theater",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Parse {
                what: "mode",
                value: s.to_string(),
            })
    }
}
