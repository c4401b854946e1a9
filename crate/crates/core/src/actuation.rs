//! Step-to-impact expansion and the virtual solenoid bank that fires the
//! resulting commands.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    solenoid_at, ImpactCommand, ImpactPattern, Side, SolenoidPos, StepEvent, TileId, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Expands a step into the solenoid firings of `pattern`, all on the
/// stepped side. The first impact fires `dispatch_delay_us` after the step.
pub fn expand(e: &StepEvent, pattern: ImpactPattern, dispatch_delay_us: u64) -> Vec<ImpactCommand> {
    let first = e.t + dispatch_delay_us;
    pattern
        .positions()
        .iter()
        .enumerate()
        .map(|(i, &pos)| ImpactCommand {
            tile: e.tile,
            side: e.side,
            pos,
            fire_at: first + i as u64 * pattern.interval_us(),
            origin: e.t,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    fire_at: Timestamp,
    tile: TileId,
    solenoid: u8,
    seq: u64,
}

/// Pending commands ordered by fire time, then tile, then solenoid index.
/// Commands equal on all three pop in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ScheduleQueue {
    heap: BinaryHeap<Reverse<(QueueKey, CommandSlot)>>,
    seq: u64,
}

// BinaryHeap needs Ord on the payload; ordering is fully decided by the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CommandSlot(ImpactCommand);

impl PartialOrd for CommandSlot {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CommandSlot {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl ScheduleQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, cmds: impl IntoIterator<Item = ImpactCommand>) {
        for cmd in cmds {
            let key = QueueKey {
                fire_at: cmd.fire_at,
                tile: cmd.tile,
                solenoid: cmd.solenoid(),
                seq: self.seq,
            };
            self.seq += 1;
            self.heap.push(Reverse((key, CommandSlot(cmd))));
        }
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|Reverse((k, _))| k.fire_at)
    }

    pub fn pop(&mut self) -> Option<ImpactCommand> {
        self.heap.pop().map(|Reverse((_, c))| c.0)
    }

    /// Pops the next command only if it is due at or before `now`.
    pub fn pop_due(&mut self, now: Timestamp) -> Option<ImpactCommand> {
        match self.peek_time() {
            Some(t) if t <= now => self.pop(),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankConfig {
    pub on_time_us: u64,
    pub rearm_us: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            on_time_us: 20_000,
            rearm_us: 10_000,
        }
    }
}

impl BankConfig {
    /// Minimum spacing between two firings of the same solenoid.
    pub fn cycle_us(&self) -> u64 {
        (self.on_time_us + self.rearm_us).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolenoidState {
    Idle,
    Energized { since: Timestamp },
}

/// One logged solenoid firing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Firing {
    pub t: Timestamp,
    pub tile: TileId,
    pub side: Side,
    pub pos: SolenoidPos,
    /// Time of the step that produced this firing.
    pub origin: Timestamp,
}

impl Firing {
    pub fn log_line(&self) -> String {
        format!("{} {} {} {}", self.t, self.tile, self.side, self.pos)
    }
}

/// The four solenoids of one tile.
#[derive(Debug, Clone)]
pub struct SolenoidBank {
    tile: TileId,
    config: BankConfig,
    last_fire: [Option<Timestamp>; 4],
    log: Vec<(u8, Timestamp)>,
}

impl SolenoidBank {
    pub fn new(tile: TileId, config: BankConfig) -> Self {
        SolenoidBank {
            tile,
            config,
            last_fire: [None; 4],
            log: Vec::new(),
        }
    }

    pub fn tile(&self) -> TileId {
        self.tile
    }

    /// Earliest instant at or after `at` at which `index` may fire.
    pub fn earliest_legal(&self, index: u8, at: Timestamp) -> Timestamp {
        match self.last_fire[index as usize] {
            Some(last) => at.max(last + self.config.cycle_us()),
            None => at,
        }
    }

    pub fn state(&self, index: u8, now: Timestamp) -> SolenoidState {
        match self.last_fire[index as usize] {
            Some(since) if now >= since && now.since(since) < self.config.on_time_us => {
                SolenoidState::Energized { since }
            }
            _ => SolenoidState::Idle,
        }
    }

    /// Fires `index` at `at`. Caller must have checked [`Self::earliest_legal`].
    fn fire(&mut self, index: u8, at: Timestamp) {
        debug_assert_eq!(self.earliest_legal(index, at), at);
        self.last_fire[index as usize] = Some(at);
        self.log.push((index, at));
    }

    pub fn actuation_log(&self) -> &[(u8, Timestamp)] {
        &self.log
    }
}

/// Whether firings are stamped with their scheduled time or with the
/// clock reading at which the tick actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clocking {
    #[default]
    Virtual,
    Live,
}

/// Per-node scheduler: a queue plus one solenoid bank per tile.
#[derive(Debug, Clone)]
pub struct Actuator {
    queue: ScheduleQueue,
    banks: BTreeMap<TileId, SolenoidBank>,
    config: BankConfig,
    clocking: Clocking,
    last_now: Timestamp,
    log: Vec<Firing>,
}

impl Actuator {
    pub fn new(config: BankConfig, clocking: Clocking) -> Self {
        Actuator {
            queue: ScheduleQueue::new(),
            banks: BTreeMap::new(),
            config,
            clocking,
            last_now: Timestamp::ZERO,
            log: Vec::new(),
        }
    }

    pub fn enqueue(&mut self, cmds: impl IntoIterator<Item = ImpactCommand>) {
        self.queue.enqueue(cmds);
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn next_due(&self) -> Option<Timestamp> {
        self.queue.peek_time()
    }

    /// Fires every command due at or before `now`. Commands that would
    /// re-fire a solenoid inside its on+rearm window move to the earliest
    /// legal instant; they fire in this tick if that instant is still due.
    pub fn tick(&mut self, now: Timestamp) -> Vec<Firing> {
        let now = now.max(self.last_now);
        self.last_now = now;
        let mut fired = Vec::new();
        while let Some(mut cmd) = self.queue.pop_due(now) {
            let config = self.config;
            let index = cmd.solenoid();
            let bank = self
                .banks
                .entry(cmd.tile)
                .or_insert_with(|| SolenoidBank::new(cmd.tile, config));
            let legal = bank.earliest_legal(index, cmd.fire_at);
            if legal != cmd.fire_at {
                cmd.fire_at = legal;
                self.queue.enqueue([cmd]);
                continue;
            }
            let at = match self.clocking {
                Clocking::Virtual => cmd.fire_at,
                Clocking::Live => bank.earliest_legal(index, now),
            };
            bank.fire(index, at);
            let (side, pos) = solenoid_at(index).expect("index from command");
            let f = Firing {
                t: at,
                tile: cmd.tile,
                side,
                pos,
                origin: cmd.origin,
            };
            self.log.push(f);
            fired.push(f);
        }
        fired
    }

    pub fn log(&self) -> &[Firing] {
        &self.log
    }

    pub fn bank(&self, tile: TileId) -> Option<&SolenoidBank> {
        self.banks.get(&tile)
    }
}

/// Renders firings as `<t_us> <tile> <L|R> <F|B>` lines sorted by time.
pub fn export_log(firings: &[Firing]) -> String {
    let mut sorted: Vec<&Firing> = firings.iter().collect();
    sorted.sort_by_key(|f| f.t);
    let mut out = String::new();
    for f in sorted {
        let _ = writeln!(out, "{}", f.log_line());
    }
    out
}

/// One parsed actuation-log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub t: Timestamp,
    pub tile: TileId,
    pub side: Side,
    pub pos: SolenoidPos,
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| LogError::Syntax {
            line: i + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(' ').collect();
        let [t, tile, side, pos] = fields[..] else {
            return Err(err("expected 4 fields"));
        };
        out.push(LogEntry {
            t: Timestamp(t.parse().map_err(|_| err("bad time"))?),
            tile: TileId(tile.parse().map_err(|_| err("bad tile"))?),
            side: side.parse().map_err(|_| err("bad side"))?,
            pos: pos.parse().map_err(|_| err("bad position"))?,
        });
    }
    Ok(out)
}
