//! Per-step timing summary of a scenario run, computed from the
//! actuation log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{PulseShape, RigConfig, StepScript, LATENCY_BUDGET_US};
use crate::actuation::Firing;
use crate::model::{ImpactPattern, Side, StepEvent, TileId, Timestamp, IMPACT_INTERVAL_US};

pub const REPORT_HEADER: &str = "SOLEFULTAP-REPORT v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTiming {
    pub onset: Timestamp,
    pub tile: TileId,
    pub side: Side,
    pub detected: Option<Timestamp>,
    pub first_impact: Option<Timestamp>,
    /// Gaps between consecutive logged firings of this step.
    pub intervals: Vec<u64>,
}

impl StepTiming {
    /// First logged firing minus pulse onset.
    pub fn latency_us(&self) -> Option<u64> {
        self.first_impact.map(|t| t.since(self.onset))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineReport {
    pub pattern: u8,
    pub mechanical_delay_us: u64,
    pub steps: Vec<StepTiming>,
    /// Detections that match no scripted step.
    pub spurious: Vec<StepEvent>,
}

impl TimelineReport {
    pub fn build(
        script: &StepScript,
        shape: &PulseShape,
        events: &[StepEvent],
        log: &[Firing],
        pattern: ImpactPattern,
        rig: &RigConfig,
    ) -> Self {
        let mut by_origin: BTreeMap<(TileId, Side, Timestamp), Vec<Timestamp>> = BTreeMap::new();
        for f in log {
            by_origin
                .entry((f.tile, f.side, f.origin))
                .or_default()
                .push(f.t);
        }

        let mut used = vec![false; events.len()];
        let mut steps = Vec::with_capacity(script.steps.len());
        for s in &script.steps {
            let window_end = s.onset + shape.len_us();
            let hit = events.iter().enumerate().position(|(i, e)| {
                !used[i]
                    && e.tile == s.tile
                    && e.side == s.side
                    && e.t >= s.onset
                    && e.t <= window_end
            });
            let mut timing = StepTiming {
                onset: s.onset,
                tile: s.tile,
                side: s.side,
                detected: None,
                first_impact: None,
                intervals: Vec::new(),
            };
            if let Some(i) = hit {
                used[i] = true;
                let e = &events[i];
                timing.detected = Some(e.t);
                if let Some(times) = by_origin.get(&(e.tile, e.side, e.t)) {
                    timing.first_impact = times.first().copied();
                    timing.intervals = times.windows(2).map(|w| w[1].since(w[0])).collect();
                }
            }
            steps.push(timing);
        }
        let spurious = events
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(e, _)| *e)
            .collect();

        TimelineReport {
            pattern: pattern.count(),
            mechanical_delay_us: rig.mechanical_delay_us,
            steps,
            spurious,
        }
    }

    pub fn detections(&self) -> usize {
        self.steps.iter().filter(|s| s.detected.is_some()).count()
    }

    pub fn missed(&self) -> usize {
        self.steps.len() - self.detections()
    }

    pub fn max_latency_us(&self) -> Option<u64> {
        self.steps.iter().filter_map(StepTiming::latency_us).max()
    }

    /// Latency including the mechanical delay of the plunger.
    pub fn max_strike_latency_us(&self) -> Option<u64> {
        self.max_latency_us().map(|l| l + self.mechanical_delay_us)
    }

    pub fn interval_range(&self) -> Option<(u64, u64)> {
        let all = self.steps.iter().flat_map(|s| s.intervals.iter().copied());
        let min = all.clone().min()?;
        Some((min, all.max()?))
    }

    /// Every breached timing or detection invariant, as readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.steps {
            let at = format!("step at {} tile {} side {}", s.onset, s.tile, s.side);
            match (s.detected, s.latency_us()) {
                (None, _) => out.push(format!("{at}: not detected")),
                (Some(_), None) => out.push(format!("{at}: no impact fired")),
                (Some(_), Some(l)) if l > LATENCY_BUDGET_US => out.push(format!(
                    "{at}: latency {l} us exceeds {LATENCY_BUDGET_US} us"
                )),
                _ => {}
            }
            if s.detected.is_some() && s.intervals.len() + 1 != self.pattern as usize {
                out.push(format!(
                    "{at}: {} firings, expected {}",
                    s.intervals.len() + 1,
                    self.pattern
                ));
            }
            for &gap in &s.intervals {
                if gap != IMPACT_INTERVAL_US {
                    out.push(format!("{at}: impact interval {gap} us"));
                }
            }
        }
        for e in &self.spurious {
            out.push(format!(
                "spurious detection at {} tile {} side {}",
                e.t, e.tile, e.side
            ));
        }
        out
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        let _ = writeln!(out, "pattern {}", self.pattern);
        let _ = writeln!(out, "mechanical_delay_us {}", self.mechanical_delay_us);
        let _ = writeln!(
            out,
            "# onset tile side detected first_impact latency_us intervals_us"
        );
        for s in &self.steps {
            let intervals = if s.intervals.is_empty() {
                "-".to_string()
            } else {
                s.intervals
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "step {} {} {} {} {} {} {}",
                s.onset,
                s.tile,
                s.side,
                opt(s.detected.map(|t| t.0)),
                opt(s.first_impact.map(|t| t.0)),
                opt(s.latency_us()),
                intervals
            );
        }
        for e in &self.spurious {
            let _ = writeln!(out, "spurious {} {} {}", e.t, e.tile, e.side);
        }
        let range = self.interval_range();
        let _ = writeln!(out, "steps {}", self.steps.len());
        let _ = writeln!(out, "detections {}", self.detections());
        let _ = writeln!(out, "missed {}", self.missed());
        let _ = writeln!(out, "spurious_count {}", self.spurious.len());
        let _ = writeln!(out, "max_latency_us {}", opt(self.max_latency_us()));
        let _ = writeln!(
            out,
            "max_strike_latency_us {}",
            opt(self.max_strike_latency_us())
        );
        let _ = writeln!(out, "interval_min_us {}", opt(range.map(|r| r.0)));
        let _ = writeln!(out, "interval_max_us {}", opt(range.map(|r| r.1)));
        let status = if self.violations().is_empty() {
            "ok"
        } else {
            "violated"
        };
        let _ = writeln!(out, "status {status}");
        out
    }
}
