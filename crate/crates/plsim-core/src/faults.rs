//! Fault injection: timed windows during which a named device
//! misbehaves, plus a sampling profile for randomized robustness runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hal::Actuator;
use crate::rng::SimRng;

/// What breaks. Stalls name the affected drive motor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    UltrasonicDropout,
    MotorStall(Actuator),
    FilterClog,
}

/// One fault window: `fault` is active for t in [time_s, time_s + duration_s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultWindow {
    pub time_s: f64,
    pub fault: FaultKind,
    pub duration_s: f64,
}

impl FaultWindow {
    pub fn active_at(&self, t_s: f64) -> bool {
        t_s >= self.time_s && t_s < self.time_s + self.duration_s
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_s < 0.0 {
            return Err(Error::Config(format!(
                "fault window start cannot be negative, got {}",
                self.time_s
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "fault window duration must be positive, got {}",
                self.duration_s
            )));
        }
        Ok(())
    }
}

pub fn validate_schedule(schedule: &[FaultWindow]) -> Result<()> {
    for window in schedule {
        window.validate()?;
    }
    Ok(())
}

/// Device flags implied by a schedule at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveFaults {
    pub ultrasonic_dropout: bool,
    pub stalled: [bool; 4],
    pub filter_clog: bool,
}

impl ActiveFaults {
    pub fn at(schedule: &[FaultWindow], t_s: f64) -> ActiveFaults {
        let mut active = ActiveFaults::default();
        for window in schedule {
            if !window.active_at(t_s) {
                continue;
            }
            match window.fault {
                FaultKind::UltrasonicDropout => active.ultrasonic_dropout = true,
                FaultKind::MotorStall(actuator) => active.stalled[actuator.index()] = true,
                FaultKind::FilterClog => active.filter_clog = true,
            }
        }
        active
    }
}

/// Sampling profile for randomized fault campaigns: how many windows to
/// draw and from what ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultProfile {
    pub schema_version: u32,
    pub min_faults: u32,
    pub max_faults: u32,
    pub kinds: Vec<FaultKind>,
    pub time_range_s: [f64; 2],
    pub duration_range_s: [f64; 2],
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile {
            schema_version: 1,
            min_faults: 0,
            max_faults: 3,
            kinds: vec![
                FaultKind::UltrasonicDropout,
                FaultKind::FilterClog,
                FaultKind::MotorStall(Actuator::Pulley),
                FaultKind::MotorStall(Actuator::Drill),
                FaultKind::MotorStall(Actuator::Vacuum),
                FaultKind::MotorStall(Actuator::Bin),
            ],
            time_range_s: [0.0, 200.0],
            duration_range_s: [1.0, 30.0],
        }
    }
}

impl FaultProfile {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported fault profile schema_version {}",
                self.schema_version
            )));
        }
        if self.min_faults > self.max_faults {
            return Err(Error::Config(format!(
                "min_faults {} exceeds max_faults {}",
                self.min_faults, self.max_faults
            )));
        }
        if self.max_faults > 0 && self.kinds.is_empty() {
            return Err(Error::Config("fault profile has no kinds to draw from".into()));
        }
        if !(0.0 <= self.time_range_s[0] && self.time_range_s[0] <= self.time_range_s[1]) {
            return Err(Error::Config(format!(
                "bad fault time range [{}, {}]",
                self.time_range_s[0], self.time_range_s[1]
            )));
        }
        if !(0.0 < self.duration_range_s[0] && self.duration_range_s[0] <= self.duration_range_s[1])
        {
            return Err(Error::Config(format!(
                "bad fault duration range [{}, {}]",
                self.duration_range_s[0], self.duration_range_s[1]
            )));
        }
        Ok(())
    }

    /// Draw one schedule. Fixed draw order (count, then kind/time/duration
    /// per window) keeps schedules reproducible under a fixed stream.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<FaultWindow> {
        let span = self.max_faults - self.min_faults;
        let extra = if span == 0 {
            0
        } else {
            rand::Rng::random_range(rng, 0..=span)
        };
        let count = self.min_faults + extra;
        let mut schedule = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let kind_index = rand::Rng::random_range(rng, 0..self.kinds.len());
            let u_time: f64 = rand::Rng::random(rng);
            let u_dur: f64 = rand::Rng::random(rng);
            schedule.push(FaultWindow {
                time_s: self.time_range_s[0]
                    + (self.time_range_s[1] - self.time_range_s[0]) * u_time,
                fault: self.kinds[kind_index],
                duration_s: self.duration_range_s[0]
                    + (self.duration_range_s[1] - self.duration_range_s[0]) * u_dur,
            });
        }
        schedule.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        schedule
    }
}
