//! Monte Carlo robustness campaigns: many missions, each with its own
//! seed and a freshly sampled fault schedule, reduced to a table of
//! outcome frequencies.

use std::collections::BTreeMap;

use rand::Rng;

use crate::config::MissionConfig;
use crate::error::Result;
use crate::faults::FaultProfile;
use crate::mission::{run_mission, MissionPhase};
use crate::rng::{stream_rng, RngStream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonteCarloSummary {
    pub runs: u32,
    pub complete_count: u32,
    pub fault_count: u32,
    /// Outcome label ("Complete" or "Fault: reason") to frequency.
    pub outcomes: BTreeMap<String, u32>,
}

/// Run `runs` missions. Per-run seeds come from one stream of the
/// master seed; each run's fault schedule is drawn from its own seed,
/// so the whole campaign replays from (config, profile, runs, seed).
pub fn run_monte_carlo(
    base: &MissionConfig,
    profile: &FaultProfile,
    runs: u32,
    master_seed: u64,
) -> Result<MonteCarloSummary> {
    base.validate()?;
    profile.validate()?;
    let mut seed_rng = stream_rng(master_seed, RngStream::MonteCarlo);
    let mut summary = MonteCarloSummary {
        runs,
        complete_count: 0,
        fault_count: 0,
        outcomes: BTreeMap::new(),
    };
    for _ in 0..runs {
        let run_seed: u64 = seed_rng.random();
        let mut config = base.clone();
        config.seed = run_seed;
        let mut fault_rng = stream_rng(run_seed, RngStream::FaultSampling);
        config.fault_schedule = profile.sample(&mut fault_rng);
        let (report, _) = run_mission(&config)?;
        let label = match report.end_phase {
            MissionPhase::Complete => {
                summary.complete_count += 1;
                "Complete".to_string()
            }
            MissionPhase::Fault => {
                summary.fault_count += 1;
                format!(
                    "Fault: {}",
                    report.fault_reason.as_deref().unwrap_or("unspecified")
                )
            }
            other => format!("ended in {other:?}"),
        };
        *summary.outcomes.entry(label).or_insert(0) += 1;
    }
    Ok(summary)
}
