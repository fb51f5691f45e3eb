//! Command line front end: run missions, summarize telemetry streams,
//! sweep fault profiles, and check configuration files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plsim_core::config::{load_json, MissionConfig};
use plsim_core::faults::FaultProfile;
use plsim_core::mission::{run_mission, MissionPhase};
use plsim_core::montecarlo::run_monte_carlo;
use plsim_core::telemetry::{aggregate_report, decode_stream, encode_event};
use plsim_core::Error;

#[derive(Parser)]
#[command(name = "plsim", version, about = "Soil assay module simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and emit its telemetry stream as NDJSON.
    Run {
        /// Mission config JSON. Omitted means the bundled ten-site scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Telemetry output path. Omitted means stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a telemetry stream and verify its integrity.
    Report {
        /// Telemetry NDJSON path.
        stream: PathBuf,
    },
    /// Run many seeded missions under a fault profile and tally outcomes.
    Montecarlo {
        /// Mission config JSON. Omitted means the bundled ten-site scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of missions.
        #[arg(long, default_value_t = 100)]
        runs: u32,
        /// Fault profile JSON. Omitted means the stock profile.
        #[arg(long)]
        fault_profile: Option<PathBuf>,
        /// Seed for the per-run seed sequence.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Check a mission config file and exit.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

// Contract with callers: 0 success or Complete, 2 mission ended in
// Fault, 3 configuration error, 4 telemetry integrity error.
const EXIT_FAULT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Argument(_) => EXIT_CONFIG,
        Error::Parse { .. } | Error::Integrity(_) | Error::Encode(_) => EXIT_INTEGRITY,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Clap's stock exit code for usage errors is 2, which this tool
    // reserves for faulted missions. Route usage errors to 3 instead.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { config, seed, out } => run(config.as_deref(), seed, out.as_deref()),
        Command::Report { stream } => report(&stream),
        Command::Montecarlo {
            config,
            runs,
            fault_profile,
            seed,
        } => montecarlo(config.as_deref(), runs, fault_profile.as_deref(), seed),
        Command::Validate { config } => validate(&config),
    }
}

fn load_mission(path: Option<&Path>) -> Result<MissionConfig, Error> {
    match path {
        Some(p) => MissionConfig::load(p),
        None => Ok(MissionConfig::default()),
    }
}

fn run(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<u8, Error> {
    let mut mission_config = load_mission(config)?;
    if let Some(seed) = seed {
        mission_config.seed = seed;
    }
    let (report, events) = run_mission(&mission_config)?;

    let mut text = String::with_capacity(events.len() * 96);
    for event in &events {
        text.push_str(&encode_event(event)?);
    }
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }

    // The stream owns stdout; the one-line summary goes to stderr.
    eprintln!(
        "mission {:?}: {} sites, {} protein positive, {} carbohydrate positive, \
         {} indeterminate, {:.2} s simulated",
        report.end_phase,
        report.sites_visited,
        report.protein_positive_count,
        report.carb_positive_count,
        report.indeterminate_count,
        report.total_sim_time_s
    );
    if let Some(reason) = &report.fault_reason {
        eprintln!("fault: {reason}");
    }
    Ok(if report.end_phase == MissionPhase::Fault {
        EXIT_FAULT
    } else {
        0
    })
}

fn report(stream: &Path) -> Result<u8, Error> {
    let text = fs::read_to_string(stream)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", stream.display())))?;
    let events = decode_stream(&text)?;
    let aggregated = aggregate_report(&events)?;

    let r = &aggregated.report;
    println!("events: {}", aggregated.event_count);
    println!("sites visited: {}", r.sites_visited);
    println!("protein positives: {}", r.protein_positive_count);
    println!("carbohydrate positives: {}", r.carb_positive_count);
    println!("indeterminate results: {}", r.indeterminate_count);
    println!("chamber reuses: {}", r.chamber_reuse_count);
    println!("simulated time: {:.2} s", r.total_sim_time_s);
    println!("end phase: {:?}", r.end_phase);
    if let Some(reason) = &r.fault_reason {
        println!("fault reason: {reason}");
    }

    if !aggregated.integrity_ok() {
        for mismatch in &aggregated.mismatches {
            eprintln!("mismatch: {mismatch}");
        }
        return Err(Error::Integrity(format!(
            "{} field(s) disagree with the onboard report",
            aggregated.mismatches.len()
        )));
    }
    if aggregated.embedded.is_none() {
        println!("integrity: ok (stream carries no onboard report)");
    } else {
        println!("integrity: ok");
    }
    Ok(0)
}

fn montecarlo(
    config: Option<&Path>,
    runs: u32,
    fault_profile: Option<&Path>,
    seed: u64,
) -> Result<u8, Error> {
    let mission_config = load_mission(config)?;
    let profile: FaultProfile = match fault_profile {
        Some(path) => load_json(path, "fault profile")?,
        None => FaultProfile::default(),
    };
    let summary = run_monte_carlo(&mission_config, &profile, runs, seed)?;

    println!(
        "runs: {}   complete: {}   faulted: {}",
        summary.runs, summary.complete_count, summary.fault_count
    );
    println!("{:<48} {:>6} {:>7}", "outcome", "count", "share");
    for (outcome, count) in &summary.outcomes {
        println!(
            "{:<48} {:>6} {:>6.1}%",
            outcome,
            count,
            100.0 * f64::from(*count) / f64::from(summary.runs)
        );
    }
    Ok(0)
}

fn validate(config: &Path) -> Result<u8, Error> {
    MissionConfig::load(config)?;
    println!("configuration ok: {}", config.display());
    Ok(0)
}
