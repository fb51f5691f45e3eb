//! Mission configuration. Two JSON files feed a run: a calibration
//! table (motor constants, ranger envelope, assay colors) and a mission
//! file (scenario, geometry, vacuum, timeouts, faults, seed). Both
//! resolve into the plain [`MissionConfig`] the controller consumes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assay::AssayCalibration;
use crate::drill::DrillGeometry;
use crate::error::{Error, Result};
use crate::faults::{validate_schedule, FaultWindow};
use crate::hal::{Actuator, MotorParams, UltrasonicRanger};
use crate::vacuum::ImpellerModel;
use crate::world::ScenarioSpec;

/// Per-motor electrical parameters, keyed by drive channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorTable {
    pub pulley: MotorParams,
    pub drill: MotorParams,
    pub vacuum: MotorParams,
    pub bin: MotorParams,
}

impl Default for MotorTable {
    fn default() -> Self {
        MotorTable {
            pulley: MotorParams {
                max_rpm: 100.0,
                time_constant_s: 0.25,
            },
            drill: MotorParams {
                max_rpm: 600.0,
                time_constant_s: 0.2,
            },
            vacuum: MotorParams {
                max_rpm: 10_000.0,
                time_constant_s: 0.15,
            },
            bin: MotorParams {
                max_rpm: 30.0,
                time_constant_s: 0.25,
            },
        }
    }
}

impl MotorTable {
    pub fn for_actuator(&self, actuator: Actuator) -> &MotorParams {
        match actuator {
            Actuator::Pulley => &self.pulley,
            Actuator::Drill => &self.drill,
            Actuator::Vacuum => &self.vacuum,
            Actuator::Bin => &self.bin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulley.validate("pulley")?;
        self.drill.validate("drill")?;
        self.vacuum.validate("vacuum")?;
        self.bin.validate("bin")?;
        Ok(())
    }
}

/// Bench-measured device constants, shared by the simulator and the
/// perception stage. Versioned so stale tables fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calibration {
    pub schema_version: u32,
    pub motors: MotorTable,
    pub ranger: UltrasonicRanger,
    pub assay: AssayCalibration,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            schema_version: 1,
            motors: MotorTable::default(),
            ranger: UltrasonicRanger {
                min_range_m: 0.02,
                max_range_m: 4.0,
                noise_sigma_m: 0.003,
                dropout: false,
            },
            assay: AssayCalibration::default(),
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported calibration schema_version {}",
                self.schema_version
            )));
        }
        self.motors.validate()?;
        self.ranger.validate()?;
        self.assay.validate()?;
        Ok(())
    }
}

/// Sampling head geometry and drive rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanismConfig {
    pub spool_radius_m: f64,
    pub rail_travel_m: f64,
    pub encoder_cpr: u32,
    /// Linear rate of the servo-driven drill carriage.
    pub servo_rate_mps: f64,
    /// Bit tip position with the carriage parked, relative to the rail base.
    pub drill_home_tip_m: f64,
    pub drill: DrillGeometry,
    /// Soil loosened per bit revolution at zero hardness.
    pub excavation_rate_g_per_rev: f64,
    /// Loosened mass at which excavation stops.
    pub excavation_target_g: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            spool_radius_m: 0.02,
            rail_travel_m: 0.30,
            encoder_cpr: 600,
            servo_rate_mps: 0.01,
            drill_home_tip_m: -0.05,
            drill: DrillGeometry::default(),
            excavation_rate_g_per_rev: 0.05,
            excavation_target_g: 3.0,
        }
    }
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spool_radius_m > 0.0) || !(self.rail_travel_m > 0.0) {
            return Err(Error::Config(format!(
                "spool radius and rail travel must be positive, got {} and {}",
                self.spool_radius_m, self.rail_travel_m
            )));
        }
        if self.encoder_cpr == 0 {
            return Err(Error::Config("encoder_cpr cannot be zero".into()));
        }
        if !(self.servo_rate_mps > 0.0) {
            return Err(Error::Config(format!(
                "servo_rate_mps must be positive, got {}",
                self.servo_rate_mps
            )));
        }
        if self.drill_home_tip_m >= 0.0 {
            return Err(Error::Config(format!(
                "drill home tip must be above ground (negative), got {}",
                self.drill_home_tip_m
            )));
        }
        self.drill.validate()?;
        if !(self.excavation_rate_g_per_rev > 0.0) || !(self.excavation_target_g > 0.0) {
            return Err(Error::Config(
                "excavation rate and target must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pneumatic transport constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VacuumConfig {
    pub impeller: ImpellerModel,
    /// Mass flow while suction holds above threshold.
    pub flow_g_per_s: f64,
    pub filter_efficiency: f64,
    /// Impeller speed below which the filter sheds its load into the bin.
    pub settle_stop_radps: f64,
}

impl Default for VacuumConfig {
    fn default() -> Self {
        VacuumConfig {
            impeller: ImpellerModel::default(),
            flow_g_per_s: 1.0,
            filter_efficiency: 0.99,
            settle_stop_radps: 1.0,
        }
    }
}

impl VacuumConfig {
    pub fn validate(&self) -> Result<()> {
        self.impeller.validate()?;
        if !(self.flow_g_per_s > 0.0) {
            return Err(Error::Config(format!(
                "flow_g_per_s must be positive, got {}",
                self.flow_g_per_s
            )));
        }
        if !(0.0..=1.0).contains(&self.filter_efficiency) {
            return Err(Error::Config(format!(
                "filter_efficiency out of [0, 1]: {}",
                self.filter_efficiency
            )));
        }
        if !(self.settle_stop_radps > 0.0) {
            return Err(Error::Config(format!(
                "settle_stop_radps must be positive, got {}",
                self.settle_stop_radps
            )));
        }
        Ok(())
    }
}

/// Bin gate limits for handing soil to the reaction chambers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispenseConfig {
    /// Most the gate can meter out per site.
    pub max_dispense_g: f64,
    /// Below this there is not enough soil to charge both vessels.
    pub min_assay_g: f64,
}

impl Default for DispenseConfig {
    fn default() -> Self {
        DispenseConfig {
            max_dispense_g: 3.0,
            min_assay_g: 2.0,
        }
    }
}

impl DispenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_assay_g && self.min_assay_g <= self.max_dispense_g) {
            return Err(Error::Config(format!(
                "dispense limits must satisfy 0 < min {} <= max {}",
                self.min_assay_g, self.max_dispense_g
            )));
        }
        Ok(())
    }
}

/// Per-phase watchdog limits in seconds. Idle, Complete, and Fault
/// never time out and have no entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseTimeouts {
    pub deploying_s: f64,
    pub ranging_s: f64,
    pub drill_descent_s: f64,
    pub excavating_s: f64,
    pub drill_retract_s: f64,
    pub vacuuming_s: f64,
    pub depositing_s: f64,
    pub dispensing_s: f64,
    pub reacting_s: f64,
    pub imaging_s: f64,
    pub bin_rotating_s: f64,
    pub stowing_s: f64,
    pub site_advance_s: f64,
}

impl Default for PhaseTimeouts {
    fn default() -> Self {
        PhaseTimeouts {
            deploying_s: 60.0,
            ranging_s: 5.0,
            drill_descent_s: 30.0,
            excavating_s: 120.0,
            drill_retract_s: 30.0,
            vacuuming_s: 60.0,
            depositing_s: 30.0,
            dispensing_s: 30.0,
            reacting_s: 300.0,
            imaging_s: 30.0,
            bin_rotating_s: 30.0,
            stowing_s: 30.0,
            site_advance_s: 30.0,
        }
    }
}

impl PhaseTimeouts {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.deploying_s,
            self.ranging_s,
            self.drill_descent_s,
            self.excavating_s,
            self.drill_retract_s,
            self.vacuuming_s,
            self.depositing_s,
            self.dispensing_s,
            self.reacting_s,
            self.imaging_s,
            self.bin_rotating_s,
            self.stowing_s,
            self.site_advance_s,
        ];
        if all.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("all phase timeouts must be positive".into()));
        }
        Ok(())
    }
}

/// Scenario reference in a mission file: the name of a bundled
/// scenario, a path to a scenario JSON (relative to the mission file),
/// or the scenario written out inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Inline(ScenarioSpec),
    Name(String),
}

impl ScenarioRef {
    fn resolve(&self, base_dir: Option<&Path>) -> Result<ScenarioSpec> {
        let spec = match self {
            ScenarioRef::Inline(spec) => spec.clone(),
            ScenarioRef::Name(name) if name == "urc10" => ScenarioSpec::urc10(),
            ScenarioRef::Name(path) => {
                let resolved = match base_dir {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                load_json(&resolved, "scenario")?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// On-disk mission file. Every field defaults, so `{}` is a valid
/// mission: the bundled ten-site scenario with stock calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfigFile {
    pub schema_version: u32,
    pub scenario: ScenarioRef,
    /// Calibration JSON path, relative to the mission file. Omitted
    /// means stock calibration.
    pub calibration_path: Option<String>,
    pub dt_s: f64,
    pub seed: u64,
    pub timeouts: PhaseTimeouts,
    pub fault_schedule: Vec<FaultWindow>,
    /// Refusing reuse faults the mission on the fourth dispense.
    pub allow_chamber_reuse: bool,
    pub mechanism: MechanismConfig,
    pub vacuum: VacuumConfig,
    pub dispense: DispenseConfig,
}

impl Default for MissionConfigFile {
    fn default() -> Self {
        MissionConfigFile {
            schema_version: 1,
            scenario: ScenarioRef::Name("urc10".into()),
            calibration_path: None,
            dt_s: 0.01,
            seed: 42,
            timeouts: PhaseTimeouts::default(),
            fault_schedule: Vec::new(),
            allow_chamber_reuse: true,
            mechanism: MechanismConfig::default(),
            vacuum: VacuumConfig::default(),
            dispense: DispenseConfig::default(),
        }
    }
}

impl MissionConfigFile {
    /// Resolve references against `base_dir` (the mission file's
    /// directory) and validate the result.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<MissionConfig> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported mission schema_version {}",
                self.schema_version
            )));
        }
        let scenario = self.scenario.resolve(base_dir)?;
        let calibration = match &self.calibration_path {
            None => Calibration::default(),
            Some(path) => {
                let resolved = match base_dir {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                load_json(&resolved, "calibration")?
            }
        };
        let config = MissionConfig {
            scenario,
            calibration,
            dt_s: self.dt_s,
            seed: self.seed,
            timeouts: self.timeouts,
            fault_schedule: self.fault_schedule.clone(),
            allow_chamber_reuse: self.allow_chamber_reuse,
            mechanism: self.mechanism,
            vacuum: self.vacuum,
            dispense: self.dispense,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Fully resolved mission parameters, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub scenario: ScenarioSpec,
    pub calibration: Calibration,
    pub dt_s: f64,
    pub seed: u64,
    pub timeouts: PhaseTimeouts,
    pub fault_schedule: Vec<FaultWindow>,
    pub allow_chamber_reuse: bool,
    pub mechanism: MechanismConfig,
    pub vacuum: VacuumConfig,
    pub dispense: DispenseConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfigFile::default()
            .resolve(None)
            .expect("stock mission configuration must resolve")
    }
}

impl MissionConfig {
    /// Load a mission file and resolve its references relative to it.
    pub fn load(path: &Path) -> Result<MissionConfig> {
        let file: MissionConfigFile = load_json(path, "mission config")?;
        file.resolve(path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.calibration.validate()?;
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::Config(format!(
                "dt_s must be positive and finite, got {}",
                self.dt_s
            )));
        }
        self.timeouts.validate()?;
        validate_schedule(&self.fault_schedule)?;
        self.mechanism.validate()?;
        self.vacuum.validate()?;
        self.dispense.validate()?;
        Ok(())
    }
}

/// Read and parse one JSON file, labeling errors with what it was
/// supposed to be.
pub fn load_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {what} file {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("bad {what} file {}: {e}", path.display())))
}
