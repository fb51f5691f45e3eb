//! The firmware-style mission controller: a fixed-step state machine
//! that walks each site through deploy, range, drill, vacuum, deposit,
//! dispense, react, image, and bin rotation, then stows and advances.
//! Faults are states, not errors: watchdog timeouts and refused chamber
//! reuse latch the machine into Fault with everything commanded off.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::assay::{mix_sample, Reagent, ReactionVessel};
use crate::config::{MissionConfig, PhaseTimeouts};
use crate::error::{Error, Result};
use crate::faults::ActiveFaults;
use crate::hal::{Actuator, HBridgeChannel, MotorState, RangeReading, DRIVE_SUPPLY_VOLTS};
use crate::perception::{capture, classify, AssayResult, TestKind, Verdict};
use crate::pulley::{height_from_encoder, PulleyRig};
use crate::rng::{stream_rng, RngStream, SimRng};
use crate::telemetry::{EventKind, TelemetryEvent, TELEMETRY_SCHEMA_VERSION};
use crate::vacuum::VacuumContainer;
use crate::world::{SoilSample, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissionPhase {
    Idle,
    Deploying,
    Ranging,
    DrillDescent,
    Excavating,
    DrillRetract,
    Vacuuming,
    Depositing,
    Dispensing,
    Reacting,
    Imaging,
    BinRotating,
    Stowing,
    SiteAdvance,
    Complete,
    Fault,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 16] = [
        MissionPhase::Idle,
        MissionPhase::Deploying,
        MissionPhase::Ranging,
        MissionPhase::DrillDescent,
        MissionPhase::Excavating,
        MissionPhase::DrillRetract,
        MissionPhase::Vacuuming,
        MissionPhase::Depositing,
        MissionPhase::Dispensing,
        MissionPhase::Reacting,
        MissionPhase::Imaging,
        MissionPhase::BinRotating,
        MissionPhase::Stowing,
        MissionPhase::SiteAdvance,
        MissionPhase::Complete,
        MissionPhase::Fault,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionPhase::Complete | MissionPhase::Fault)
    }

    /// Lowercase phase name as it appears in fault reasons.
    pub fn label(self) -> &'static str {
        match self {
            MissionPhase::Idle => "idle",
            MissionPhase::Deploying => "deploying",
            MissionPhase::Ranging => "ranging",
            MissionPhase::DrillDescent => "drill descent",
            MissionPhase::Excavating => "excavating",
            MissionPhase::DrillRetract => "drill retract",
            MissionPhase::Vacuuming => "vacuuming",
            MissionPhase::Depositing => "depositing",
            MissionPhase::Dispensing => "dispensing",
            MissionPhase::Reacting => "reacting",
            MissionPhase::Imaging => "imaging",
            MissionPhase::BinRotating => "bin rotating",
            MissionPhase::Stowing => "stowing",
            MissionPhase::SiteAdvance => "site advance",
            MissionPhase::Complete => "complete",
            MissionPhase::Fault => "fault",
        }
    }

    /// Watchdog limit, if this phase has one. Idle waits for a start
    /// command and the terminal phases never exit, so none of the three
    /// can time out.
    pub fn timeout_s(self, t: &PhaseTimeouts) -> Option<f64> {
        match self {
            MissionPhase::Idle | MissionPhase::Complete | MissionPhase::Fault => None,
            MissionPhase::Deploying => Some(t.deploying_s),
            MissionPhase::Ranging => Some(t.ranging_s),
            MissionPhase::DrillDescent => Some(t.drill_descent_s),
            MissionPhase::Excavating => Some(t.excavating_s),
            MissionPhase::DrillRetract => Some(t.drill_retract_s),
            MissionPhase::Vacuuming => Some(t.vacuuming_s),
            MissionPhase::Depositing => Some(t.depositing_s),
            MissionPhase::Dispensing => Some(t.dispensing_s),
            MissionPhase::Reacting => Some(t.reacting_s),
            MissionPhase::Imaging => Some(t.imaging_s),
            MissionPhase::BinRotating => Some(t.bin_rotating_s),
            MissionPhase::Stowing => Some(t.stowing_s),
            MissionPhase::SiteAdvance => Some(t.site_advance_s),
        }
    }

    /// Successors a healthy mission may take from this phase.
    pub fn nominal_successors(self) -> &'static [MissionPhase] {
        use MissionPhase::*;
        match self {
            Idle => &[Deploying],
            Deploying => &[Ranging],
            Ranging => &[DrillDescent],
            DrillDescent => &[Excavating],
            Excavating => &[DrillRetract],
            DrillRetract => &[Vacuuming],
            Vacuuming => &[Depositing],
            Depositing => &[Dispensing],
            Dispensing => &[Reacting],
            Reacting => &[Imaging],
            Imaging => &[BinRotating],
            BinRotating => &[Stowing],
            Stowing => &[SiteAdvance],
            SiteAdvance => &[Deploying, Complete],
            Complete | Fault => &[],
        }
    }

    /// The full legal edge set: nominal successors plus a drop into
    /// Fault from any live phase.
    pub fn is_legal_transition(from: MissionPhase, to: MissionPhase) -> bool {
        from.nominal_successors().contains(&to)
            || (to == MissionPhase::Fault && !from.is_terminal())
    }
}

/// End-of-mission summary. The telemetry-embedded copy drops `results`
/// because the stream already carries each one as its own event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub sites_visited: u32,
    pub protein_positive_count: u32,
    pub carb_positive_count: u32,
    pub indeterminate_count: u32,
    /// Times a chamber was charged again after its first use.
    pub chamber_reuse_count: u32,
    pub total_sim_time_s: f64,
    pub end_phase: MissionPhase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub results: Vec<AssayResult>,
}

impl MissionReport {
    pub fn empty() -> MissionReport {
        MissionReport {
            sites_visited: 0,
            protein_positive_count: 0,
            carb_positive_count: 0,
            indeterminate_count: 0,
            chamber_reuse_count: 0,
            total_sim_time_s: 0.0,
            end_phase: MissionPhase::Idle,
            fault_reason: None,
            results: Vec::new(),
        }
    }
}

/// Every simulated device on the module.
#[derive(Debug, Clone)]
pub struct Devices {
    /// H-bridge channels indexed by [`Actuator::index`].
    pub bridges: [HBridgeChannel; 4],
    pub rig: PulleyRig,
    pub drill_motor: MotorState,
    pub vacuum_motor: MotorState,
    pub bin_motor: MotorState,
    pub ranger: crate::hal::UltrasonicRanger,
    pub carriage: crate::drill::DrillCarriage,
    pub container: VacuumContainer,
}

impl Devices {
    pub fn from_config(config: &MissionConfig) -> Devices {
        let motors = &config.calibration.motors;
        Devices {
            bridges: [HBridgeChannel::default(); 4],
            rig: PulleyRig::new(
                config.mechanism.spool_radius_m,
                config.mechanism.rail_travel_m,
                MotorState::from_params(DRIVE_SUPPLY_VOLTS, &motors.pulley),
            ),
            drill_motor: MotorState::from_params(DRIVE_SUPPLY_VOLTS, &motors.drill),
            vacuum_motor: MotorState::from_params(DRIVE_SUPPLY_VOLTS, &motors.vacuum),
            bin_motor: MotorState::from_params(DRIVE_SUPPLY_VOLTS, &motors.bin),
            ranger: config.calibration.ranger,
            carriage: crate::drill::DrillCarriage::new(config.mechanism.drill_home_tip_m),
            container: VacuumContainer::new(config.vacuum.filter_efficiency),
        }
    }

    pub fn motor(&self, actuator: Actuator) -> &MotorState {
        match actuator {
            Actuator::Pulley => &self.rig.motor,
            Actuator::Drill => &self.drill_motor,
            Actuator::Vacuum => &self.vacuum_motor,
            Actuator::Bin => &self.bin_motor,
        }
    }

    pub fn motor_mut(&mut self, actuator: Actuator) -> &mut MotorState {
        match actuator {
            Actuator::Pulley => &mut self.rig.motor,
            Actuator::Drill => &mut self.drill_motor,
            Actuator::Vacuum => &mut self.vacuum_motor,
            Actuator::Bin => &mut self.bin_motor,
        }
    }
}

/// Gear-rack motion commanded for the drill carriage this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServoMotion {
    #[default]
    Hold,
    Descend,
    Retract,
}

/// One step's worth of commands: (in1, in2, duty) per drive motor plus
/// the carriage servo. Phase laws build this from scratch each step, so
/// at most one drive duty is ever nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommandVector {
    pub drive: [(bool, bool, f64); 4],
    pub servo: ServoMotion,
}

impl CommandVector {
    fn forward(actuator: Actuator) -> CommandVector {
        let mut cmd = CommandVector::default();
        cmd.drive[actuator.index()] = (true, false, 1.0);
        cmd
    }

    fn reverse(actuator: Actuator) -> CommandVector {
        let mut cmd = CommandVector::default();
        cmd.drive[actuator.index()] = (false, true, 1.0);
        cmd
    }
}

/// Controller-visible state, separate from device truth.
#[derive(Debug, Clone)]
pub struct MissionState {
    pub phase: MissionPhase,
    pub site_index: u32,
    /// Bin position: which chamber sits under the gate, 0..2.
    pub chamber_index: u8,
    pub phase_elapsed_s: f64,
    pub t_s: f64,
    pub measured_ground_m: Option<f64>,
    pub fault_reason: Option<String>,
    pub results: Vec<AssayResult>,
}

/// Reagent fixed in one bin chamber, plus usage accounting.
#[derive(Debug, Clone, Copy)]
struct Chamber {
    protein_test: bool,
    used_since_rotation: bool,
    lifetime_uses: u32,
}

#[derive(Debug, Clone, Copy)]
struct SiteVessel {
    chamber_id: u8,
    test_kind: TestKind,
    vessel: ReactionVessel,
}

pub struct Mission {
    pub config: MissionConfig,
    pub state: MissionState,
    pub devices: Devices,
    pub world: World,
    events: Vec<TelemetryEvent>,
    seq: u64,
    ultrasonic_rng: SimRng,
    camera_rng: SimRng,
    /// Chambers hold Biuret, Benedict, Benedict-spare in that order.
    chambers: [Chamber; 3],
    vessels: Vec<SiteVessel>,
    /// Soil delivered by the filter, waiting below the gate.
    pub bin_mass_g: f64,
    bin_angle_origin_rad: f64,
    pub chamber_reuse_count: u32,
    sites_visited: u32,
    /// Lifetime grams loosened from all sites, for mass accounting.
    pub total_loosened_g: f64,
    /// Lifetime grams metered into reaction vessels.
    pub total_dispensed_g: f64,
}

impl Mission {
    /// Build a mission over the world its own scenario and seed imply.
    pub fn new(config: MissionConfig) -> Result<Mission> {
        let world = World::from_scenario(config.seed, &config.scenario)?;
        Mission::with_world(config, world)
    }

    /// Build a mission over a caller-supplied world.
    pub fn with_world(config: MissionConfig, world: World) -> Result<Mission> {
        config.validate()?;
        if world.sites.is_empty() {
            return Err(Error::Config("world has no sites to sample".into()));
        }
        let devices = Devices::from_config(&config);
        let ultrasonic_rng = stream_rng(config.seed, RngStream::Ultrasonic);
        let camera_rng = stream_rng(config.seed, RngStream::Camera);
        Ok(Mission {
            state: MissionState {
                phase: MissionPhase::Idle,
                site_index: 0,
                chamber_index: 0,
                phase_elapsed_s: 0.0,
                t_s: 0.0,
                measured_ground_m: None,
                fault_reason: None,
                results: Vec::new(),
            },
            devices,
            world,
            events: Vec::new(),
            seq: 0,
            ultrasonic_rng,
            camera_rng,
            chambers: [
                Chamber { protein_test: true, used_since_rotation: false, lifetime_uses: 0 },
                Chamber { protein_test: false, used_since_rotation: false, lifetime_uses: 0 },
                Chamber { protein_test: false, used_since_rotation: false, lifetime_uses: 0 },
            ],
            vessels: Vec::new(),
            bin_mass_g: 0.0,
            bin_angle_origin_rad: 0.0,
            chamber_reuse_count: 0,
            sites_visited: 0,
            total_loosened_g: 0.0,
            total_dispensed_g: 0.0,
            config,
        })
    }

    pub fn events(&self) -> &[TelemetryEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TelemetryEvent> {
        self.events
    }

    /// The start command: stamp the stream header and begin deploying.
    pub fn start(&mut self) {
        debug_assert_eq!(self.state.phase, MissionPhase::Idle);
        self.emit(EventKind::Header {
            schema_version: TELEMETRY_SCHEMA_VERSION,
            seed: self.config.seed,
            dt_s: self.config.dt_s,
            n_sites: self.world.sites.len() as u32,
        });
        self.transition(MissionPhase::Deploying);
    }

    /// Run until Complete or Fault. Termination is guaranteed by the
    /// per-phase watchdogs; the step budget is a backstop against bugs.
    pub fn run_to_end(&mut self) {
        let budget = self.step_budget();
        let mut steps: u64 = 0;
        while !self.state.phase.is_terminal() {
            self.step();
            steps += 1;
            if steps > budget {
                self.fault("internal step budget exceeded".into());
            }
        }
    }

    fn step_budget(&self) -> u64 {
        let t = &self.config.timeouts;
        let per_site = t.deploying_s
            + t.ranging_s
            + t.drill_descent_s
            + t.excavating_s
            + t.drill_retract_s
            + t.vacuuming_s
            + t.depositing_s
            + t.dispensing_s
            + t.reacting_s
            + t.imaging_s
            + t.bin_rotating_s
            + t.stowing_s
            + t.site_advance_s;
        let total_s = per_site * (self.world.sites.len() as f64 + 1.0);
        (total_s / self.config.dt_s) as u64 + 1_000
    }

    /// Advance one control period.
    pub fn step(&mut self) {
        if self.state.phase.is_terminal() {
            return;
        }
        let dt = self.config.dt_s;
        self.state.t_s += dt;
        self.state.phase_elapsed_s += dt;
        self.apply_scheduled_faults();

        if let Some(limit) = self.state.phase.timeout_s(&self.config.timeouts) {
            if self.state.phase_elapsed_s > limit {
                let reason = format!("{} timeout", self.state.phase.label());
                self.fault(reason);
                return;
            }
        }

        match self.state.phase {
            MissionPhase::Idle | MissionPhase::Complete | MissionPhase::Fault => {}
            MissionPhase::Deploying => self.step_deploying(dt),
            MissionPhase::Ranging => self.step_ranging(dt),
            MissionPhase::DrillDescent => self.step_drill_descent(dt),
            MissionPhase::Excavating => self.step_excavating(dt),
            MissionPhase::DrillRetract => self.step_drill_retract(dt),
            MissionPhase::Vacuuming => self.step_vacuuming(dt),
            MissionPhase::Depositing => self.step_depositing(dt),
            MissionPhase::Dispensing => self.step_dispensing(dt),
            MissionPhase::Reacting => self.step_reacting(dt),
            MissionPhase::Imaging => self.step_imaging(dt),
            MissionPhase::BinRotating => self.step_bin_rotating(dt),
            MissionPhase::Stowing => self.step_stowing(dt),
            MissionPhase::SiteAdvance => self.step_site_advance(dt),
        }
    }

    fn apply_scheduled_faults(&mut self) {
        let active = ActiveFaults::at(&self.config.fault_schedule, self.state.t_s);
        self.devices.ranger.dropout = active.ultrasonic_dropout;
        for actuator in Actuator::ALL {
            self.devices
                .motor_mut(actuator)
                .set_stalled(active.stalled[actuator.index()]);
        }
        self.devices.container.clogged = active.filter_clog;
        self.devices.container.filter_efficiency = if active.filter_clog {
            0.0
        } else {
            self.config.vacuum.filter_efficiency
        };
    }

    /// Latch into Fault: everything commanded off, then the fault, the
    /// transition, and the final report, in that order on the stream.
    fn fault(&mut self, reason: String) {
        self.apply_commands(&CommandVector::default());
        self.emit(EventKind::FaultEvent {
            reason: reason.clone(),
            site_index: self.state.site_index,
        });
        self.state.fault_reason = Some(reason);
        self.transition(MissionPhase::Fault);
        self.emit_report();
    }

    fn transition(&mut self, to: MissionPhase) {
        debug_assert!(
            MissionPhase::is_legal_transition(self.state.phase, to),
            "illegal transition {:?} -> {:?}",
            self.state.phase,
            to
        );
        self.emit(EventKind::PhaseChange {
            phase_from: self.state.phase,
            phase_to: to,
            site_index: self.state.site_index,
        });
        self.state.phase = to;
        self.state.phase_elapsed_s = 0.0;
        match to {
            MissionPhase::Deploying => {
                self.sites_visited += 1;
                self.state.measured_ground_m = None;
            }
            MissionPhase::Dispensing => {
                self.vessels.clear();
            }
            MissionPhase::BinRotating => {
                self.bin_angle_origin_rad = self.devices.bin_motor.cumulative_angle_rad;
            }
            MissionPhase::Complete => {
                self.emit_report();
            }
            _ => {}
        }
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(TelemetryEvent {
            seq: self.seq,
            t_s: self.state.t_s,
            kind,
        });
        self.seq += 1;
    }

    fn emit_report(&mut self) {
        let mut embedded = self.report();
        embedded.results.clear();
        self.emit(EventKind::ReportEvent(embedded));
    }

    /// Set the four bridges, logging changes. Commands that drop to
    /// zero are logged before commands that rise, so a stream replay
    /// never sees two motors driven at once across a hand-off.
    fn apply_commands(&mut self, cmd: &CommandVector) {
        debug_assert!(
            cmd.drive.iter().filter(|(_, _, duty)| *duty != 0.0).count() <= 1,
            "sequential-motor rule violated by a phase law"
        );
        for pass in 0..2 {
            for actuator in Actuator::ALL {
                let (in1, in2, duty) = cmd.drive[actuator.index()];
                let zeroing = duty == 0.0;
                if (pass == 0) != zeroing {
                    continue;
                }
                let bridge = &mut self.devices.bridges[actuator.index()];
                if bridge.in1 == in1 && bridge.in2 == in2 && bridge.enable_duty == duty {
                    continue;
                }
                bridge
                    .set(in1, in2, duty)
                    .expect("phase laws only command duties in [0, 1]");
                self.emit(EventKind::ActuatorCommand {
                    actuator,
                    in1,
                    in2,
                    duty,
                });
            }
        }
    }

    /// Advance all motor plants one period against the bridge outputs.
    fn step_devices(&mut self, dt: f64) {
        let bridges = self.devices.bridges;
        self.devices.rig.step(&bridges[Actuator::Pulley.index()], dt);
        self.devices
            .drill_motor
            .step(&bridges[Actuator::Drill.index()], dt);
        self.devices
            .vacuum_motor
            .step(&bridges[Actuator::Vacuum.index()], dt);
        self.devices
            .bin_motor
            .step(&bridges[Actuator::Bin.index()], dt);
    }

    fn height_estimate(&self) -> f64 {
        let mech = &self.config.mechanism;
        height_from_encoder(
            self.devices.rig.motor.encoder_ticks(mech.encoder_cpr),
            mech.encoder_cpr,
            mech.spool_radius_m,
            mech.rail_travel_m,
        )
    }

    fn step_deploying(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::forward(Actuator::Pulley));
        self.step_devices(dt);
        if self.height_estimate() <= 0.0 {
            self.transition(MissionPhase::Ranging);
        }
    }

    fn step_ranging(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        let truth = self.world.sites[self.state.site_index as usize].surface_distance_m;
        let reading = self.devices.ranger.read(truth, &mut self.ultrasonic_rng);
        let value = match reading {
            RangeReading::Distance(d) => Some(d),
            RangeReading::Timeout => None,
        };
        self.emit(EventKind::SensorReading {
            sensor: "ultrasonic".into(),
            value,
        });
        if let Some(distance) = value {
            self.state.measured_ground_m = Some(distance);
            self.transition(MissionPhase::DrillDescent);
        }
    }

    fn step_drill_descent(&mut self, dt: f64) {
        let mut cmd = CommandVector::forward(Actuator::Drill);
        cmd.servo = ServoMotion::Descend;
        self.apply_commands(&cmd);
        self.step_devices(dt);
        let ground = self
            .state
            .measured_ground_m
            .expect("descent is only entered with a ranging fix");
        let mech = self.config.mechanism;
        self.devices
            .carriage
            .descend_step(&mech.drill, mech.servo_rate_mps, dt, ground);
        if self.devices.carriage.at_full_plunge(&mech.drill) {
            self.transition(MissionPhase::Excavating);
        }
    }

    fn step_excavating(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::forward(Actuator::Drill));
        self.step_devices(dt);
        let mech = self.config.mechanism;
        let site = &mut self.world.sites[self.state.site_index as usize];
        let loosened = self.devices.carriage.excavate_step(
            &self.devices.drill_motor,
            site,
            mech.excavation_rate_g_per_rev,
            dt,
        );
        self.total_loosened_g += loosened;
        if site.loosened_pile_g >= mech.excavation_target_g {
            self.transition(MissionPhase::DrillRetract);
        }
    }

    fn step_drill_retract(&mut self, dt: f64) {
        let cmd = CommandVector {
            servo: ServoMotion::Retract,
            ..CommandVector::default()
        };
        self.apply_commands(&cmd);
        self.step_devices(dt);
        let mech = self.config.mechanism;
        self.devices
            .carriage
            .retract_step(&mech.drill, mech.servo_rate_mps, dt);
        if self.devices.carriage.bit_tip_position_m <= mech.drill_home_tip_m {
            self.transition(MissionPhase::Vacuuming);
        }
    }

    fn step_vacuuming(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::forward(Actuator::Vacuum));
        self.step_devices(dt);
        let vac = self.config.vacuum;
        let active = vac
            .impeller
            .suction_active(self.devices.vacuum_motor.speed_radps);
        let site = &mut self.world.sites[self.state.site_index as usize];
        self.devices
            .container
            .transport_step(site, active, vac.flow_g_per_s, dt);
        if site.loosened_pile_g == 0.0 {
            self.transition(MissionPhase::Depositing);
        }
    }

    fn step_depositing(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        let vac = self.config.vacuum;
        let speed = self.devices.vacuum_motor.speed_radps;
        self.bin_mass_g += self.devices.container.settle_to_bin(speed, vac.settle_stop_radps);
        if speed.abs() < vac.settle_stop_radps {
            self.transition(MissionPhase::Dispensing);
        }
    }

    fn step_dispensing(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        debug_assert!(
            !self
                .config
                .vacuum
                .impeller
                .suction_active(self.devices.vacuum_motor.speed_radps),
            "dispensing must wait for suction to die"
        );
        let limits = self.config.dispense;
        let total = self.bin_mass_g.min(limits.max_dispense_g);
        if total >= limits.min_assay_g {
            self.bin_mass_g -= total;
            self.total_dispensed_g += total;
            let half = total / 2.0;
            // Protein always runs in chamber 0; the sugar test
            // alternates between the Benedict chamber and its spare.
            let carb_chamber = 1 + (self.state.site_index % 2) as u8;
            if self.charge_chamber(0, TestKind::Protein, half)
                && self.charge_chamber(carb_chamber, TestKind::Carbohydrate, half)
            {
                self.transition(MissionPhase::Reacting);
            }
        } else {
            // Not enough soil to charge the vessels; leave what there
            // is in the bin and let imaging record the gap.
            self.transition(MissionPhase::Reacting);
        }
    }

    /// Returns false if the charge faulted the mission (reuse refused).
    fn charge_chamber(&mut self, chamber_id: u8, test_kind: TestKind, mass_g: f64) -> bool {
        let chamber = &mut self.chambers[chamber_id as usize];
        debug_assert!(
            !chamber.used_since_rotation,
            "chamber charged twice between rotations"
        );
        debug_assert_eq!(chamber.protein_test, test_kind == TestKind::Protein);
        chamber.used_since_rotation = true;
        chamber.lifetime_uses += 1;
        if chamber.lifetime_uses > 1 {
            self.chamber_reuse_count += 1;
            if !self.config.allow_chamber_reuse {
                self.fault("chamber reuse disallowed".into());
                return false;
            }
        }
        let site = &self.world.sites[self.state.site_index as usize];
        let sample = SoilSample {
            mass_g,
            protein_fraction: site.protein_fraction,
            sugar_fraction: site.sugar_fraction,
        };
        let reagent = match test_kind {
            TestKind::Protein => Reagent::biuret(&self.config.calibration.assay),
            TestKind::Carbohydrate => Reagent::benedict(&self.config.calibration.assay),
        };
        let vessel =
            mix_sample(&sample, reagent).expect("dispensed mass is positive by construction");
        self.vessels.push(SiteVessel {
            chamber_id,
            test_kind,
            vessel,
        });
        true
    }

    fn step_reacting(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        let cal = self.config.calibration.assay;
        let mut all_readable = true;
        for entry in &mut self.vessels {
            entry.vessel.react_step(&cal, dt);
            entry
                .vessel
                .decant_step(&cal, dt)
                .expect("control period is positive");
            all_readable &= entry.vessel.readable(&cal);
        }
        if all_readable {
            self.transition(MissionPhase::Imaging);
        }
    }

    fn step_imaging(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        let cal = self.config.calibration.assay;
        let site_id = self.state.site_index;
        if self.vessels.is_empty() {
            // Nothing was dispensed; both tests go on record as
            // unanswered for this site.
            for test_kind in [TestKind::Protein, TestKind::Carbohydrate] {
                let result = AssayResult {
                    test_kind,
                    verdict: Verdict::Indeterminate,
                    band: None,
                    hue_distance_deg: None,
                    site_id,
                };
                self.state.results.push(result);
                self.emit(EventKind::AssayResultEvent(result));
            }
        } else {
            let vessels = self.vessels.clone();
            for entry in &vessels {
                let reading = capture(&entry.vessel, entry.chamber_id, &cal, &mut self.camera_rng);
                let result = classify(&reading, entry.test_kind, &cal, site_id);
                self.state.results.push(result);
                self.emit(EventKind::AssayResultEvent(result));
            }
        }
        self.transition(MissionPhase::BinRotating);
    }

    fn step_bin_rotating(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::forward(Actuator::Bin));
        self.step_devices(dt);
        let swept = self.devices.bin_motor.cumulative_angle_rad - self.bin_angle_origin_rad;
        if swept >= TAU / 3.0 {
            self.state.chamber_index = (self.state.chamber_index + 1) % 3;
            for chamber in &mut self.chambers {
                chamber.used_since_rotation = false;
            }
            self.transition(MissionPhase::Stowing);
        }
    }

    fn step_stowing(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::reverse(Actuator::Pulley));
        self.step_devices(dt);
        let mech = self.config.mechanism;
        if self.height_estimate() >= mech.rail_travel_m {
            self.transition(MissionPhase::SiteAdvance);
        }
    }

    fn step_site_advance(&mut self, dt: f64) {
        self.apply_commands(&CommandVector::default());
        self.step_devices(dt);
        self.state.site_index += 1;
        self.world.current_site = self.state.site_index as usize;
        if self.state.site_index as usize == self.world.sites.len() {
            self.transition(MissionPhase::Complete);
        } else {
            self.transition(MissionPhase::Deploying);
        }
    }

    pub fn report(&self) -> MissionReport {
        let mut protein = 0;
        let mut carb = 0;
        let mut indeterminate = 0;
        for result in &self.state.results {
            match (result.test_kind, result.verdict) {
                (TestKind::Protein, Verdict::Positive) => protein += 1,
                (TestKind::Carbohydrate, Verdict::Positive) => carb += 1,
                (_, Verdict::Indeterminate) => indeterminate += 1,
                (_, Verdict::Negative) => {}
            }
        }
        MissionReport {
            sites_visited: self.sites_visited,
            protein_positive_count: protein,
            carb_positive_count: carb,
            indeterminate_count: indeterminate,
            chamber_reuse_count: self.chamber_reuse_count,
            total_sim_time_s: self.state.t_s,
            end_phase: self.state.phase,
            fault_reason: self.state.fault_reason.clone(),
            results: self.state.results.clone(),
        }
    }
}

/// Build, start, and run a mission to its end.
pub fn run_mission(config: &MissionConfig) -> Result<(MissionReport, Vec<TelemetryEvent>)> {
    let mut mission = Mission::new(config.clone())?;
    mission.start();
    mission.run_to_end();
    let report = mission.report();
    Ok((report, mission.into_events()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Calibration;
    use crate::faults::{FaultKind, FaultWindow};
    use crate::world::{ScenarioProfile, ScenarioSpec, SiteOverride};

    /// One pinned site, short assay times: a mission that finishes in
    /// a few thousand steps.
    fn fast_config(n_sites: usize) -> MissionConfig {
        let mut calibration = Calibration::default();
        calibration.assay.tau_react_s = 3.0;
        calibration.assay.tau_decant_s = 6.0;
        calibration.assay.min_decant_s = 12.0;
        let scenario = ScenarioSpec {
            schema_version: 1,
            n_sites,
            explicit_sites: (0..n_sites)
                .map(|i| SiteOverride {
                    index: i,
                    protein_fraction: Some(0.10),
                    sugar_fraction: Some(0.03),
                    hardness: Some(0.2),
                    surface_distance_m: Some(0.08),
                    loosened_pile_g: None,
                })
                .collect(),
            profile: ScenarioProfile {
                protein_rich_probability: 0.0,
                rich_protein_range: [0.08, 0.12],
                lean_protein_range: [0.0, 0.02],
                sugar_range: [0.008, 0.06],
            },
        };
        MissionConfig {
            scenario,
            calibration,
            ..MissionConfig::default()
        }
    }

    fn phase_trace(events: &[TelemetryEvent]) -> Vec<(MissionPhase, MissionPhase)> {
        events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::PhaseChange {
                    phase_from,
                    phase_to,
                    ..
                } => Some((phase_from, phase_to)),
                _ => None,
            })
            .collect()
    }

    const NOMINAL_SITE_CYCLE: [MissionPhase; 13] = [
        MissionPhase::Deploying,
        MissionPhase::Ranging,
        MissionPhase::DrillDescent,
        MissionPhase::Excavating,
        MissionPhase::DrillRetract,
        MissionPhase::Vacuuming,
        MissionPhase::Depositing,
        MissionPhase::Dispensing,
        MissionPhase::Reacting,
        MissionPhase::Imaging,
        MissionPhase::BinRotating,
        MissionPhase::Stowing,
        MissionPhase::SiteAdvance,
    ];

    #[test]
    fn start_deploys_and_commands_the_pulley_forward() {
        let mut mission = Mission::new(fast_config(1)).unwrap();
        assert_eq!(mission.state.phase, MissionPhase::Idle);
        mission.start();
        assert_eq!(mission.state.phase, MissionPhase::Deploying);
        mission.step();
        let bridge = mission.devices.bridges[Actuator::Pulley.index()];
        assert!(bridge.in1 && !bridge.in2);
        assert_eq!(bridge.enable_duty, 1.0);
        // Forward rotation pays rope out, so the module is going down.
        assert!(mission.devices.rig.module_height_m < mission.config.mechanism.rail_travel_m);
    }

    #[test]
    fn header_is_the_first_event() {
        let mut mission = Mission::new(fast_config(1)).unwrap();
        mission.start();
        match &mission.events()[0].kind {
            EventKind::Header {
                schema_version,
                seed,
                dt_s,
                n_sites,
            } => {
                assert_eq!(*schema_version, TELEMETRY_SCHEMA_VERSION);
                assert_eq!(*seed, 42);
                assert_eq!(*dt_s, 0.01);
                assert_eq!(*n_sites, 1);
            }
            other => panic!("expected header, got {other:?}"),
        }
    }

    #[test]
    fn single_site_mission_completes_with_the_nominal_trace() {
        let (report, events) = run_mission(&fast_config(1)).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Complete);
        assert_eq!(report.sites_visited, 1);
        assert_eq!(report.results.len(), 2);
        assert_eq!(report.protein_positive_count, 1);
        assert_eq!(report.carb_positive_count, 1);
        assert_eq!(report.indeterminate_count, 0);
        assert_eq!(report.chamber_reuse_count, 0);
        assert!(report.fault_reason.is_none());

        let trace = phase_trace(&events);
        let mut expected = vec![(MissionPhase::Idle, MissionPhase::Deploying)];
        for pair in NOMINAL_SITE_CYCLE.windows(2) {
            expected.push((pair[0], pair[1]));
        }
        expected.push((MissionPhase::SiteAdvance, MissionPhase::Complete));
        assert_eq!(trace, expected);
    }

    #[test]
    fn every_transition_is_legal_and_every_event_ordered() {
        let (_, events) = run_mission(&fast_config(2)).unwrap();
        for (from, to) in phase_trace(&events) {
            assert!(MissionPhase::is_legal_transition(from, to), "{from:?} -> {to:?}");
        }
        for pair in events.windows(2) {
            assert!(pair[1].seq > pair[0].seq);
            assert!(pair[1].t_s >= pair[0].t_s);
        }
    }

    #[test]
    fn missions_are_deterministic() {
        let config = fast_config(2);
        let (report_a, events_a) = run_mission(&config).unwrap();
        let (report_b, events_b) = run_mission(&config).unwrap();
        assert_eq!(report_a, report_b);
        assert_eq!(events_a, events_b);
    }

    #[test]
    fn ranging_dropout_faults_with_the_phase_label() {
        let mut config = fast_config(1);
        config.fault_schedule = vec![FaultWindow {
            time_s: 0.0,
            fault: FaultKind::UltrasonicDropout,
            duration_s: 30.0,
        }];
        let (report, events) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Fault);
        assert_eq!(report.fault_reason.as_deref(), Some("ranging timeout"));

        // All drive commands must be zero at the fault, and the stream
        // must close with fault, phase change, report, in that order.
        let kinds: Vec<&EventKind> = events.iter().map(|e| &e.kind).collect();
        let fault_at = kinds
            .iter()
            .position(|k| matches!(k, EventKind::FaultEvent { .. }))
            .unwrap();
        assert!(matches!(
            kinds[fault_at + 1],
            EventKind::PhaseChange {
                phase_to: MissionPhase::Fault,
                ..
            }
        ));
        assert!(matches!(kinds[fault_at + 2], EventKind::ReportEvent(_)));
        assert_eq!(fault_at + 3, kinds.len());

        let mut mission = Mission::new(config).unwrap();
        mission.start();
        mission.run_to_end();
        for bridge in mission.devices.bridges {
            assert_eq!(bridge.enable_duty, 0.0);
        }
    }

    #[test]
    fn stalled_motors_starve_their_phases_until_timeout() {
        // A stalled pulley cannot pay rope out, so the deploy hangs.
        let mut config = fast_config(1);
        config.fault_schedule = vec![FaultWindow {
            time_s: 0.0,
            fault: FaultKind::MotorStall(Actuator::Pulley),
            duration_s: 1_000.0,
        }];
        let (report, _) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Fault);
        assert_eq!(report.fault_reason.as_deref(), Some("deploying timeout"));

        // A stalled drill still rides its servo to depth, but loosens
        // nothing once there.
        let mut config = fast_config(1);
        config.fault_schedule = vec![FaultWindow {
            time_s: 2.0,
            fault: FaultKind::MotorStall(Actuator::Drill),
            duration_s: 1_000.0,
        }];
        let (report, _) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Fault);
        assert_eq!(report.fault_reason.as_deref(), Some("excavating timeout"));
    }

    #[test]
    fn chamber_reuse_is_counted_or_refused() {
        let config = fast_config(2);
        let (report, _) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Complete);
        // Two sites: the protein chamber is reused once; the sugar test
        // alternates chambers, so neither Benedict chamber repeats.
        assert_eq!(report.chamber_reuse_count, 1);

        let mut config = fast_config(2);
        config.allow_chamber_reuse = false;
        let (report, _) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Fault);
        assert_eq!(
            report.fault_reason.as_deref(),
            Some("chamber reuse disallowed")
        );
        assert_eq!(report.sites_visited, 2);
    }

    #[test]
    fn insufficient_soil_reads_out_as_indeterminate() {
        let mut config = fast_config(1);
        // Excavation stops at the target, so a target below the assay
        // minimum guarantees a short dispense.
        config.mechanism.excavation_target_g = 1.0;
        let (report, _) = run_mission(&config).unwrap();
        assert_eq!(report.end_phase, MissionPhase::Complete);
        assert_eq!(report.indeterminate_count, 2);
        assert_eq!(report.protein_positive_count, 0);
        assert_eq!(report.carb_positive_count, 0);
        for result in &report.results {
            assert_eq!(result.verdict, Verdict::Indeterminate);
            assert_eq!(result.hue_distance_deg, None);
            assert_eq!(result.band, None);
        }
    }

    #[test]
    fn empty_worlds_are_rejected() {
        let config = fast_config(1);
        let world = World {
            sites: Vec::new(),
            current_site: 0,
            rng_seed: 0,
        };
        assert!(matches!(
            Mission::with_world(config, world),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn soil_mass_is_conserved_end_to_end() {
        let mut mission = Mission::new(fast_config(3)).unwrap();
        mission.start();
        mission.run_to_end();
        assert_eq!(mission.state.phase, MissionPhase::Complete);

        let vessel_mass: f64 = mission.vessels.iter().map(|v| v.vessel.soil_mass_g).sum();
        assert!(vessel_mass > 0.0);
        let pile_residue: f64 = mission.world.sites.iter().map(|s| s.loosened_pile_g).sum();
        let accounted = mission.total_dispensed_g
            + mission.bin_mass_g
            + pile_residue
            + mission.devices.container.lost_mass_g
            + mission.devices.container.collected_mass_g;
        assert!(
            (mission.total_loosened_g - accounted).abs() <= 1e-9,
            "loosened {} vs accounted {accounted}",
            mission.total_loosened_g
        );
    }

    #[test]
    fn dispensing_waits_for_suction_to_die() {
        let mut mission = Mission::new(fast_config(1)).unwrap();
        mission.start();
        let impeller = mission.config.vacuum.impeller;
        while !mission.state.phase.is_terminal() {
            if mission.state.phase == MissionPhase::Dispensing {
                assert!(!impeller.suction_active(mission.devices.vacuum_motor.speed_radps));
            }
            mission.step();
        }
    }

    #[test]
    fn bin_rotation_advances_the_chamber_index_mod_three() {
        let mut mission = Mission::new(fast_config(4)).unwrap();
        mission.start();
        let mut seen = Vec::new();
        let mut last = mission.state.chamber_index;
        seen.push(last);
        while !mission.state.phase.is_terminal() {
            mission.step();
            if mission.state.chamber_index != last {
                last = mission.state.chamber_index;
                seen.push(last);
            }
        }
        assert_eq!(mission.state.phase, MissionPhase::Complete);
        assert_eq!(seen, vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn report_matches_result_list() {
        let (report, _) = run_mission(&fast_config(3)).unwrap();
        assert_eq!(report.results.len(), 6);
        let protein = report
            .results
            .iter()
            .filter(|r| r.test_kind == TestKind::Protein && r.verdict == Verdict::Positive)
            .count() as u32;
        assert_eq!(report.protein_positive_count, protein);
    }
}
