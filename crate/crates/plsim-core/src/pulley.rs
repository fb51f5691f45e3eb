//! Vertical deployment gantry: a motor-driven spool pays rope out or
//! reels it in, translating the module along its rail. Includes the
//! encoder-based height estimator used by the controller.

use std::f64::consts::TAU;

use crate::hal::{HBridgeChannel, MotorState};

/// Spool-and-rail rig. Height 0 means fully lowered (deployed);
/// `rail_travel_m` means stowed at the top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulleyRig {
    pub spool_radius_m: f64,
    pub rail_travel_m: f64,
    pub module_height_m: f64,
    pub motor: MotorState,
}

impl PulleyRig {
    pub fn new(spool_radius_m: f64, rail_travel_m: f64, motor: MotorState) -> Self {
        PulleyRig {
            spool_radius_m,
            rail_travel_m,
            // Missions begin stowed.
            module_height_m: rail_travel_m,
            motor,
        }
    }

    /// Advance the motor and convert spool rotation to height. Forward
    /// rotation pays rope out (module lowers). Height clamps at the rail
    /// ends; angle past a clamp does not bank up for later.
    pub fn step(&mut self, ch: &HBridgeChannel, dt: f64) {
        debug_assert!(dt > 0.0);
        let before = self.motor.cumulative_angle_rad;
        self.motor.step(ch, dt);
        let delta = self.motor.cumulative_angle_rad - before;
        self.module_height_m =
            (self.module_height_m - delta * self.spool_radius_m).clamp(0.0, self.rail_travel_m);
    }
}

/// Raw height estimate from encoder ticks. Unclamped: callers decide
/// what an out-of-rail estimate means.
pub fn height_from_encoder(ticks: i64, cpr: u32, spool_radius_m: f64, stow_height_m: f64) -> f64 {
    debug_assert!(cpr > 0);
    stow_height_m - ticks as f64 / f64::from(cpr) * TAU * spool_radius_m
}
