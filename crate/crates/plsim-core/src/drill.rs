//! Gear-rack drill carriage: servo-driven descent to the ranged ground
//! plane, rotary excavation into a tailings pile, and retraction.
//!
//! Contact is geometric: the carriage compares its bit tip against the
//! ground distance measured during ranging. There is no force sensing.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hal::MotorState;
use crate::world::SoilSite;

/// Bit and travel geometry. The deformation and safety-factor fields
/// document the structural analysis of the carriage; nothing in the
/// simulation consumes them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrillGeometry {
    pub bit_length_m: f64,
    pub shank_diameter_m: f64,
    pub max_depth_m: f64,
    pub doc_deformation_um: f64,
    pub doc_factor_of_safety: f64,
}

impl Default for DrillGeometry {
    fn default() -> Self {
        DrillGeometry {
            // 3.5 in spiral flute bit with a 0.25 in shank.
            bit_length_m: 0.0889,
            shank_diameter_m: 0.00635,
            // 1.88 in of usable plunge.
            max_depth_m: 0.047752,
            doc_deformation_um: 47.563,
            doc_factor_of_safety: 15.0,
        }
    }
}

impl DrillGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.max_depth_m && self.max_depth_m < self.bit_length_m) {
            return Err(Error::Config(format!(
                "drill geometry needs 0 < max_depth < bit_length, got {} vs {}",
                self.max_depth_m, self.bit_length_m
            )));
        }
        if self.shank_diameter_m <= 0.0 {
            return Err(Error::Config(format!(
                "shank diameter must be positive, got {}",
                self.shank_diameter_m
            )));
        }
        Ok(())
    }
}

/// Vertically translating drill carriage. Positions are meters below the
/// module base plate; negative means retracted above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrillCarriage {
    pub bit_tip_position_m: f64,
    /// Retract limit of the gear rack.
    pub home_tip_position_m: f64,
    /// Ground plane measured during the last ranging, if any.
    pub ground_plane_m: Option<f64>,
    pub in_contact: bool,
    pub depth_in_soil_m: f64,
}

impl DrillCarriage {
    pub fn new(home_tip_position_m: f64) -> Self {
        DrillCarriage {
            bit_tip_position_m: home_tip_position_m,
            home_tip_position_m,
            ground_plane_m: None,
            in_contact: false,
            depth_in_soil_m: 0.0,
        }
    }

    fn refresh_contact(&mut self, geometry: &DrillGeometry) {
        match self.ground_plane_m {
            Some(ground) if self.bit_tip_position_m >= ground => {
                self.in_contact = true;
                self.depth_in_soil_m =
                    (self.bit_tip_position_m - ground).clamp(0.0, geometry.max_depth_m);
            }
            _ => {
                self.in_contact = false;
                self.depth_in_soil_m = 0.0;
            }
        }
    }

    /// Drive the carriage down toward the measured ground plane. The tip
    /// stops advancing once the bit is at its full plunge depth.
    pub fn descend_step(
        &mut self,
        geometry: &DrillGeometry,
        servo_rate_mps: f64,
        dt: f64,
        measured_ground_m: f64,
    ) {
        debug_assert!(dt > 0.0 && servo_rate_mps >= 0.0);
        self.ground_plane_m = Some(measured_ground_m);
        let plunge_limit = measured_ground_m + geometry.max_depth_m;
        self.bit_tip_position_m = (self.bit_tip_position_m + servo_rate_mps * dt).min(plunge_limit);
        self.refresh_contact(geometry);
    }

    /// True once the tip is parked on the plunge stop. Checked against
    /// the stop position itself: the depth field is a subtraction and
    /// can sit an ulp under the cap forever.
    pub fn at_full_plunge(&self, geometry: &DrillGeometry) -> bool {
        match self.ground_plane_m {
            Some(ground) => self.bit_tip_position_m >= ground + geometry.max_depth_m,
            None => false,
        }
    }

    /// Raise the carriage back toward its home stop.
    pub fn retract_step(&mut self, geometry: &DrillGeometry, servo_rate_mps: f64, dt: f64) {
        debug_assert!(dt > 0.0 && servo_rate_mps >= 0.0);
        self.bit_tip_position_m =
            (self.bit_tip_position_m - servo_rate_mps * dt).max(self.home_tip_position_m);
        self.refresh_contact(geometry);
    }

    /// Loosen soil for one step: k grams per bit revolution, derated by
    /// site hardness, gated on contact and a spinning bit. Returns the
    /// grams added to the site's tailings pile.
    pub fn excavate_step(
        &self,
        drill_motor: &MotorState,
        site: &mut SoilSite,
        k_g_per_rev: f64,
        dt: f64,
    ) -> f64 {
        debug_assert!(dt > 0.0 && k_g_per_rev >= 0.0);
        if !self.in_contact || drill_motor.speed_radps == 0.0 {
            return 0.0;
        }
        let revolutions = drill_motor.speed_radps.abs() * dt / TAU;
        let loosened = k_g_per_rev * revolutions * (1.0 - site.hardness);
        site.loosened_pile_g += loosened;
        loosened
    }
}
