//! Centrifugal suction: forced-vortex impeller pressure field, a suction
//! gate on the pressure rise at the rim, soil transport through the
//! filter, and post-shutdown settling into the bin channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::SoilSite;

/// Forced-vortex impeller: pressure rises from the axis as p(r) = 1/2 rho w^2 r^2,
/// so the center is the low-pressure zone that draws air inward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpellerModel {
    pub outer_radius_m: f64,
    pub air_density_kgpm3: f64,
    /// Minimum rim pressure rise for effective soil pickup.
    pub min_suction_delta_p_pa: f64,
}

impl Default for ImpellerModel {
    fn default() -> Self {
        ImpellerModel {
            outer_radius_m: 0.04,
            air_density_kgpm3: 1.2,
            min_suction_delta_p_pa: 300.0,
        }
    }
}

impl ImpellerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_radius_m > 0.0) || !(self.air_density_kgpm3 > 0.0) {
            return Err(Error::Config(format!(
                "impeller radius and air density must be positive, got {} m, {} kg/m^3",
                self.outer_radius_m, self.air_density_kgpm3
            )));
        }
        if self.min_suction_delta_p_pa < 0.0 {
            return Err(Error::Config(format!(
                "suction threshold cannot be negative, got {}",
                self.min_suction_delta_p_pa
            )));
        }
        Ok(())
    }

    /// Pressure rise above the axis at radius `r` for rotor speed `omega`.
    pub fn delta_p(&self, r_m: f64, omega_radps: f64) -> Result<f64> {
        if !(0.0..=self.outer_radius_m).contains(&r_m) {
            return Err(Error::Argument(format!(
                "radius {} m outside impeller [0, {}]",
                r_m, self.outer_radius_m
            )));
        }
        Ok(0.5 * self.air_density_kgpm3 * omega_radps * omega_radps * r_m * r_m)
    }

    /// Soil pickup needs the rim pressure rise to reach the threshold.
    pub fn suction_active(&self, omega_radps: f64) -> bool {
        debug_assert!(omega_radps >= 0.0);
        self.delta_p(self.outer_radius_m, omega_radps)
            .expect("rim radius is in range")
            >= self.min_suction_delta_p_pa
    }
}

/// Filter-and-container state on the suction path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacuumContainer {
    /// Grams that moved through the airstream this step (diagnostic;
    /// already landed in collected or lost).
    pub airborne_mass_g: f64,
    pub collected_mass_g: f64,
    /// Escaped through the diffuser past the filter.
    pub lost_mass_g: f64,
    pub filter_efficiency: f64,
    /// Fault flag: a clogged filter moves nothing.
    pub clogged: bool,
}

impl VacuumContainer {
    pub fn new(filter_efficiency: f64) -> Self {
        VacuumContainer {
            airborne_mass_g: 0.0,
            collected_mass_g: 0.0,
            lost_mass_g: 0.0,
            filter_efficiency,
            clogged: false,
        }
    }

    /// Move up to q*dt grams of tailings from the site into the container,
    /// split by filter efficiency. The lost share is the exact complement
    /// of the collected share, so the ledger stays balanced to the bit.
    pub fn transport_step(&mut self, site: &mut SoilSite, active: bool, q_gps: f64, dt: f64) {
        debug_assert!(dt > 0.0 && q_gps >= 0.0);
        self.airborne_mass_g = 0.0;
        if !active || self.clogged {
            return;
        }
        let sample = site
            .withdraw_loosened(q_gps * dt)
            .expect("transport request is non-negative");
        if sample.mass_g == 0.0 {
            return;
        }
        self.airborne_mass_g = sample.mass_g;
        let collected = self.filter_efficiency * sample.mass_g;
        let lost = sample.mass_g - collected;
        self.collected_mass_g += collected;
        self.lost_mass_g += lost;
    }

    /// Once the rotor is effectively stopped, everything on the filter
    /// drops through the bottom channel. Returns the grams delivered.
    pub fn settle_to_bin(&mut self, vacuum_omega_radps: f64, stop_threshold_radps: f64) -> f64 {
        if vacuum_omega_radps.abs() >= stop_threshold_radps {
            return 0.0;
        }
        let delivered = self.collected_mass_g;
        self.collected_mass_g = 0.0;
        self.airborne_mass_g = 0.0;
        delivered
    }
}
