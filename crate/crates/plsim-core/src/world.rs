//! Synthetic soil world.
//!
//! A scenario file pins the chemistry of each dig site; everything the
//! hardware later measures (drill torque response, assay color) traces
//! back to the fields sampled here. Generation draws exactly five values
//! per site from the world stream, so site k's terrain is independent of
//! how many sites precede it in the file only through the draw order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, RngStream, SimRng};

/// Terrain fields are sampled from these fixed ranges; chemistry comes
/// from the scenario profile.
pub const HARDNESS_RANGE: [f64; 2] = [0.1, 0.5];
pub const SURFACE_DISTANCE_RANGE_M: [f64; 2] = [0.06, 0.14];

/// One dig site. Fractions are mass fractions of the solid phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SoilSite {
    pub protein_fraction: f64,
    pub sugar_fraction: f64,
    /// 0 = loose regolith, 1 = undrillable rock.
    pub hardness: f64,
    /// Module base to ground with the gantry fully lowered.
    pub surface_distance_m: f64,
    /// Drill tailings available for pickup, grams.
    pub loosened_pile_g: f64,
}

impl SoilSite {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.protein_fraction) || !in_unit(self.sugar_fraction) {
            return Err(Error::Config(format!(
                "site fractions out of [0, 1]: protein {}, sugar {}",
                self.protein_fraction, self.sugar_fraction
            )));
        }
        if self.protein_fraction + self.sugar_fraction > 1.0 {
            return Err(Error::Config(format!(
                "site fractions sum above 1: protein {} + sugar {}",
                self.protein_fraction, self.sugar_fraction
            )));
        }
        if !in_unit(self.hardness) {
            return Err(Error::Config(format!("hardness out of [0, 1]: {}", self.hardness)));
        }
        if !(self.surface_distance_m > 0.0) {
            return Err(Error::Config(format!(
                "surface distance must be positive, got {}",
                self.surface_distance_m
            )));
        }
        if self.loosened_pile_g < 0.0 {
            return Err(Error::Config(format!(
                "loosened pile cannot be negative, got {}",
                self.loosened_pile_g
            )));
        }
        Ok(())
    }

    /// Take up to `mass_g` from the loosened pile. Emptying the pile
    /// leaves exactly 0.0 behind, never a small negative residue.
    pub fn withdraw_loosened(&mut self, mass_g: f64) -> Result<SoilSample> {
        if mass_g < 0.0 {
            return Err(Error::Argument(format!("cannot withdraw negative mass {mass_g}")));
        }
        let taken = if mass_g >= self.loosened_pile_g {
            let all = self.loosened_pile_g;
            self.loosened_pile_g = 0.0;
            all
        } else {
            self.loosened_pile_g -= mass_g;
            mass_g
        };
        Ok(SoilSample {
            mass_g: taken,
            protein_fraction: self.protein_fraction,
            sugar_fraction: self.sugar_fraction,
        })
    }
}

/// A parcel of soil in transit. Composition rides along unchanged from
/// the site it was dug at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoilSample {
    pub mass_g: f64,
    pub protein_fraction: f64,
    pub sugar_fraction: f64,
}

/// Chemistry sampling profile for generated sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioProfile {
    pub protein_rich_probability: f64,
    pub rich_protein_range: [f64; 2],
    pub lean_protein_range: [f64; 2],
    pub sugar_range: [f64; 2],
}

impl ScenarioProfile {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.protein_rich_probability) {
            return Err(Error::Config(format!(
                "protein_rich_probability out of [0, 1]: {}",
                self.protein_rich_probability
            )));
        }
        for (name, range) in [
            ("rich_protein_range", self.rich_protein_range),
            ("lean_protein_range", self.lean_protein_range),
            ("sugar_range", self.sugar_range),
        ] {
            if !(0.0 <= range[0] && range[0] <= range[1] && range[1] <= 1.0) {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 <= lo <= hi <= 1, got [{}, {}]",
                    range[0], range[1]
                )));
            }
        }
        Ok(())
    }
}

/// Pin selected fields of one generated site. `None` keeps the sampled value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteOverride {
    pub index: usize,
    #[serde(default)]
    pub protein_fraction: Option<f64>,
    #[serde(default)]
    pub sugar_fraction: Option<f64>,
    #[serde(default)]
    pub hardness: Option<f64>,
    #[serde(default)]
    pub surface_distance_m: Option<f64>,
    #[serde(default)]
    pub loosened_pile_g: Option<f64>,
}

/// Declarative scenario: how many sites, how their chemistry is drawn,
/// and which sites are pinned to exact values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub n_sites: usize,
    #[serde(default)]
    pub explicit_sites: Vec<SiteOverride>,
    pub profile: ScenarioProfile,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported scenario schema_version {}",
                self.schema_version
            )));
        }
        if self.n_sites == 0 {
            return Err(Error::Config("scenario needs at least one site".into()));
        }
        self.profile.validate()?;
        for site in &self.explicit_sites {
            if site.index >= self.n_sites {
                return Err(Error::Config(format!(
                    "explicit site index {} outside 0..{}",
                    site.index, self.n_sites
                )));
            }
        }
        Ok(())
    }

    /// Bundled ten-site field trial: two protein-rich sites pinned at
    /// indices 3 and 7, every site sugar-bearing. The lean protein range
    /// stays below assay visibility and the sugar range above the trace
    /// band, so the positive counts hold for any seed.
    pub fn urc10() -> Self {
        ScenarioSpec {
            schema_version: 1,
            n_sites: 10,
            explicit_sites: vec![
                SiteOverride {
                    index: 3,
                    protein_fraction: Some(0.10),
                    sugar_fraction: None,
                    hardness: None,
                    surface_distance_m: None,
                    loosened_pile_g: None,
                },
                SiteOverride {
                    index: 7,
                    protein_fraction: Some(0.12),
                    sugar_fraction: None,
                    hardness: None,
                    surface_distance_m: None,
                    loosened_pile_g: None,
                },
            ],
            profile: ScenarioProfile {
                protein_rich_probability: 0.0,
                rich_protein_range: [0.08, 0.12],
                lean_protein_range: [0.0, 0.02],
                sugar_range: [0.008, 0.06],
            },
        }
    }
}

/// Uniform draw that always consumes exactly one value, even for a
/// degenerate range, so site draw counts stay fixed.
fn uniform(rng: &mut SimRng, range: [f64; 2]) -> f64 {
    let u: f64 = rand::Rng::random(rng);
    range[0] + (range[1] - range[0]) * u
}

/// Generate the site list for `spec` under `seed`. Deterministic: the
/// same inputs always produce the same sites.
pub fn generate_sites(seed: u64, spec: &ScenarioSpec) -> Result<Vec<SoilSite>> {
    spec.validate()?;
    let mut rng = stream_rng(seed, RngStream::WorldGen);
    let mut sites = Vec::with_capacity(spec.n_sites);
    for _ in 0..spec.n_sites {
        // Draw order per site is fixed: rich?, protein, sugar, hardness, distance.
        let rich: f64 = rand::Rng::random(&mut rng);
        let protein_range = if rich < spec.profile.protein_rich_probability {
            spec.profile.rich_protein_range
        } else {
            spec.profile.lean_protein_range
        };
        sites.push(SoilSite {
            protein_fraction: uniform(&mut rng, protein_range),
            sugar_fraction: uniform(&mut rng, spec.profile.sugar_range),
            hardness: uniform(&mut rng, HARDNESS_RANGE),
            surface_distance_m: uniform(&mut rng, SURFACE_DISTANCE_RANGE_M),
            loosened_pile_g: 0.0,
        });
    }
    for pin in &spec.explicit_sites {
        let site = &mut sites[pin.index];
        if let Some(v) = pin.protein_fraction {
            site.protein_fraction = v;
        }
        if let Some(v) = pin.sugar_fraction {
            site.sugar_fraction = v;
        }
        if let Some(v) = pin.hardness {
            site.hardness = v;
        }
        if let Some(v) = pin.surface_distance_m {
            site.surface_distance_m = v;
        }
        if let Some(v) = pin.loosened_pile_g {
            site.loosened_pile_g = v;
        }
    }
    for site in &sites {
        site.validate()?;
    }
    Ok(sites)
}

/// The generated world plus the cursor of the site being worked.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub sites: Vec<SoilSite>,
    pub current_site: usize,
    pub rng_seed: u64,
}

impl World {
    pub fn from_scenario(seed: u64, spec: &ScenarioSpec) -> Result<World> {
        Ok(World {
            sites: generate_sites(seed, spec)?,
            current_site: 0,
            rng_seed: seed,
        })
    }
}
