//! Wet chemistry: reagent mixing, color development for the protein and
//! reducing-sugar tests, and decanting until the supernatant is readable.
//!
//! All color constants, band edges, thresholds, and time constants live
//! in one calibration table shared with the perception stage, so the two
//! ends of the pipeline can never disagree about what "green" means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::SoilSample;

/// HSV triple. Hue in degrees [0, 360); saturation and value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorHSV {
    pub hue_deg: f64,
    pub saturation: f64,
    pub value: f64,
}

/// Wrap any hue angle into [0, 360).
pub fn wrap_hue_deg(hue: f64) -> f64 {
    let wrapped = hue % 360.0;
    if wrapped < 0.0 {
        wrapped + 360.0
    } else {
        wrapped
    }
}

/// Circular distance between two hues, in [0, 180].
pub fn hue_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// Signed shortest rotation from hue `a` to hue `b`, in (-180, 180].
pub fn signed_hue_delta_deg(a: f64, b: f64) -> f64 {
    let mut d = (b - a) % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Sugar-test color bands in order of increasing concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Blue,
    Green,
    Yellow,
    BrickRed,
}

/// Band edges in g/L. A concentration at an edge belongs to the higher band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenedictBands {
    pub trace_gpl: f64,
    pub green_hi_gpl: f64,
    pub yellow_hi_gpl: f64,
}

impl Default for BenedictBands {
    fn default() -> Self {
        BenedictBands {
            trace_gpl: 0.5,
            green_hi_gpl: 2.5,
            yellow_hi_gpl: 10.0,
        }
    }
}

impl BenedictBands {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.trace_gpl
            && self.trace_gpl < self.green_hi_gpl
            && self.green_hi_gpl < self.yellow_hi_gpl)
        {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < trace < green_hi < yellow_hi, got {}, {}, {}",
                self.trace_gpl, self.green_hi_gpl, self.yellow_hi_gpl
            )));
        }
        Ok(())
    }
}

/// Band for a sugar concentration. Monotone step function; edges are
/// inclusive for the higher band.
pub fn benedict_band(sugar_conc_gpl: f64, bands: &BenedictBands) -> Band {
    if sugar_conc_gpl >= bands.yellow_hi_gpl {
        Band::BrickRed
    } else if sugar_conc_gpl >= bands.green_hi_gpl {
        Band::Yellow
    } else if sugar_conc_gpl >= bands.trace_gpl {
        Band::Green
    } else {
        Band::Blue
    }
}

/// Camera noise applied at capture time, one sigma per HSV channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureNoise {
    pub hue_sigma_deg: f64,
    pub sat_sigma: f64,
    pub val_sigma: f64,
}

impl Default for CaptureNoise {
    fn default() -> Self {
        CaptureNoise {
            hue_sigma_deg: 4.0,
            sat_sigma: 0.03,
            val_sigma: 0.03,
        }
    }
}

/// The shared chemistry/perception calibration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssayCalibration {
    pub hue_blue_deg: f64,
    pub hue_green_deg: f64,
    pub hue_yellow_deg: f64,
    pub hue_brick_red_deg: f64,
    pub hue_purple_deg: f64,
    pub saturation: f64,
    pub base_value: f64,
    /// Value shift for "deep" (darkened) positives.
    pub deep_value_delta: f64,
    pub bands: BenedictBands,
    pub biuret_threshold_gpl: f64,
    pub tau_react_s: f64,
    pub tau_decant_s: f64,
    pub min_decant_s: f64,
    pub max_readable_turbidity: f64,
    /// Classification window around each canonical hue.
    pub hue_window_deg: f64,
    pub capture_noise: CaptureNoise,
}

impl Default for AssayCalibration {
    fn default() -> Self {
        AssayCalibration {
            hue_blue_deg: 210.0,
            hue_green_deg: 120.0,
            hue_yellow_deg: 55.0,
            hue_brick_red_deg: 15.0,
            hue_purple_deg: 270.0,
            saturation: 0.8,
            base_value: 0.8,
            deep_value_delta: -0.2,
            bands: BenedictBands::default(),
            biuret_threshold_gpl: 10.0,
            tau_react_s: 30.0,
            tau_decant_s: 60.0,
            min_decant_s: 120.0,
            max_readable_turbidity: 0.2,
            hue_window_deg: 20.0,
            capture_noise: CaptureNoise::default(),
        }
    }
}

impl AssayCalibration {
    pub fn validate(&self) -> Result<()> {
        for (name, hue) in [
            ("blue", self.hue_blue_deg),
            ("green", self.hue_green_deg),
            ("yellow", self.hue_yellow_deg),
            ("brick red", self.hue_brick_red_deg),
            ("purple", self.hue_purple_deg),
        ] {
            if !(0.0..360.0).contains(&hue) {
                return Err(Error::Config(format!("{name} hue out of [0, 360): {hue}")));
            }
        }
        if !(0.0..=1.0).contains(&self.saturation) || !(0.0..=1.0).contains(&self.base_value) {
            return Err(Error::Config("saturation and value must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&(self.base_value + self.deep_value_delta)) {
            return Err(Error::Config(format!(
                "deep value {} falls outside [0, 1]",
                self.base_value + self.deep_value_delta
            )));
        }
        self.bands.validate()?;
        if self.biuret_threshold_gpl <= 0.0 {
            return Err(Error::Config(format!(
                "protein threshold must be positive, got {}",
                self.biuret_threshold_gpl
            )));
        }
        // Sensitivity ordering: a sugar trace must read positive at
        // concentrations where the protein test still reads negative.
        if self.bands.trace_gpl >= self.biuret_threshold_gpl {
            return Err(Error::Config(format!(
                "sugar trace edge {} must sit below the protein threshold {}",
                self.bands.trace_gpl, self.biuret_threshold_gpl
            )));
        }
        if self.tau_react_s <= 0.0 || self.tau_decant_s <= 0.0 {
            return Err(Error::Config("reaction time constants must be positive".into()));
        }
        if self.min_decant_s < 0.0 || !(0.0..=1.0).contains(&self.max_readable_turbidity) {
            return Err(Error::Config("decant gate parameters out of range".into()));
        }
        if self.hue_window_deg <= 0.0 || self.hue_window_deg > 180.0 {
            return Err(Error::Config(format!(
                "hue window must lie in (0, 180], got {}",
                self.hue_window_deg
            )));
        }
        let noise = &self.capture_noise;
        if noise.hue_sigma_deg < 0.0 || noise.sat_sigma < 0.0 || noise.val_sigma < 0.0 {
            return Err(Error::Config("capture noise sigmas cannot be negative".into()));
        }
        Ok(())
    }

    pub fn band_hue_deg(&self, band: Band) -> f64 {
        match band {
            Band::Blue => self.hue_blue_deg,
            Band::Green => self.hue_green_deg,
            Band::Yellow => self.hue_yellow_deg,
            Band::BrickRed => self.hue_brick_red_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReagentKind {
    Biuret,
    Benedict,
}

/// Pre-filled reagent charge for one chamber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reagent {
    pub kind: ReagentKind,
    pub volume_ml: f64,
    pub base_color: ColorHSV,
}

impl Reagent {
    fn base_blue(cal: &AssayCalibration) -> ColorHSV {
        ColorHSV {
            hue_deg: cal.hue_blue_deg,
            saturation: cal.saturation,
            value: cal.base_value,
        }
    }

    /// Copper(II) protein reagent, 7 mL charge.
    pub fn biuret(cal: &AssayCalibration) -> Self {
        Reagent {
            kind: ReagentKind::Biuret,
            volume_ml: 7.0,
            base_color: Self::base_blue(cal),
        }
    }

    /// Reducing-sugar reagent, 7 mL charge.
    pub fn benedict(cal: &AssayCalibration) -> Self {
        Reagent {
            kind: ReagentKind::Benedict,
            volume_ml: 7.0,
            base_color: Self::base_blue(cal),
        }
    }
}

/// One chamber's mixture: soil plus reagent, reacting and settling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionVessel {
    pub reagent: Reagent,
    pub soil_mass_g: f64,
    pub protein_conc_gpl: f64,
    pub sugar_conc_gpl: f64,
    pub elapsed_reaction_s: f64,
    pub decant_s: f64,
    pub turbidity: f64,
    pub current_color: ColorHSV,
    /// Set when the soil charge missed the 2-3 g procedure window.
    pub mass_warning: bool,
}

/// Stir a soil sample into a reagent charge.
pub fn mix_sample(sample: &SoilSample, reagent: Reagent) -> Result<ReactionVessel> {
    if reagent.volume_ml <= 0.0 {
        return Err(Error::Assay(format!(
            "reagent volume must be positive, got {} mL",
            reagent.volume_ml
        )));
    }
    if sample.mass_g <= 0.0 {
        return Err(Error::Assay(format!(
            "insufficient sample: {} g",
            sample.mass_g
        )));
    }
    let volume_l = reagent.volume_ml / 1000.0;
    Ok(ReactionVessel {
        reagent,
        soil_mass_g: sample.mass_g,
        protein_conc_gpl: sample.mass_g * sample.protein_fraction / volume_l,
        sugar_conc_gpl: sample.mass_g * sample.sugar_fraction / volume_l,
        elapsed_reaction_s: 0.0,
        decant_s: 0.0,
        turbidity: 1.0,
        current_color: reagent.base_color,
        mass_warning: !(2.0..=3.0).contains(&sample.mass_g),
    })
}

impl ReactionVessel {
    /// Color the chemistry is heading toward, given the mixture.
    pub fn target_color(&self, cal: &AssayCalibration) -> ColorHSV {
        match self.reagent.kind {
            ReagentKind::Biuret => {
                if self.protein_conc_gpl >= cal.biuret_threshold_gpl {
                    ColorHSV {
                        hue_deg: cal.hue_purple_deg,
                        saturation: cal.saturation,
                        value: cal.base_value + cal.deep_value_delta,
                    }
                } else {
                    self.reagent.base_color
                }
            }
            ReagentKind::Benedict => {
                let band = benedict_band(self.sugar_conc_gpl, &cal.bands);
                ColorHSV {
                    hue_deg: cal.band_hue_deg(band),
                    saturation: cal.saturation,
                    value: cal.base_value,
                }
            }
        }
    }

    /// Relax the vessel color exponentially toward the chemistry target.
    /// Hue moves along the shorter way around the circle.
    pub fn react_step(&mut self, cal: &AssayCalibration, dt: f64) {
        debug_assert!(dt > 0.0);
        let target = self.target_color(cal);
        let alpha = 1.0 - (-dt / cal.tau_react_s).exp();
        let dh = signed_hue_delta_deg(self.current_color.hue_deg, target.hue_deg);
        self.current_color.hue_deg = wrap_hue_deg(self.current_color.hue_deg + alpha * dh);
        self.current_color.saturation += alpha * (target.saturation - self.current_color.saturation);
        self.current_color.value += alpha * (target.value - self.current_color.value);
        self.elapsed_reaction_s += dt;
    }

    /// Let suspended soil settle; turbidity decays exponentially.
    pub fn decant_step(&mut self, cal: &AssayCalibration, dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Err(Error::Argument(format!(
                "decant step needs dt > 0, got {dt}"
            )));
        }
        self.turbidity *= (-dt / cal.tau_decant_s).exp();
        self.decant_s += dt;
        Ok(())
    }

    /// The supernatant color can be judged only after enough settling.
    pub fn readable(&self, cal: &AssayCalibration) -> bool {
        self.decant_s >= cal.min_decant_s && self.turbidity < cal.max_readable_turbidity
    }

    /// Noise-free color accessor for the capture stage.
    pub fn true_color(&self) -> ColorHSV {
        self.current_color
    }
}
