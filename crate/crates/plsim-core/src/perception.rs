//! Simulated camera and verdict classifier. The camera reports an HSV
//! triple with per-channel Gaussian noise; the classifier snaps the hue
//! to the nearest canonical assay color, with a fail-safe window so
//! ambiguous readings come back Indeterminate instead of wrong.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assay::{hue_distance_deg, wrap_hue_deg, AssayCalibration, Band, ColorHSV, ReactionVessel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    Protein,
    Carbohydrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Positive,
    Negative,
    Indeterminate,
}

/// One camera frame reduced to its decision-relevant signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorReading {
    pub observed: ColorHSV,
    /// Decant/turbidity gate at capture time.
    pub readable: bool,
    pub chamber_id: u8,
}

/// Final call for one test on one site's sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssayResult {
    pub test_kind: TestKind,
    pub verdict: Verdict,
    /// Sugar-test band; present iff the test is Carbohydrate and the
    /// verdict is not Indeterminate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    /// Circular distance to the nearest canonical hue. None when no
    /// reading was taken (for example, not enough sample to test).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hue_distance_deg: Option<f64>,
    pub site_id: u32,
}

/// Photograph a vessel: truth plus per-channel noise. Hue wraps around
/// the circle; saturation and value clamp to [0, 1].
pub fn capture(
    vessel: &ReactionVessel,
    chamber_id: u8,
    cal: &AssayCalibration,
    rng: &mut impl Rng,
) -> ColorReading {
    let truth = vessel.true_color();
    let noise = &cal.capture_noise;
    let zh: f64 = rng.sample(StandardNormal);
    let zs: f64 = rng.sample(StandardNormal);
    let zv: f64 = rng.sample(StandardNormal);
    ColorReading {
        observed: ColorHSV {
            hue_deg: wrap_hue_deg(truth.hue_deg + zh * noise.hue_sigma_deg),
            saturation: (truth.saturation + zs * noise.sat_sigma).clamp(0.0, 1.0),
            value: (truth.value + zv * noise.val_sigma).clamp(0.0, 1.0),
        },
        readable: vessel.readable(cal),
        chamber_id,
    }
}

/// Palette for one test kind: canonical hues in band order.
fn palette(test_kind: TestKind, cal: &AssayCalibration) -> Vec<(f64, Option<Band>)> {
    match test_kind {
        TestKind::Protein => vec![(cal.hue_blue_deg, None), (cal.hue_purple_deg, None)],
        TestKind::Carbohydrate => vec![
            (cal.hue_blue_deg, Some(Band::Blue)),
            (cal.hue_green_deg, Some(Band::Green)),
            (cal.hue_yellow_deg, Some(Band::Yellow)),
            (cal.hue_brick_red_deg, Some(Band::BrickRed)),
        ],
    }
}

/// Snap a reading to a verdict. Unreadable vessels, hues outside the
/// acceptance window, and distance ties all come back Indeterminate.
pub fn classify(
    reading: &ColorReading,
    test_kind: TestKind,
    cal: &AssayCalibration,
    site_id: u32,
) -> AssayResult {
    let entries = palette(test_kind, cal);
    let distances: Vec<f64> = entries
        .iter()
        .map(|(hue, _)| hue_distance_deg(reading.observed.hue_deg, *hue))
        .collect();
    let mut best = 0;
    for (i, d) in distances.iter().enumerate() {
        if *d < distances[best] {
            best = i;
        }
    }
    let d_min = distances[best];
    let tied = distances
        .iter()
        .enumerate()
        .filter(|(i, d)| *i != best && (**d - d_min).abs() <= 1e-9)
        .count()
        > 0;

    let indeterminate = AssayResult {
        test_kind,
        verdict: Verdict::Indeterminate,
        band: None,
        hue_distance_deg: Some(d_min),
        site_id,
    };
    if !reading.readable || d_min > cal.hue_window_deg || tied {
        return indeterminate;
    }
    let (verdict, band) = match test_kind {
        TestKind::Protein => {
            if best == 1 {
                (Verdict::Positive, None)
            } else {
                (Verdict::Negative, None)
            }
        }
        TestKind::Carbohydrate => {
            let band = entries[best].1.expect("carbohydrate palette carries bands");
            let verdict = if band == Band::Blue {
                Verdict::Negative
            } else {
                Verdict::Positive
            };
            (verdict, Some(band))
        }
    };
    AssayResult {
        test_kind,
        verdict,
        band,
        hue_distance_deg: Some(d_min),
        site_id,
    }
}
