//! Post-cut assessment from meat displacement.
//!
//! The meat is boxed before and after the cut; the mean corner travel `d`
//! (pixels) is squashed into a score `psi = tanh(beta * d)` in `[0, 1)`, and
//! an inspection alert is raised when the score exceeds `tau`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_area_box, OrientedBox};
use crate::raster::Bitmask;

pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_TAU: f64 = 0.5;

/// Largest `f64` strictly below one.
const PSI_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("no meat detected")]
    NoMeat,
    #[error("beta must be positive and tau within (0, 1)")]
    BadParameters,
    #[error("no usable calibration pairs")]
    NoPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeatLocation {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutAssessment {
    pub d: f64,
    pub psi: f64,
    pub beta: f64,
    pub tau: f64,
    pub alert: bool,
}

pub fn locate_meat(mask: &Bitmask, t: f64) -> Result<MeatLocation, UncertaintyError> {
    let centers = mask.pixel_centers();
    if centers.is_empty() {
        return Err(UncertaintyError::NoMeat);
    }
    let bbox = min_area_box(&centers).map_err(|_| UncertaintyError::NoMeat)?;
    Ok(MeatLocation { bbox, t })
}

/// Mean distance between corresponding canonical corners.
pub fn displacement(pre: &MeatLocation, post: &MeatLocation) -> f64 {
    box_displacement(&pre.bbox, &post.bbox)
}

pub fn box_displacement(pre: &OrientedBox, post: &OrientedBox) -> f64 {
    pre.corners()
        .iter()
        .zip(post.corners())
        .map(|(a, b)| a.distance(*b))
        .sum::<f64>()
        / 4.0
}

/// `(e^x - e^-x) / (e^x + e^-x)` with `x = beta * d`, rewritten through
/// `expm1(-2x)` so it neither overflows nor cancels near zero.
pub fn psi(d: f64, beta: f64) -> f64 {
    let x = beta * d;
    if x <= 0.0 {
        return 0.0;
    }
    let e = (-2.0 * x).exp_m1();
    (-e / (2.0 + e)).min(PSI_CEILING)
}

pub fn evaluate_cut(
    pre: &MeatLocation,
    post: &MeatLocation,
    beta: f64,
    tau: f64,
) -> Result<CutAssessment, UncertaintyError> {
    if !(beta > 0.0) || !(tau > 0.0 && tau < 1.0) {
        return Err(UncertaintyError::BadParameters);
    }
    let d = displacement(pre, post);
    let psi = psi(d, beta);
    Ok(CutAssessment { d, psi, beta, tau, alert: psi > tau })
}

/// Least-squares `beta` for `atanh(psi_i) ~ beta * d_i` over the usable pairs.
pub fn fit_beta(pairs: &[(f64, f64)]) -> Result<f64, UncertaintyError> {
    let (num, den) = pairs
        .iter()
        .filter(|&&(d, p)| d > 0.0 && p > 0.0 && p < 1.0)
        .fold((0.0, 0.0), |(n, s), &(d, p)| (n + d * p.atanh(), s + d * d));
    if den == 0.0 {
        return Err(UncertaintyError::NoPairs);
    }
    Ok(num / den)
}

/// Assessment report: `{"plan_id","d_px","d_cm","psi","tau","alert"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub plan_id: String,
    pub d_px: f64,
    pub d_cm: f64,
    pub psi: f64,
    pub tau: f64,
    pub alert: bool,
}

impl AssessmentReport {
    pub fn new(plan_id: &str, a: &CutAssessment, pixel_pitch_cm: f64) -> Self {
        AssessmentReport {
            plan_id: plan_id.to_owned(),
            d_px: a.d,
            d_cm: a.d * pixel_pitch_cm,
            psi: a.psi,
            tau: a.tau,
            alert: a.alert,
        }
    }
}
