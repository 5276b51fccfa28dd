//! Knife force monitoring: threshold calibration and hard-contact detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper end of the force sensor range, in pounds-force.
pub const SENSOR_SATURATION_LBF: f64 = 25.0;

pub const DEFAULT_MARGIN: f64 = 0.25;
pub const DEFAULT_DEBOUNCE: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnifeError {
    #[error("no calibration data")]
    NoCalibrationData,
    #[error("margin saturates sensor")]
    MarginSaturatesSensor,
    #[error("invalid threshold parameters")]
    InvalidParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub t: f64,
    #[serde(rename = "force_lbf")]
    pub force: f64,
}

impl ForceSample {
    pub fn new(t: f64, force: f64) -> Self {
        ForceSample { t, force }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceThreshold {
    /// Largest force seen during normal cutting.
    pub base: f64,
    pub margin: f64,
    /// Consecutive samples at or above threshold needed to fire.
    pub debounce: u32,
}

impl ForceThreshold {
    pub fn new(base: f64, margin: f64, debounce: u32) -> Result<Self, KnifeError> {
        if !(base > 0.0) || !(margin >= 0.0) || debounce == 0 || !base.is_finite() || !margin.is_finite() {
            return Err(KnifeError::InvalidParameters);
        }
        let th = ForceThreshold { base, margin, debounce };
        if th.effective() > SENSOR_SATURATION_LBF {
            return Err(KnifeError::MarginSaturatesSensor);
        }
        Ok(th)
    }

    pub fn effective(&self) -> f64 {
        self.base * (1.0 + self.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub t_detect: f64,
    pub peak: f64,
}

/// Threshold from the maximum force across normal-cut recordings.
pub fn calibrate_threshold(
    normal_traces: &[Vec<ForceSample>],
    margin: f64,
    debounce: u32,
) -> Result<ForceThreshold, KnifeError> {
    let base = normal_traces
        .iter()
        .flatten()
        .map(|s| s.force)
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))))
        .ok_or(KnifeError::NoCalibrationData)?;
    ForceThreshold::new(base, margin, debounce)
}

/// Streaming hard-contact detector. Fires at most once.
#[derive(Debug, Clone)]
pub struct ContactClassifier {
    threshold: ForceThreshold,
    run: u32,
    run_peak: f64,
    fired: Option<ContactEvent>,
}

impl ContactClassifier {
    pub fn new(threshold: ForceThreshold) -> Self {
        ContactClassifier { threshold, run: 0, run_peak: 0.0, fired: None }
    }

    pub fn threshold(&self) -> &ForceThreshold {
        &self.threshold
    }

    pub fn fired(&self) -> Option<ContactEvent> {
        self.fired
    }

    /// Feeds one sample; returns the contact event on the sample that completes
    /// the debounce run. Later samples are ignored.
    pub fn push(&mut self, sample: ForceSample) -> Option<ContactEvent> {
        if self.fired.is_some() {
            return None;
        }
        if sample.force >= self.threshold.effective() {
            self.run += 1;
            self.run_peak = if self.run == 1 { sample.force } else { self.run_peak.max(sample.force) };
            if self.run >= self.threshold.debounce {
                let ev = ContactEvent { t_detect: sample.t, peak: self.run_peak };
                self.fired = Some(ev);
                return Some(ev);
            }
        } else {
            self.run = 0;
        }
        None
    }
}

pub fn classify_contact<I>(stream: I, th: ForceThreshold) -> Option<ContactEvent>
where
    I: IntoIterator<Item = ForceSample>,
{
    let mut c = ContactClassifier::new(th);
    stream.into_iter().find_map(|s| c.push(s))
}
