//! Scenario documents: one JSON object describing a specimen, a task, the
//! scripted human and operator, and every tunable of the cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Polygon;
use crate::knife::{DEFAULT_DEBOUNCE, DEFAULT_MARGIN, SENSOR_SATURATION_LBF};
use crate::perception::ZoneConfig;
use crate::planner::{ColorThresholds, DEFAULT_OVERSHOOT_PX, DEFAULT_TRIM_EPSILON_PX};
use crate::protocol::ClientMessage;
use crate::sim::{HandWaypoint, MeatSpec, SimConfig};
use crate::supervisor::SupervisorConfig;
use crate::uncertainty::{DEFAULT_BETA, DEFAULT_TAU};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario io error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Slice {
        n: u32,
        #[serde(default = "default_overshoot")]
        overshoot_px: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    Trim {
        #[serde(default = "default_epsilon")]
        epsilon_px: f64,
    },
}

fn default_overshoot() -> f64 {
    DEFAULT_OVERSHOOT_PX
}

fn default_epsilon() -> f64 {
    DEFAULT_TRIM_EPSILON_PX
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyParams {
    pub beta: f64,
    pub tau: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams { beta: DEFAULT_BETA, tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnifeParams {
    pub margin: f64,
    pub debounce: u32,
    /// Fixed base force; when absent the base is calibrated from simulated
    /// bone-free cuts of the episode's own specimen.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_lbf: Option<f64>,
    pub calibration_traces: usize,
}

impl Default for KnifeParams {
    fn default() -> Self {
        KnifeParams { margin: DEFAULT_MARGIN, debounce: DEFAULT_DEBOUNCE, base_lbf: None, calibration_traces: 20 }
    }
}

/// Scripted console command at simulation time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStep {
    pub t: f64,
    #[serde(flatten)]
    pub message: ClientMessage,
}

/// Ground truth attached by scenario generators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Labels {
    pub hand_entries: Vec<f64>,
    pub bone_on_path: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default)]
    pub config: SimConfig,
    pub meat: MeatSpec,
    pub task: Task,
    #[serde(default)]
    pub hands: Vec<HandWaypoint>,
    #[serde(default)]
    pub thresholds: ColorThresholds,
    #[serde(default)]
    pub uncertainty: UncertaintyParams,
    #[serde(default)]
    pub knife: KnifeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<ZoneConfig>,
    /// Console script. When absent the first proposed plan is approved
    /// shortly after it appears.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<Vec<OperatorStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    /// Hard stop on simulation time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

/// Warning zone around the workspace, safe band along the operator's edge.
pub fn default_zones(image_size: (u32, u32)) -> ZoneConfig {
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    let warning = Polygon::rect(w / 8.0, h / 12.0, w * 7.0 / 8.0, h * 17.0 / 24.0).expect("non-empty image");
    let safe = Polygon::rect(0.0, h * 17.0 / 24.0, w, h).expect("non-empty image");
    ZoneConfig::new(warning, safe, image_size).expect("zones inside image")
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn zones(&self) -> ZoneConfig {
        self.zones.clone().unwrap_or_else(|| default_zones(self.config.image_size))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate().map_err(|e| invalid(e.to_string()))?;
        self.meat.validate().map_err(|e| invalid(e.to_string()))?;
        match self.task {
            Task::Slice { n, overshoot_px, angle_deg } => {
                if n < 2 || !(overshoot_px >= 0.0) || !angle_deg.is_finite() {
                    return Err(invalid("slice task needs n >= 2 and a finite overshoot"));
                }
            }
            Task::Trim { epsilon_px } => {
                if !(epsilon_px >= 0.0) {
                    return Err(invalid("trim epsilon must be non-negative"));
                }
            }
        }
        if !self.thresholds.is_valid() {
            return Err(invalid("colour threshold min exceeds max"));
        }
        let u = self.uncertainty;
        if !(u.beta > 0.0) || !(u.tau > 0.0 && u.tau < 1.0) {
            return Err(invalid("beta must be positive and tau within (0, 1)"));
        }
        let k = self.knife;
        if !(k.margin >= 0.0) || k.debounce == 0 || k.calibration_traces == 0 {
            return Err(invalid("knife margin, debounce or calibration count out of range"));
        }
        if let Some(b) = k.base_lbf {
            if !(b > 0.0) || b * (1.0 + k.margin) > SENSOR_SATURATION_LBF {
                return Err(invalid("knife base force out of sensor range"));
            }
        }
        if self.hands.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(invalid("hand waypoints out of order"));
        }
        if let Some(z) = &self.zones {
            if z.image_size != self.config.image_size {
                return Err(invalid("zone image size differs from camera image size"));
            }
        }
        if let Some(ops) = &self.operator {
            if ops.windows(2).any(|w| w[0].t > w[1].t) || ops.iter().any(|o| !(o.t >= 0.0)) {
                return Err(invalid("operator steps out of order"));
            }
        }
        if self.duration_s.is_some_and(|d| !(d > 0.0)) {
            return Err(invalid("duration must be positive"));
        }
        Ok(())
    }
}
