//! Operator console wire messages: one JSON object per WebSocket text frame,
//! discriminated by `type`.

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::planner::{CutPlan, Edit, EditOp, PlanId};
use crate::raster::RasterImage;
use crate::supervisor::{LedColor, Supervisor};
use crate::uncertainty::CutAssessment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    PlanProposed {
        plan_id: String,
        revision: u64,
        image_ppm_b64: String,
        polylines: Vec<Vec<[f64; 2]>>,
    },
    State {
        state: String,
        zone: String,
        led: LedColor,
        t: f64,
    },
    Assessment {
        plan_id: String,
        d_px: f64,
        psi: f64,
        alert: bool,
    },
    Error {
        code: String,
    },
}

impl ServerMessage {
    pub fn plan(plan: &CutPlan, image: &RasterImage) -> Self {
        let json = plan.to_json();
        ServerMessage::PlanProposed {
            plan_id: json.plan_id,
            revision: json.revision,
            image_ppm_b64: STANDARD.encode(image.to_ppm()),
            polylines: json.polylines,
        }
    }

    pub fn state(sup: &Supervisor, t: f64) -> Self {
        ServerMessage::State {
            state: sup.state().name().to_owned(),
            zone: sup.zone().as_str().to_owned(),
            led: sup.led(),
            t,
        }
    }

    pub fn assessment(plan_id: &PlanId, a: &CutAssessment) -> Self {
        ServerMessage::Assessment { plan_id: plan_id.0.clone(), d_px: a.d, psi: a.psi, alert: a.alert }
    }

    pub fn error(code: &str) -> Self {
        ServerMessage::Error { code: code.to_owned() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

/// Decodes the raster carried by a `plan_proposed` message.
pub fn decode_image(b64: &str) -> Option<RasterImage> {
    let bytes = STANDARD.decode(b64).ok()?;
    RasterImage::from_ppm(&bytes).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Move,
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

/// Console command. `plan_id` and `revision` are mandatory on the wire;
/// scripted operators may omit them to address whatever plan is on screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Edit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        revision: Option<u64>,
        op: EditKind,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<Point2>,
        #[serde(default)]
        polyline: usize,
    },
    Decision {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        revision: Option<u64>,
        action: Decision,
    },
    InspectionCleared,
    Reset,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("{0} is required")]
    MissingField(&'static str),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "bad_message",
            ProtocolError::MissingField(_) => "missing_field",
        }
    }
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }

    /// Checks the stricter wire contract: plan-addressed messages must name
    /// the plan and revision they were composed against.
    pub fn validate_wire(&self) -> Result<(), ProtocolError> {
        let (plan_id, revision) = match self {
            ClientMessage::Edit { plan_id, revision, op, point, .. } => {
                if *op != EditKind::Remove && point.is_none() {
                    return Err(ProtocolError::MissingField("point"));
                }
                (plan_id, revision)
            }
            ClientMessage::Decision { plan_id, revision, .. } => (plan_id, revision),
            _ => return Ok(()),
        };
        if plan_id.is_none() {
            return Err(ProtocolError::MissingField("plan_id"));
        }
        if revision.is_none() {
            return Err(ProtocolError::MissingField("revision"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

/// Builds the planner edit described by an edit message.
pub fn to_edit(op: EditKind, index: usize, point: Option<Point2>, polyline: usize) -> Result<Edit, ProtocolError> {
    let need = || point.ok_or(ProtocolError::MissingField("point"));
    let op = match op {
        EditKind::Move => EditOp::Move { index, point: need()? },
        EditKind::Add => EditOp::Add { index, point: need()? },
        EditKind::Remove => EditOp::Remove { index },
    };
    Ok(Edit::new(polyline, op))
}
