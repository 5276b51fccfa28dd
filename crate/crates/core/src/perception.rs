//! Hand-landmark zone classification and landmark trace playback.
//!
//! The live hand detector sits outside this crate; frames arrive here as
//! recorded or synthesized landmark traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Polygon};

/// Maximum landmarks in one detected hand.
pub const MAX_LANDMARKS: usize = 21;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("hand frame has {0} landmarks, at most 21 allowed")]
    TooManyLandmarks(usize),
    #[error("unordered trace")]
    UnorderedTrace,
    #[error("zone polygon lies outside the image")]
    ZoneOutOfImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    pub t: f64,
    pub landmarks: Vec<Point2>,
    #[serde(default)]
    pub source_id: u8,
}

impl HandFrame {
    pub fn new(t: f64, landmarks: Vec<Point2>, source_id: u8) -> Result<Self, PerceptionError> {
        if landmarks.len() > MAX_LANDMARKS {
            return Err(PerceptionError::TooManyLandmarks(landmarks.len()));
        }
        Ok(HandFrame { t, landmarks, source_id })
    }

    pub fn empty(t: f64) -> Self {
        HandFrame { t, landmarks: Vec::new(), source_id: 0 }
    }
}

/// Ordered by severity: `Clear < Safe < Warning`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZoneState {
    #[default]
    Clear,
    Safe,
    Warning,
}

impl ZoneState {
    pub fn as_str(self) -> &'static str {
        match self {
            ZoneState::Clear => "clear",
            ZoneState::Safe => "safe",
            ZoneState::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZoneConfigRaw")]
pub struct ZoneConfig {
    pub warning: Polygon,
    pub safe: Polygon,
    pub image_size: (u32, u32),
}

#[derive(Deserialize)]
struct ZoneConfigRaw {
    warning: Polygon,
    safe: Polygon,
    image_size: (u32, u32),
}

impl TryFrom<ZoneConfigRaw> for ZoneConfig {
    type Error = PerceptionError;
    fn try_from(r: ZoneConfigRaw) -> Result<Self, Self::Error> {
        ZoneConfig::new(r.warning, r.safe, r.image_size)
    }
}

impl ZoneConfig {
    pub fn new(warning: Polygon, safe: Polygon, image_size: (u32, u32)) -> Result<Self, PerceptionError> {
        let cfg = ZoneConfig { warning, safe, image_size };
        let inside = |poly: &Polygon| poly.vertices().iter().all(|&p| cfg.in_image(p));
        if !inside(&cfg.warning) || !inside(&cfg.safe) {
            return Err(PerceptionError::ZoneOutOfImage);
        }
        Ok(cfg)
    }

    pub fn in_image(&self, p: Point2) -> bool {
        let (w, h) = self.image_size;
        p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64
    }
}

/// Most severe zone touched by any in-frame landmark.
pub fn classify_zone(frame: &HandFrame, zones: &ZoneConfig) -> ZoneState {
    let mut state = ZoneState::Clear;
    for &p in frame.landmarks.iter().filter(|&&p| zones.in_image(p)) {
        if zones.warning.contains(p) {
            return ZoneState::Warning;
        }
        if zones.safe.contains(p) {
            state = ZoneState::Safe;
        }
    }
    state
}

/// Releases recorded frames as the simulation clock passes their timestamps.
#[derive(Debug, Clone)]
pub struct TracePlayback {
    frames: Vec<HandFrame>,
    next: usize,
}

impl TracePlayback {
    pub fn new(frames: Vec<HandFrame>) -> Result<Self, PerceptionError> {
        if frames.windows(2).any(|w| !(w[0].t < w[1].t)) || frames.iter().any(|f| !f.t.is_finite()) {
            return Err(PerceptionError::UnorderedTrace);
        }
        Ok(TracePlayback { frames, next: 0 })
    }

    /// Frames with `t <= clock` not yet emitted, in order.
    pub fn poll(&mut self, clock: f64) -> &[HandFrame] {
        let start = self.next;
        while self.next < self.frames.len() && self.frames[self.next].t <= clock {
            self.next += 1;
        }
        &self.frames[start..self.next]
    }

    pub fn remaining(&self) -> usize {
        self.frames.len() - self.next
    }

    pub fn next_time(&self) -> Option<f64> {
        self.frames.get(self.next).map(|f| f.t)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.frames.last().map(|f| f.t)
    }
}

/// Drains `trace` against a clock that steps by `dt` starting at `t0`.
pub fn trace_playback(trace: Vec<HandFrame>, t0: f64, dt: f64) -> Result<Vec<HandFrame>, PerceptionError> {
    let mut playback = TracePlayback::new(trace)?;
    let mut out = Vec::new();
    let mut k = 0u64;
    while playback.remaining() > 0 {
        let clock = t0 + k as f64 * dt;
        out.extend_from_slice(playback.poll(clock));
        k += 1;
    }
    Ok(out)
}
