//! Deterministic synthetic workcell.
//!
//! Specimens live in a body frame (cm) and are placed on the cutting surface
//! by a pose. The overhead camera looks straight down, so world centimetres
//! map to pixels by a uniform pixel pitch. Bone is never rendered.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Homography, Point2, Polygon};
use crate::perception::{HandFrame, ZoneConfig, ZoneState, classify_zone};
use crate::planner::RobotPath;
use crate::raster::RasterImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("specimen out of frame")]
    OutOfFrame,
    #[error("fat or bone does not touch the meat")]
    DetachedPart,
    #[error("unordered hand script")]
    UnorderedScript,
    #[error("invalid simulator parameter: {0}")]
    BadParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DragParams {
    /// cm of meat translation per cm of knife travel blocked by bone.
    pub translation_gain: f64,
    /// Degrees of meat rotation per cm of blocked travel.
    pub rotation_gain: f64,
    /// Standard deviation (cm) of post-cut settling.
    pub slip_noise: f64,
}

impl Default for DragParams {
    fn default() -> Self {
        DragParams { translation_gain: 1.5, rotation_gain: 8.0, slip_noise: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceParams {
    pub meat_force_mean: f64,
    pub meat_force_std: f64,
    /// lbf gained per cm travelled inside bone.
    pub bone_ramp_rate: f64,
    pub saturation: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        ForceParams { meat_force_mean: 3.0, meat_force_std: 0.3, bone_ramp_rate: 2500.0, saturation: 25.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassColors {
    pub meat: [u8; 3],
    pub fat: [u8; 3],
    pub background: [u8; 3],
}

impl Default for ClassColors {
    fn default() -> Self {
        ClassColors { meat: [170, 60, 60], fat: [235, 225, 205], background: [40, 80, 40] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Centimetres per pixel.
    pub pixel_pitch: f64,
    pub image_size: (u32, u32),
    pub control_hz: u32,
    pub safety_hz: u32,
    pub drag: DragParams,
    pub force: ForceParams,
    pub colors: ClassColors,
    /// Knife speed along the path, cm/s.
    pub speed_cm_s: f64,
    pub cut_height_cm: f64,
    /// One-way delay of the force/LED microcontroller link.
    pub link_latency_s: f64,
    /// Probability that the hand detector drops a frame.
    pub hand_miss_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            pixel_pitch: 0.1,
            image_size: (320, 240),
            control_hz: 500,
            safety_hz: 60,
            drag: DragParams::default(),
            force: ForceParams::default(),
            colors: ClassColors::default(),
            speed_cm_s: 2.0,
            cut_height_cm: 1.0,
            link_latency_s: 0.010,
            hand_miss_rate: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.pixel_pitch > 0.0) {
            return Err(SimError::BadParameter("pixel_pitch"));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(SimError::BadParameter("image_size"));
        }
        if self.control_hz == 0 || self.safety_hz == 0 {
            return Err(SimError::BadParameter("rates"));
        }
        let d = &self.drag;
        if !(d.translation_gain >= 0.0 && d.rotation_gain >= 0.0 && d.slip_noise >= 0.0) {
            return Err(SimError::BadParameter("drag"));
        }
        let f = &self.force;
        if !(f.meat_force_mean >= 0.0 && f.meat_force_std >= 0.0 && f.bone_ramp_rate >= 0.0)
            || !(f.saturation > 0.0 && f.meat_force_mean <= f.saturation)
        {
            return Err(SimError::BadParameter("force"));
        }
        if !(self.speed_cm_s > 0.0) || !(self.link_latency_s >= 0.0) {
            return Err(SimError::BadParameter("speed or link latency"));
        }
        if !(0.0..=1.0).contains(&self.hand_miss_rate) {
            return Err(SimError::BadParameter("hand_miss_rate"));
        }
        Ok(())
    }

    /// Camera model: pixel coordinates to cutting-surface centimetres.
    pub fn pixel_to_world(&self) -> Homography {
        Homography::scale(self.pixel_pitch)
    }

    pub fn world_extent(&self) -> (f64, f64) {
        (self.image_size.0 as f64 * self.pixel_pitch, self.image_size.1 as f64 * self.pixel_pitch)
    }
}

/// Placement on the cutting surface: `world = R(theta) * body + (x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
}

impl From<[f64; 3]> for Pose {
    fn from(v: [f64; 3]) -> Self {
        Pose { x: v[0], y: v[1], theta_deg: v[2] }
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        [p.x, p.y, p.theta_deg]
    }
}

impl Pose {
    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotated(self.theta_deg.to_radians()) + Point2::new(self.x, self.y)
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeatSpec {
    pub meat: Polygon,
    pub fat: Polygon,
    #[serde(default)]
    pub bone: Option<Polygon>,
    #[serde(default)]
    pub pose: Pose,
}

fn polygons_touch(a: &Polygon, b: &Polygon) -> bool {
    a.vertices().iter().any(|&p| b.contains(p))
        || b.vertices().iter().any(|&p| a.contains(p))
        || a.edges().any(|(p, q)| {
            b.edges().any(|(r, s)| crate::geometry::point_segment_distance(p, r, s) < 1e-9
                || segments_cross(p, q, r, s))
        })
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o = |p: Point2, q: Point2, r: Point2| (q - p).cross(r - p);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

impl MeatSpec {
    pub fn new(meat: Polygon, fat: Polygon, bone: Option<Polygon>, pose: Pose) -> Result<Self, SimError> {
        let spec = MeatSpec { meat, fat, bone, pose };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !polygons_touch(&self.meat, &self.fat) {
            return Err(SimError::DetachedPart);
        }
        if let Some(bone) = &self.bone {
            if !polygons_touch(&self.meat, bone) {
                return Err(SimError::DetachedPart);
            }
        }
        Ok(())
    }

    fn place(&self, poly: &Polygon) -> Polygon {
        poly.map(|p| self.pose.apply(p)).expect("rigid motion keeps polygons simple")
    }

    pub fn world_meat(&self) -> Polygon {
        self.place(&self.meat)
    }

    pub fn world_fat(&self) -> Polygon {
        self.place(&self.fat)
    }

    pub fn world_bone(&self) -> Option<Polygon> {
        self.bone.as_ref().map(|b| self.place(b))
    }

    pub fn without_bone(&self) -> MeatSpec {
        MeatSpec { bone: None, ..self.clone() }
    }

    /// Same specimen with its pose translated by `v` cm and rotated by
    /// `rot_deg` about the world meat centroid.
    pub fn moved(&self, v: Point2, rot_deg: f64) -> MeatSpec {
        let mut pose = self.pose;
        if rot_deg != 0.0 {
            let c_body = self.meat.centroid();
            let c_world = self.pose.apply(c_body);
            pose.theta_deg += rot_deg;
            let t = c_world - c_body.rotated(pose.theta_deg.to_radians());
            pose.x = t.x;
            pose.y = t.y;
        }
        pose.x += v.x;
        pose.y += v.y;
        MeatSpec { pose, ..self.clone() }
    }
}

/// Overhead camera image of the specimen: fat, then meat on top.
pub fn render(spec: &MeatSpec, cfg: &SimConfig) -> Result<RasterImage, SimError> {
    let (ew, eh) = cfg.world_extent();
    for poly in [spec.world_meat(), spec.world_fat()] {
        let (lo, hi) = poly.bounds();
        if lo.x < 0.0 || lo.y < 0.0 || hi.x > ew || hi.y > eh {
            return Err(SimError::OutOfFrame);
        }
    }
    render_clipped(spec, cfg)
}

/// Like [`render`], but whatever lies outside the frame is simply not seen.
pub fn render_clipped(spec: &MeatSpec, cfg: &SimConfig) -> Result<RasterImage, SimError> {
    let (w, h) = cfg.image_size;
    let meat = spec.world_meat();
    let fat = spec.world_fat();
    let mut img = RasterImage::filled(w, h, cfg.colors.background).map_err(|_| SimError::BadParameter("image_size"))?;
    let pitch = cfg.pixel_pitch;
    for (poly, color) in [(&fat, cfg.colors.fat), (&meat, cfg.colors.meat)] {
        let (lo, hi) = poly.bounds();
        let x0 = ((lo.x / pitch).floor() as i64).max(0) as u32;
        let y0 = ((lo.y / pitch).floor() as i64).max(0) as u32;
        let x1 = ((hi.x / pitch).ceil().max(0.0) as u32).min(w);
        let y1 = ((hi.y / pitch).ceil().max(0.0) as u32).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = Point2::new((x as f64 + 0.5) * pitch, (y as f64 + 0.5) * pitch);
                if poly.contains(c) {
                    img.set(x, y, color);
                }
            }
        }
    }
    Ok(img)
}

/// Tick-by-tick knife/material interaction for one cut.
#[derive(Debug, Clone)]
pub struct CutSimulation {
    spec: MeatSpec,
    meat: Polygon,
    bone: Option<Polygon>,
    centroid: Point2,
    cfg: SimConfig,
    noise: Normal<f64>,
    knife: Point2,
    bone_run: f64,
    bone_travel: f64,
    meat_travel: f64,
    translation: Point2,
    rotation_deg: f64,
    first_bone_contact: Option<f64>,
}

impl CutSimulation {
    pub fn new(spec: &MeatSpec, cfg: &SimConfig, start: Point2) -> Self {
        let meat = spec.world_meat();
        CutSimulation {
            centroid: meat.centroid(),
            meat,
            bone: spec.world_bone(),
            spec: spec.clone(),
            cfg: *cfg,
            noise: Normal::new(0.0, cfg.force.meat_force_std.max(0.0)).expect("finite std"),
            knife: start,
            bone_run: 0.0,
            bone_travel: 0.0,
            meat_travel: 0.0,
            translation: Point2::default(),
            rotation_deg: 0.0,
            first_bone_contact: None,
        }
    }

    pub fn knife(&self) -> Point2 {
        self.knife
    }

    /// Time of the first sample taken with the blade inside bone.
    pub fn first_bone_contact(&self) -> Option<f64> {
        self.first_bone_contact
    }

    pub fn bone_travel(&self) -> f64 {
        self.bone_travel
    }

    /// Moves the blade to `to` and samples the normal force there.
    pub fn step(&mut self, t: f64, to: Point2, rng: &mut ChaCha8Rng) -> f64 {
        let delta = to - self.knife;
        let travel = delta.norm();
        self.knife = to;
        if travel == 0.0 {
            return 0.0;
        }
        let fp = &self.cfg.force;
        if self.bone.as_ref().is_some_and(|b| b.contains(to)) {
            self.first_bone_contact.get_or_insert(t);
            self.bone_run += travel;
            self.bone_travel += travel;
            let dir = delta * (1.0 / travel);
            self.translation = self.translation + dir * (self.cfg.drag.translation_gain * travel);
            let lever = dir.cross(to - self.centroid);
            self.rotation_deg += self.cfg.drag.rotation_gain * travel * lever.signum() * (lever != 0.0) as u8 as f64;
            return (fp.meat_force_mean + fp.bone_ramp_rate * self.bone_run).min(fp.saturation);
        }
        self.bone_run = 0.0;
        if self.meat.contains(to) {
            self.meat_travel += travel;
            // Resistance noise is truncated at four standard deviations.
            let sd = fp.meat_force_std;
            let n = self.noise.sample(rng).clamp(-4.0 * sd, 4.0 * sd);
            return (fp.meat_force_mean + n).clamp(0.0, fp.saturation);
        }
        0.0
    }

    /// Specimen after the cut, and whether the blade passed through meat
    /// without meeting bone.
    pub fn finish(&self, rng: &mut ChaCha8Rng) -> (MeatSpec, bool) {
        let mut post = self.spec.moved(self.translation, self.rotation_deg);
        let sigma = self.cfg.drag.slip_noise;
        if self.meat_travel > 0.0 && sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            let mag = n.sample(rng).abs().min(3.0 * sigma);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            post = post.moved(Point2::new(mag * angle.cos(), mag * angle.sin()), 0.0);
        }
        let cut_applied = self.meat_travel > 0.0 && self.bone_travel == 0.0;
        (post, cut_applied)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutOutcome {
    pub post: MeatSpec,
    pub forces: Vec<crate::knife::ForceSample>,
    pub cut_applied: bool,
    pub first_bone_contact: Option<f64>,
}

/// Walks `path` at its commanded speed, one control tick at a time.
pub fn simulate_cut(spec: &MeatSpec, path: &RobotPath, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> CutOutcome {
    let dt = 1.0 / cfg.control_hz as f64;
    let step = path.commanded_speed() * dt / path.length();
    let mut sim = CutSimulation::new(spec, cfg, path.point_at(0.0).xy());
    let mut forces = Vec::new();
    let mut k = 0u64;
    let mut progress = 0.0;
    while progress < 1.0 {
        k += 1;
        progress = (k as f64 * step).min(1.0);
        let t = k as f64 * dt;
        let f = sim.step(t, path.point_at(progress).xy(), rng);
        forces.push(crate::knife::ForceSample::new(t, f));
    }
    let (post, cut_applied) = sim.finish(rng);
    CutOutcome { post, forces, cut_applied, first_bone_contact: sim.first_bone_contact() }
}

/// Keyframe of a scripted hand centroid, image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandWaypoint {
    pub t: f64,
    pub centroid: Point2,
}

/// Rigid 21-point hand template, pixel offsets from the centroid.
pub const HAND_TEMPLATE: [(f64, f64); 21] = [
    (0.0, 18.0),
    (-10.0, 10.0),
    (-14.0, 4.0),
    (-17.0, -2.0),
    (-19.0, -7.0),
    (-6.0, -2.0),
    (-7.0, -10.0),
    (-7.0, -16.0),
    (-7.0, -21.0),
    (0.0, -3.0),
    (0.0, -12.0),
    (0.0, -18.0),
    (0.0, -23.0),
    (6.0, -2.0),
    (6.0, -10.0),
    (6.0, -16.0),
    (6.0, -20.0),
    (11.0, 0.0),
    (12.0, -6.0),
    (12.0, -11.0),
    (12.0, -15.0),
];

pub fn hand_landmarks(centroid: Point2) -> Vec<Point2> {
    HAND_TEMPLATE.iter().map(|&(dx, dy)| centroid + Point2::new(dx, dy)).collect()
}

fn validate_script(script: &[HandWaypoint]) -> Result<(), SimError> {
    if script.windows(2).any(|w| !(w[0].t < w[1].t)) || script.iter().any(|w| !w.t.is_finite()) {
        return Err(SimError::UnorderedScript);
    }
    Ok(())
}

/// Hand centroid at time `t`, if the script covers it.
pub fn hand_centroid_at(script: &[HandWaypoint], t: f64) -> Option<Point2> {
    let first = script.first()?;
    let last = script.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = script.windows(2).position(|w| t <= w[1].t).unwrap_or(0);
    if script.len() == 1 {
        return Some(first.centroid);
    }
    let (a, b) = (script[i], script[i + 1]);
    let s = (t - a.t) / (b.t - a.t);
    Some(a.centroid + (b.centroid - a.centroid) * s)
}

/// Landmark frames sampled on the safety grid `k / safety_hz`.
pub fn scripted_hands(script: &[HandWaypoint], cfg: &SimConfig) -> Result<Vec<HandFrame>, SimError> {
    validate_script(script)?;
    let (Some(first), Some(last)) = (script.first(), script.last()) else {
        return Ok(Vec::new());
    };
    let hz = cfg.safety_hz as f64;
    let k0 = (first.t * hz - 1e-9).ceil().max(0.0) as u64;
    let k1 = (last.t * hz + 1e-9).floor() as u64;
    Ok((k0..=k1)
        .filter_map(|k| {
            let t = k as f64 / hz;
            let c = hand_centroid_at(script, t.clamp(first.t, last.t))?;
            Some(HandFrame { t, landmarks: hand_landmarks(c), source_id: 0 })
        })
        .collect())
}

/// Continuous-time onsets of `target` (or more severe) along the script,
/// located by dense scanning plus bisection.
pub fn zone_onsets(script: &[HandWaypoint], zones: &ZoneConfig, target: ZoneState) -> Vec<f64> {
    let (Some(first), Some(last)) = (script.first(), script.last()) else {
        return Vec::new();
    };
    let at = |t: f64| {
        let c = hand_centroid_at(script, t).expect("t within script");
        classify_zone(&HandFrame { t, landmarks: hand_landmarks(c), source_id: 0 }, zones) >= target
    };
    let step = 1e-4;
    let n = ((last.t - first.t) / step).ceil() as u64;
    let mut onsets = Vec::new();
    let mut prev_t = first.t;
    let mut prev = at(first.t);
    if prev {
        onsets.push(first.t);
    }
    for k in 1..=n {
        let t = (first.t + k as f64 * step).min(last.t);
        let cur = at(t);
        if cur && !prev {
            let (mut lo, mut hi) = (prev_t, t);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if at(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            onsets.push(hi);
        }
        prev = cur;
        prev_t = t;
    }
    onsets
}
