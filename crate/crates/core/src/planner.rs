//! Cut planning: colour segmentation, slice and trim trajectories, operator
//! waypoint edits, and the pixel-to-robot transform of approved plans.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{homography_apply, simplify_polyline, GeometryError, Homography, Point2, Polyline};
use crate::raster::{Bitmask, RasterImage};

pub const DEFAULT_OVERSHOOT_PX: f64 = 5.0;
pub const DEFAULT_TRIM_EPSILON_PX: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no meat detected")]
    NoMeat,
    #[error("nothing to slice")]
    NothingToSlice,
    #[error("no meat-fat boundary")]
    NoBoundary,
    #[error("plan frozen")]
    Frozen,
    #[error("degenerate plan")]
    Degenerate,
    #[error("outside workspace image")]
    OutsideImage,
    #[error("edit index {0} out of range")]
    BadIndex(usize),
    #[error("unapproved plan")]
    Unapproved,
    #[error("stale plan")]
    StaleRevision,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Inclusive per-channel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelBounds {
    pub r: [u8; 2],
    pub g: [u8; 2],
    pub b: [u8; 2],
}

impl ChannelBounds {
    pub fn contains(&self, rgb: [u8; 3]) -> bool {
        let within = |v: u8, b: [u8; 2]| b[0] <= v && v <= b[1];
        within(rgb[0], self.r) && within(rgb[1], self.g) && within(rgb[2], self.b)
    }

    fn is_valid(&self) -> bool {
        self.r[0] <= self.r[1] && self.g[0] <= self.g[1] && self.b[0] <= self.b[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorThresholds {
    pub meat: ChannelBounds,
    pub fat: ChannelBounds,
}

impl ColorThresholds {
    pub fn is_valid(&self) -> bool {
        self.meat.is_valid() && self.fat.is_valid()
    }
}

impl Default for ColorThresholds {
    /// Bounds that separate the simulator's default class colours.
    fn default() -> Self {
        ColorThresholds {
            meat: ChannelBounds { r: [120, 220], g: [20, 110], b: [20, 110] },
            fat: ChannelBounds { r: [200, 255], g: [185, 255], b: [160, 255] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMasks {
    pub meat: Bitmask,
    pub fat: Bitmask,
}

/// Per-pixel classification; a pixel inside both ranges is meat.
pub fn segment(img: &RasterImage, th: &ColorThresholds) -> SegmentationMasks {
    let (w, h) = (img.width(), img.height());
    let mut meat = Bitmask::new(w, h);
    let mut fat = Bitmask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let px = img.get(x, y);
            if th.meat.contains(px) {
                meat.set(x, y, true);
            } else if th.fat.contains(px) {
                fat.set(x, y, true);
            }
        }
    }
    SegmentationMasks { meat, fat }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlanId(pub String);

impl fmt::Display for PlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PlanId {
    fn from(s: &str) -> Self {
        PlanId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Proposed,
    Edited,
    Approved,
    Rejected,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Proposed => "proposed",
            PlanStatus::Edited => "edited",
            PlanStatus::Approved => "approved",
            PlanStatus::Rejected => "rejected",
        }
    }

    fn is_editable(self) -> bool {
        matches!(self, PlanStatus::Proposed | PlanStatus::Edited)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Move { index: usize, point: Point2 },
    Add { index: usize, point: Point2 },
    Remove { index: usize },
}

/// One operator edit, addressed to a polyline of the plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    #[serde(default)]
    pub polyline: usize,
    #[serde(flatten)]
    pub op: EditOp,
}

impl Edit {
    pub fn new(polyline: usize, op: EditOp) -> Self {
        Edit { polyline, op }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutPlan {
    plan_id: PlanId,
    status: PlanStatus,
    revision: u64,
    polylines: Vec<Polyline>,
    image_size: (u32, u32),
    proposed: Vec<Polyline>,
    edits: Vec<Edit>,
}

impl CutPlan {
    pub fn new(plan_id: PlanId, polylines: Vec<Polyline>, image_size: (u32, u32)) -> Result<Self, PlanError> {
        if polylines.is_empty() {
            return Err(PlanError::Degenerate);
        }
        let plan = CutPlan {
            plan_id,
            status: PlanStatus::Proposed,
            revision: 0,
            proposed: polylines.clone(),
            polylines,
            image_size,
            edits: Vec::new(),
        };
        if !plan.polylines.iter().flat_map(|p| p.points()).all(|&p| plan.in_image(p)) {
            return Err(PlanError::OutsideImage);
        }
        Ok(plan)
    }

    pub fn plan_id(&self) -> &PlanId {
        &self.plan_id
    }

    pub fn status(&self) -> PlanStatus {
        self.status
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn polylines(&self) -> &[Polyline] {
        &self.polylines
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    /// Append-only log of applied edits since the plan was proposed.
    pub fn edits(&self) -> &[Edit] {
        &self.edits
    }

    pub fn proposed_polylines(&self) -> &[Polyline] {
        &self.proposed
    }

    pub fn in_image(&self, p: Point2) -> bool {
        let (w, h) = self.image_size;
        p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64
    }

    /// Freezes the plan. `revision` must match the current one.
    pub fn approve(&self, revision: u64) -> Result<CutPlan, PlanError> {
        self.freeze(revision, PlanStatus::Approved)
    }

    pub fn reject(&self, revision: u64) -> Result<CutPlan, PlanError> {
        self.freeze(revision, PlanStatus::Rejected)
    }

    fn freeze(&self, revision: u64, status: PlanStatus) -> Result<CutPlan, PlanError> {
        if !self.status.is_editable() {
            return Err(PlanError::Frozen);
        }
        if revision != self.revision {
            return Err(PlanError::StaleRevision);
        }
        Ok(CutPlan { status, ..self.clone() })
    }

    /// Re-derives the waypoints by replaying the edit log over the proposal.
    pub fn replay(&self) -> Result<Vec<Polyline>, PlanError> {
        let mut lines = self.proposed.clone();
        for e in &self.edits {
            lines = edit_polylines(&lines, e, |p| self.in_image(p))?;
        }
        Ok(lines)
    }

    pub fn to_json(&self) -> PlanJson {
        PlanJson {
            plan_id: self.plan_id.0.clone(),
            status: self.status.as_str().to_owned(),
            revision: self.revision,
            polylines: self.polylines.iter().map(|p| p.points().iter().map(|&q| q.into()).collect()).collect(),
        }
    }
}

/// Serialized plan: `{"plan_id","status","revision","polylines"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub plan_id: String,
    pub status: String,
    pub revision: u64,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

fn edit_polylines(
    lines: &[Polyline],
    edit: &Edit,
    in_image: impl Fn(Point2) -> bool,
) -> Result<Vec<Polyline>, PlanError> {
    let target = lines.get(edit.polyline).ok_or(PlanError::BadIndex(edit.polyline))?;
    let mut pts = target.points().to_vec();
    match edit.op {
        EditOp::Move { index, point } => {
            let slot = pts.get_mut(index).ok_or(PlanError::BadIndex(index))?;
            if !in_image(point) {
                return Err(PlanError::OutsideImage);
            }
            *slot = point;
        }
        EditOp::Add { index, point } => {
            if index > pts.len() {
                return Err(PlanError::BadIndex(index));
            }
            if !in_image(point) {
                return Err(PlanError::OutsideImage);
            }
            pts.insert(index, point);
        }
        EditOp::Remove { index } => {
            if index >= pts.len() {
                return Err(PlanError::BadIndex(index));
            }
            if pts.len() <= 2 {
                return Err(PlanError::Degenerate);
            }
            pts.remove(index);
        }
    }
    let line = Polyline::new(pts).map_err(|_| PlanError::Degenerate)?;
    let mut out = lines.to_vec();
    out[edit.polyline] = line;
    Ok(out)
}

/// Returns the edited plan; `plan` itself is left untouched.
pub fn apply_edit(plan: &CutPlan, edit: &Edit) -> Result<CutPlan, PlanError> {
    if !plan.status.is_editable() {
        return Err(PlanError::Frozen);
    }
    let polylines = edit_polylines(&plan.polylines, edit, |p| plan.in_image(p))?;
    let mut edits = plan.edits.clone();
    edits.push(*edit);
    Ok(CutPlan {
        polylines,
        status: PlanStatus::Edited,
        revision: plan.revision + 1,
        edits,
        ..plan.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceParams {
    /// Number of strips; `n - 1` cuts are produced.
    pub n: u32,
    pub overshoot_px: f64,
    /// Rotation of the cut direction away from the image y axis, radians.
    pub angle: f64,
}

impl SliceParams {
    pub fn new(n: u32) -> Self {
        SliceParams { n, overshoot_px: DEFAULT_OVERSHOOT_PX, angle: 0.0 }
    }
}

/// Clips segment `a`-`b` to `[0, w] x [0, h]` (Liang-Barsky).
fn clip_to_image(a: Point2, b: Point2, w: f64, h: f64) -> Option<(Point2, Point2)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, a.x), (d.x, w - a.x), (-d.y, a.y), (d.y, h - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| (a + d * t0, a + d * t1))
}

/// Extent of the mask's pixel squares along unit direction `axis`.
fn mask_extent(mask: &Bitmask, axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in mask.iter_set() {
        for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let v = Point2::new(x as f64 + cx, y as f64 + cy).dot(axis);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Abscissae of the `n - 1` equally spaced cuts over `[lo, hi]`.
pub fn slice_positions(lo: f64, hi: f64, n: u32) -> Vec<f64> {
    (1..n).map(|k| lo + k as f64 * (hi - lo) / n as f64).collect()
}

/// Equally spaced parallel cuts dividing the meat into `n` strips.
///
/// Cuts alternate direction so consecutive cuts join outside the meat.
pub fn plan_slices(meat: &Bitmask, params: &SliceParams, plan_id: PlanId) -> Result<CutPlan, PlanError> {
    if params.n < 2 {
        return Err(PlanError::NothingToSlice);
    }
    if meat.is_empty() {
        return Err(PlanError::NoMeat);
    }
    let (s, c) = params.angle.sin_cos();
    let across = Point2::new(c, s);
    let along = Point2::new(-s, c);
    let (u_lo, u_hi) = mask_extent(meat, across);
    let (v_lo, v_hi) = mask_extent(meat, along);
    let (w, h) = (meat.width() as f64, meat.height() as f64);
    let mut lines = Vec::new();
    for (k, u) in slice_positions(u_lo, u_hi, params.n).into_iter().enumerate() {
        let start = across * u + along * (v_lo - params.overshoot_px);
        let end = across * u + along * (v_hi + params.overshoot_px);
        let (a, b) = clip_to_image(start, end, w, h).ok_or(PlanError::Degenerate)?;
        let seg = if k % 2 == 0 { vec![a, b] } else { vec![b, a] };
        lines.push(Polyline::new(seg).map_err(|_| PlanError::Degenerate)?);
    }
    CutPlan::new(plan_id, lines, (meat.width(), meat.height()))
}

// Clockwise on screen (y down), starting east.
const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter().position(|&d| d == (dx, dy)).expect("unit neighbour offset")
}

/// 8-connected components; returns a label per pixel (0 = unset) and the count.
fn label_components(mask: &Bitmask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for (x, y) in mask.iter_set() {
        let idx = (y as i64 * w + x as i64) as usize;
        if labels[idx] != 0 {
            continue;
        }
        next += 1;
        labels[idx] = next;
        stack.push((x as i64, y as i64));
        while let Some((cx, cy)) = stack.pop() {
            for (dx, dy) in DIRS {
                let (nx, ny) = (cx + dx, cy + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get_signed(nx, ny) {
                    let ni = (ny * w + nx) as usize;
                    if labels[ni] == 0 {
                        labels[ni] = next;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Moore-neighbour trace of the outer contour of the region containing
/// `start`, which must be its first pixel in raster order.
fn moore_trace(inside: impl Fn(i64, i64) -> bool, start: (i64, i64), max_steps: usize) -> Vec<(i64, i64)> {
    let mut contour = vec![start];
    let mut cur = start;
    let mut back = 4usize; // west of the first raster pixel is outside
    let mut second = None;
    for _ in 0..max_steps {
        let found = (1..=8).map(|k| (back + k) % 8).find_map(|d| {
            let nb = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            inside(nb.0, nb.1).then_some((d, nb))
        });
        let Some((d, nb)) = found else {
            break; // isolated pixel
        };
        // Closed once the first move out of the start pixel repeats.
        if cur == start && second == Some(nb) {
            break;
        }
        second.get_or_insert(nb);
        let prev = (cur.0 + DIRS[(d + 7) % 8].0, cur.1 + DIRS[(d + 7) % 8].1);
        back = dir_index(prev.0 - nb.0, prev.1 - nb.1);
        cur = nb;
        contour.push(cur);
    }
    if contour.len() > 1 && contour.last() == Some(&start) {
        contour.pop();
    }
    contour
}

/// Point midway between a meat pixel centre and its fat neighbours.
fn interface_point(fat: &Bitmask, x: i64, y: i64) -> Option<Point2> {
    let center = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
    let mean_of = |offsets: &[(i64, i64)]| {
        let hits: Vec<Point2> = offsets
            .iter()
            .filter(|&&(dx, dy)| fat.get_signed(x + dx, y + dy))
            .map(|&(dx, dy)| Point2::new((x + dx) as f64 + 0.5, (y + dy) as f64 + 0.5))
            .collect();
        (!hits.is_empty()).then(|| hits.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / hits.len() as f64))
    };
    let m = mean_of(&[(1, 0), (0, 1), (-1, 0), (0, -1)]).or_else(|| mean_of(&[(1, 1), (-1, 1), (-1, -1), (1, -1)]))?;
    Some((center + m) * 0.5)
}

/// Ordered chain along the largest meat/fat interface, before simplification.
pub fn trace_meat_fat_boundary(masks: &SegmentationMasks) -> Result<Vec<Point2>, PlanError> {
    let meat = &masks.meat;
    let fat = &masks.fat;
    let touches_fat = |x: i64, y: i64| DIRS.iter().any(|&(dx, dy)| fat.get_signed(x + dx, y + dy));

    let (labels, count) = label_components(meat);
    if count == 0 {
        return Err(PlanError::NoBoundary);
    }
    let w = meat.width() as i64;
    let mut interface_size = vec![0usize; count as usize + 1];
    let mut first_pixel = vec![None; count as usize + 1];
    for (x, y) in meat.iter_set() {
        let (x, y) = (x as i64, y as i64);
        let l = labels[(y * w + x) as usize] as usize;
        first_pixel[l].get_or_insert((x, y));
        if touches_fat(x, y) {
            interface_size[l] += 1;
        }
    }
    let (best, &size) = interface_size
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("at least one component");
    if size == 0 {
        return Err(PlanError::NoBoundary);
    }
    let label = best as u32;
    let inside = |x: i64, y: i64| meat.get_signed(x, y) && labels[(y * w + x) as usize] == label;
    let start = first_pixel[best].expect("component has pixels");
    let contour = moore_trace(inside, start, 8 * meat.count() + 16);

    let flags: Vec<bool> = contour.iter().map(|&(x, y)| touches_fat(x, y)).collect();
    let n = contour.len();
    let to_points = |idx: &mut dyn Iterator<Item = usize>| -> Vec<Point2> {
        let mut pts: Vec<Point2> = idx.filter_map(|i| interface_point(fat, contour[i].0, contour[i].1)).collect();
        pts.dedup();
        pts
    };

    let mut chain = if flags.iter().all(|&f| f) {
        let mut pts = to_points(&mut (0..n));
        if pts.len() > 2 {
            pts.push(pts[0]);
        }
        pts
    } else {
        // Longest cyclic run of fat-adjacent contour pixels.
        let offset = flags.iter().position(|&f| !f).expect("some pixel not on the interface");
        let (mut best_start, mut best_len, mut run_start, mut run_len) = (0, 0, 0, 0);
        for k in 1..=n {
            let i = (offset + k) % n;
            if flags[i] && k < n {
                if run_len == 0 {
                    run_start = k;
                }
                run_len += 1;
                if run_len > best_len {
                    best_len = run_len;
                    best_start = run_start;
                }
            } else {
                run_len = 0;
            }
        }
        to_points(&mut (best_start..best_start + best_len).map(|k| (offset + k) % n))
    };

    if chain.len() < 2 {
        // A single interface pixel: use the shared pixel edge.
        let (x, y) = contour[flags.iter().position(|&f| f).unwrap_or(0)];
        let mid = interface_point(fat, x, y).ok_or(PlanError::NoBoundary)?;
        let dir = mid - Point2::new(x as f64 + 0.5, y as f64 + 0.5);
        let len = dir.norm().max(f64::MIN_POSITIVE);
        let perp = Point2::new(-dir.y, dir.x) * (0.5 / len);
        chain = vec![mid - perp, mid + perp];
    }
    Ok(chain)
}

/// Cut along the meat/fat interface, simplified to within `epsilon_px`.
pub fn plan_trim(masks: &SegmentationMasks, epsilon_px: f64, plan_id: PlanId) -> Result<CutPlan, PlanError> {
    let chain = trace_meat_fat_boundary(masks)?;
    let raw = Polyline::dedup(chain).map_err(|_| PlanError::NoBoundary)?;
    let simplified = simplify_polyline(&raw, epsilon_px);
    CutPlan::new(plan_id, vec![simplified], (masks.meat.width(), masks.meat.height()))
}

/// Pixel-to-robot-plane mapping plus the fixed knife depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub h: Homography,
    pub cut_height_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    fn distance(self, o: Point3) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }
}

/// Commanded knife path in robot-plane centimetres, traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotPath {
    points: Vec<Point3>,
    cumulative: Vec<f64>,
    commanded_speed: f64,
}

impl RobotPath {
    pub fn new(points: Vec<Point3>, commanded_speed: f64) -> Result<Self, PlanError> {
        if points.len() < 2 || points.windows(2).any(|w| w[0] == w[1]) || !(commanded_speed > 0.0) {
            return Err(PlanError::Degenerate);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Ok(RobotPath { points, cumulative, commanded_speed })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn commanded_speed(&self) -> f64 {
        self.commanded_speed
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Index of the segment being traversed at arc-length fraction `progress`.
    /// At an interior vertex the outgoing segment is returned.
    pub fn segment_at(&self, progress: f64) -> usize {
        let s = progress.clamp(0.0, 1.0) * self.length();
        let last = self.points.len() - 2;
        self.cumulative[1..].iter().position(|&c| s < c).unwrap_or(last).min(last)
    }

    pub fn point_at(&self, progress: f64) -> Point3 {
        let s = progress.clamp(0.0, 1.0) * self.length();
        let i = self.segment_at(progress);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg).clamp(0.0, 1.0);
        Point3::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t)
    }

    /// Unit direction of segment `i`.
    pub fn tangent(&self, i: usize) -> Point3 {
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = a.distance(b);
        Point3::new((b.x - a.x) / len, (b.y - a.y) / len, (b.z - a.z) / len)
    }
}

/// Maps the approved plan's waypoints, in order, onto the cutting plane.
pub fn to_robot_path(plan: &CutPlan, cal: &Calibration, speed: f64) -> Result<RobotPath, PlanError> {
    if plan.status() != PlanStatus::Approved {
        return Err(PlanError::Unapproved);
    }
    let mut pts = Vec::new();
    for p in plan.polylines().iter().flat_map(|l| l.points()) {
        let q = homography_apply(&cal.h, *p)?;
        pts.push(Point3::new(q.x, q.y, cal.cut_height_z));
    }
    pts.dedup();
    RobotPath::new(pts, speed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(w: u32, h: u32, x0: u32, x1: u32, y0: u32, y1: u32) -> Bitmask {
        Bitmask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    fn line(pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn segment_uniform_images() {
        let th = ColorThresholds::default();
        let meat = segment(&RasterImage::filled(4, 3, [170, 60, 60]).unwrap(), &th);
        assert_eq!(meat.meat.count(), 12);
        assert_eq!(meat.fat.count(), 0);
        let bg = segment(&RasterImage::filled(4, 3, [40, 80, 40]).unwrap(), &th);
        assert!(bg.meat.is_empty() && bg.fat.is_empty());
    }

    #[test]
    fn segment_tie_goes_to_meat() {
        let all = ChannelBounds { r: [0, 255], g: [0, 255], b: [0, 255] };
        let th = ColorThresholds { meat: all, fat: all };
        let m = segment(&RasterImage::filled(2, 2, [9, 9, 9]).unwrap(), &th);
        assert_eq!(m.meat.count(), 4);
        assert!(m.fat.is_empty());
    }

    #[test]
    fn slices_equal_spacing() {
        let mask = rect_mask(400, 200, 100, 300, 50, 150);
        let plan = plan_slices(&mask, &SliceParams::new(4), "p".into()).unwrap();
        let xs: Vec<f64> = plan.polylines().iter().map(|l| l.first().x).collect();
        assert_eq!(xs, vec![150.0, 200.0, 250.0]);
        assert_eq!(plan.polylines()[0].points(), &[Point2::new(150.0, 45.0), Point2::new(150.0, 155.0)]);
        assert_eq!(plan.polylines()[1].first(), Point2::new(200.0, 155.0));
        assert_eq!(plan.status(), PlanStatus::Proposed);

        let two = plan_slices(&mask, &SliceParams::new(2), "q".into()).unwrap();
        assert_eq!(two.polylines().len(), 1);
        assert_eq!(two.polylines()[0].first().x, 200.0);
    }

    #[test]
    fn slice_errors() {
        let mask = rect_mask(10, 10, 2, 5, 2, 5);
        assert_eq!(plan_slices(&mask, &SliceParams::new(1), "p".into()), Err(PlanError::NothingToSlice));
        assert_eq!(plan_slices(&Bitmask::new(10, 10), &SliceParams::new(3), "p".into()), Err(PlanError::NoMeat));
    }

    #[test]
    fn slice_overshoot_clipped_to_image() {
        let mask = rect_mask(20, 10, 0, 20, 0, 10);
        let plan = plan_slices(&mask, &SliceParams::new(2), "p".into()).unwrap();
        assert_eq!(plan.polylines()[0].points(), &[Point2::new(10.0, 0.0), Point2::new(10.0, 10.0)]);
    }

    #[test]
    fn trim_straight_boundary() {
        let (w, h) = (60, 40);
        let masks = SegmentationMasks {
            meat: rect_mask(w, h, 10, 30, 5, 35),
            fat: rect_mask(w, h, 30, 50, 5, 35),
        };
        let plan = plan_trim(&masks, DEFAULT_TRIM_EPSILON_PX, "t".into()).unwrap();
        let l = &plan.polylines()[0];
        assert_eq!(l.len(), 2);
        assert!(l.points().iter().all(|p| (p.x - 30.0).abs() < 1e-12));
        assert!((l.first().y - 5.5).abs() < 1e-9 && (l.last().y - 34.5).abs() < 1e-9);
    }

    #[test]
    fn trim_requires_adjacency() {
        let masks = SegmentationMasks {
            meat: rect_mask(60, 40, 0, 10, 0, 10),
            fat: rect_mask(60, 40, 30, 50, 5, 35),
        };
        assert_eq!(plan_trim(&masks, 2.0, "t".into()), Err(PlanError::NoBoundary));
    }

    #[test]
    fn trim_single_pixel_interface() {
        let masks = SegmentationMasks {
            meat: rect_mask(10, 10, 2, 3, 2, 3),
            fat: rect_mask(10, 10, 3, 4, 2, 3),
        };
        let plan = plan_trim(&masks, 2.0, "t".into()).unwrap();
        assert_eq!(plan.polylines()[0].points(), &[Point2::new(3.0, 2.0), Point2::new(3.0, 3.0)]);
    }

    fn sample_plan() -> CutPlan {
        CutPlan::new("p".into(), vec![line(&[(10.0, 10.0), (20.0, 10.0), (30.0, 15.0)])], (100, 100)).unwrap()
    }

    #[test]
    fn move_and_move_back() {
        let plan = sample_plan();
        let orig = plan.polylines()[0].points()[0];
        let a = apply_edit(&plan, &Edit::new(0, EditOp::Move { index: 0, point: Point2::new(5.0, 5.0) })).unwrap();
        let b = apply_edit(&a, &Edit::new(0, EditOp::Move { index: 0, point: orig })).unwrap();
        assert_eq!(b.polylines(), plan.polylines());
        assert_eq!(b.revision(), 2);
        assert_eq!(b.status(), PlanStatus::Edited);
        assert_eq!(plan.revision(), 0);
        assert_eq!(b.replay().unwrap(), b.polylines());
    }

    #[test]
    fn edit_errors() {
        let two = CutPlan::new("p".into(), vec![line(&[(1.0, 1.0), (2.0, 2.0)])], (10, 10)).unwrap();
        assert_eq!(apply_edit(&two, &Edit::new(0, EditOp::Remove { index: 0 })), Err(PlanError::Degenerate));
        assert_eq!(
            apply_edit(&two, &Edit::new(0, EditOp::Add { index: 1, point: Point2::new(11.0, 1.0) })),
            Err(PlanError::OutsideImage)
        );
        assert_eq!(
            apply_edit(&two, &Edit::new(0, EditOp::Move { index: 1, point: Point2::new(1.0, 1.0) })),
            Err(PlanError::Degenerate)
        );
        assert_eq!(apply_edit(&two, &Edit::new(3, EditOp::Remove { index: 0 })), Err(PlanError::BadIndex(3)));
        let approved = two.approve(0).unwrap();
        assert_eq!(
            apply_edit(&approved, &Edit::new(0, EditOp::Move { index: 0, point: Point2::new(3.0, 3.0) })),
            Err(PlanError::Frozen)
        );
        assert_eq!(two.approve(1), Err(PlanError::StaleRevision));
        assert_eq!(approved.reject(0), Err(PlanError::Frozen));
    }

    #[test]
    fn add_inserts_before_index() {
        let plan = sample_plan();
        let e = apply_edit(&plan, &Edit::new(0, EditOp::Add { index: 1, point: Point2::new(15.0, 0.0) })).unwrap();
        assert_eq!(e.polylines()[0].points()[1], Point2::new(15.0, 0.0));
        assert_eq!(e.polylines()[0].len(), 4);
    }

    #[test]
    fn robot_path_identity_and_scale() {
        let plan = sample_plan().approve(0).unwrap();
        let cal = Calibration { h: Homography::identity(), cut_height_z: 2.0 };
        let path = to_robot_path(&plan, &cal, 3.0).unwrap();
        assert_eq!(path.points()[0], Point3::new(10.0, 10.0, 2.0));
        let scaled = Calibration { h: Homography::scale(0.1), cut_height_z: 1.0 };
        let single = CutPlan::new("s".into(), vec![line(&[(100.0, 50.0), (0.0, 0.0)])], (200, 200))
            .unwrap()
            .approve(0)
            .unwrap();
        let p = to_robot_path(&single, &scaled, 1.0).unwrap();
        assert!((p.points()[0].x - 10.0).abs() < 1e-12 && (p.points()[0].y - 5.0).abs() < 1e-12);
        assert_eq!(to_robot_path(&sample_plan(), &cal, 1.0), Err(PlanError::Unapproved));
    }

    #[test]
    fn path_progress_lookup() {
        let path = RobotPath::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0), Point3::new(2.0, 2.0, 0.0)],
            1.0,
        )
        .unwrap();
        assert_eq!(path.length(), 4.0);
        assert_eq!(path.segment_at(0.25), 0);
        assert_eq!(path.segment_at(0.5), 1);
        assert_eq!(path.segment_at(1.0), 1);
        assert_eq!(path.point_at(0.75), Point3::new(2.0, 1.0, 0.0));
    }

    #[test]
    fn plan_json_shape() {
        let v = serde_json::to_value(sample_plan().to_json()).unwrap();
        assert_eq!(v["status"], "proposed");
        assert_eq!(v["polylines"][0][2], serde_json::json!([30.0, 15.0]));
    }
}
