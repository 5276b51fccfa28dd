//! Planar geometry shared by the perception, planning and assessment code.
//!
//! Everything here is plain `f64` arithmetic. Points carry no unit; callers
//! keep image-pixel and robot-plane values in separate containers.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance under which a point is treated as lying on a polygon edge.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polyline needs at least 2 points")]
    PolylineTooShort,
    #[error("consecutive duplicate point at index {0}")]
    DuplicatePoint(usize),
    #[error("polygon needs at least 3 vertices")]
    PolygonTooSmall,
    #[error("polygon is self-intersecting or has zero area")]
    NotSimple,
    #[error("corners do not form a rectangle")]
    NotRectangle,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("degenerate correspondences")]
    DegenerateCorrespondences,
    #[error("point at infinity")]
    PointAtInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Rotation by `theta` radians about the origin.
    pub fn rotated(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn rotated_about(self, center: Point2, theta: f64) -> Point2 {
        (self - center).rotated(theta) + center
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Shortest distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Twice the signed area (shoelace). Positive for counter-clockwise in a
/// y-up frame, which is clockwise on screen when y grows downward.
pub fn signed_area2(points: &[Point2]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| points[i].cross(points[(i + 1) % n]))
        .sum()
}

/// An ordered chain of at least two points with no consecutive repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeometryError;
    fn try_from(points: Vec<Point2>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::PolylineTooShort);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(GeometryError::DuplicatePoint(i + 1));
        }
        Ok(Polyline { points })
    }

    /// Builds a polyline after dropping consecutive duplicates.
    pub fn dedup(mut points: Vec<Point2>) -> Result<Self, GeometryError> {
        points.dedup();
        Polyline::new(points)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Distance from `p` to the nearest point on the chain.
    pub fn distance_to(&self, p: Point2) -> f64 {
        self.points
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A simple polygon, stored with positive signed area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::PolygonTooSmall);
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let area2 = signed_area2(&vertices);
        if area2 == 0.0 || !is_simple(&vertices) {
            return Err(GeometryError::NotSimple);
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Polygon::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area2(&self.vertices) / 2.0
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p.cross(q);
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Applies `f` to every vertex. Fails if the image is not simple.
    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Result<Polygon, GeometryError> {
        Polygon::new(self.vertices.iter().copied().map(f).collect())
    }

    pub fn translated(&self, v: Point2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&p| p + v).collect(),
        }
    }

    /// `(min, max)` corners of the axis-aligned bounds.
    pub fn bounds(&self) -> (Point2, Point2) {
        bounds(&self.vertices).expect("polygon has vertices")
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, self)
    }
}

fn bounds(points: &[Point2]) -> Option<(Point2, Point2)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

fn is_simple(v: &[Point2]) -> bool {
    let n = v.len();
    if v.windows(2).any(|w| w[0] == w[1]) || v[0] == v[n - 1] {
        return false;
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // Consecutive edges a-b, b-c may only meet at b.
        let c = v[(i + 2) % n];
        if orient(a, b, c) == 0.0 && (c - b).dot(a - b) > 0.0 {
            return false;
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Inside-or-on-boundary test.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if point_segment_distance(p, a, b) <= BOUNDARY_EPS {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Convex hull by monotone chain, positive orientation, collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// A (possibly degenerate) rectangle with canonically ordered corners.
///
/// Corner 0 has the smallest y (ties: smallest x); the rest follow clockwise
/// on screen, i.e. with y growing downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    corners: [Point2; 4],
}

impl OrientedBox {
    /// Validates that `corners` form a rectangle in cyclic order and
    /// relabels them canonically.
    pub fn from_corners(corners: [Point2; 4]) -> Result<Self, GeometryError> {
        if corners.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let s0 = corners[1] - corners[0];
        let s1 = corners[2] - corners[1];
        let s2 = corners[3] - corners[2];
        let s3 = corners[0] - corners[3];
        let scale = s0.norm().max(s1.norm()).max(1.0);
        let tol = 1e-6 * scale;
        let opposite_ok = (s0 + s2).norm() <= tol && (s1 + s3).norm() <= tol;
        let perpendicular = s0.dot(s1).abs() <= tol * scale;
        if !opposite_ok || !perpendicular {
            return Err(GeometryError::NotRectangle);
        }
        let mut c = corners;
        if signed_area2(&c) < 0.0 {
            c.reverse();
        }
        Ok(Self::canonical(c))
    }

    /// Rectangle centred at `center` with unit axis `axis`, spanning
    /// `half_u` along it and `half_v` across it.
    fn from_frame(center: Point2, axis: Point2, half_u: f64, half_v: f64) -> Self {
        let v = Point2::new(-axis.y, axis.x);
        let corners = [
            center - axis * half_u - v * half_v,
            center + axis * half_u - v * half_v,
            center + axis * half_u + v * half_v,
            center - axis * half_u + v * half_v,
        ];
        Self::canonical(corners)
    }

    fn canonical(corners: [Point2; 4]) -> Self {
        let extent = corners
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(1.0, f64::max);
        let tol = 1e-9 * extent;
        let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let start = (0..4)
            .filter(|&i| corners[i].y <= min_y + tol)
            .min_by(|&a, &b| corners[a].x.total_cmp(&corners[b].x))
            .unwrap_or(0);
        let mut out = [Point2::default(); 4];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = corners[(start + k) % 4];
        }
        OrientedBox { corners: out }
    }

    pub fn corners(&self) -> &[Point2; 4] {
        &self.corners
    }

    /// Length of the edge from corner 0 to corner 1.
    pub fn side_a(&self) -> f64 {
        self.corners[0].distance(self.corners[1])
    }

    /// Length of the edge from corner 1 to corner 2.
    pub fn side_b(&self) -> f64 {
        self.corners[1].distance(self.corners[2])
    }

    pub fn width(&self) -> f64 {
        self.side_a().min(self.side_b())
    }

    pub fn length(&self) -> f64 {
        self.side_a().max(self.side_b())
    }

    pub fn area(&self) -> f64 {
        self.side_a() * self.side_b()
    }

    pub fn center(&self) -> Point2 {
        let s = self.corners.iter().fold(Point2::default(), |acc, &p| acc + p);
        s * 0.25
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let u = self.corners[1] - self.corners[0];
        let v = self.corners[3] - self.corners[0];
        let d = p - self.corners[0];
        let (lu, lv) = (u.norm(), v.norm());
        let pu = if lu > 0.0 { d.dot(u) / lu } else { 0.0 };
        let pv = if lv > 0.0 { d.dot(v) / lv } else { 0.0 };
        let off = if lu > 0.0 && lv > 0.0 {
            0.0
        } else if lu > 0.0 {
            d.cross(u).abs() / lu
        } else if lv > 0.0 {
            d.cross(v).abs() / lv
        } else {
            d.norm()
        };
        pu >= -tol && pu <= lu + tol && pv >= -tol && pv <= lv + tol && off <= tol
    }
}

/// Minimum-area enclosing rectangle via rotating calipers over hull edges.
///
/// Collinear input gives a zero-width box, a single point a zero-size one.
pub fn min_area_box(points: &[Point2]) -> Result<OrientedBox, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let hull = convex_hull(points);
    match hull.len() {
        1 => return Ok(OrientedBox::from_frame(hull[0], Point2::new(1.0, 0.0), 0.0, 0.0)),
        2 => {
            let axis = hull[1] - hull[0];
            let len = axis.norm();
            let center = (hull[0] + hull[1]) * 0.5;
            return Ok(OrientedBox::from_frame(center, axis * (1.0 / len), len / 2.0, 0.0));
        }
        _ => {}
    }

    let n = hull.len();
    let edge_frame = |i: usize| {
        let e = hull[(i + 1) % n] - hull[i];
        let u = e * (1.0 / e.norm());
        (u, Point2::new(-u.y, u.x))
    };
    let advance = |mut k: usize, key: &dyn Fn(Point2) -> f64| {
        for _ in 0..n {
            let next = (k + 1) % n;
            if key(hull[next]) >= key(hull[k]) {
                k = next;
            } else {
                break;
            }
        }
        k
    };

    // Calipers: the far, right and left support points only move forward.
    let (u0, v0) = edge_frame(0);
    let mut far = advance(1, &|p: Point2| p.dot(v0));
    let mut right = advance(1, &|p: Point2| p.dot(u0));
    let mut left = advance(far, &|p: Point2| -p.dot(u0));
    let mut best: Option<(f64, usize, usize, usize, usize)> = None;
    for i in 0..n {
        let (u, v) = edge_frame(i);
        far = advance(far, &|p: Point2| p.dot(v));
        right = advance(right, &|p: Point2| p.dot(u));
        left = advance(left, &|p: Point2| -p.dot(u));
        let a = hull[i];
        let area = (hull[right] - hull[left]).dot(u) * (hull[far] - a).dot(v);
        if best.is_none_or(|b| area < b.0) {
            best = Some((area, i, right, left, far));
        }
    }
    let (_, i, right, left, far) = best.expect("hull has edges");
    let (u, v) = edge_frame(i);
    let a = hull[i];
    let (u_lo, u_hi) = (hull[left].dot(u), hull[right].dot(u));
    let (v_lo, v_hi) = (a.dot(v), hull[far].dot(v));
    let center = u * ((u_lo + u_hi) / 2.0) + v * ((v_lo + v_hi) / 2.0);
    Ok(OrientedBox::from_frame(center, u, (u_hi - u_lo) / 2.0, (v_hi - v_lo) / 2.0))
}

/// Ramer-Douglas-Peucker simplification.
///
/// Keeps both endpoints; every dropped point lies within `epsilon` of the
/// output segment that replaced it. With `epsilon == 0` only points lying
/// exactly on their replacing segment are dropped.
pub fn simplify_polyline(path: &Polyline, epsilon: f64) -> Polyline {
    let pts = path.points();
    let n = pts.len();
    let epsilon = epsilon.max(0.0);
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (pts[lo], pts[hi]);
        let (idx, dist) = (lo + 1..hi)
            .map(|i| (i, point_segment_distance(pts[i], a, b)))
            .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dist > epsilon {
            keep[idx] = true;
            stack.push((lo, idx));
            stack.push((idx, hi));
        }
    }
    let out: Vec<Point2> = pts
        .iter()
        .zip(&keep)
        .filter_map(|(&p, &k)| k.then_some(p))
        .collect();
    // A closed chain (first == last) may collapse to a single repeated point.
    if out.len() == 2 && out[0] == out[1] {
        let far = (1..n - 1)
            .max_by(|&i, &j| pts[i].distance(pts[0]).total_cmp(&pts[j].distance(pts[0])))
            .expect("closed chain has interior points");
        return Polyline::new(vec![pts[0], pts[far], pts[n - 1]]).expect("distinct points");
    }
    Polyline::new(out).expect("subsequence of a valid polyline keeps distinct neighbours")
}

/// Planar projective transform, normalised so that `m[(2, 2)] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let s = m[(2, 2)];
        if s.abs() < 1e-12 {
            return Err(GeometryError::DegenerateCorrespondences);
        }
        let m = m / s;
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::DegenerateCorrespondences);
        }
        Ok(Homography { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn scale(s: f64) -> Self {
        Homography::from_rows([[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, 1.0]])
            .expect("nonzero scale")
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography::from_rows([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])
            .expect("translation is invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.m[(r, c)]))
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.m.try_inverse().expect("invertible by construction");
        Homography::from_matrix(inv).expect("inverse of a homography is a homography")
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        homography_apply(self, p)
    }
}

pub fn homography_apply(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    let v = h.m * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() < 1e-12 {
        return Err(GeometryError::PointAtInfinity);
    }
    Ok(Point2::new(v.x / v.z, v.y / v.z))
}

/// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
fn normalizing_transform(points: &[Point2]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let c = points.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / n);
    let mean = points.iter().map(|&p| p.distance(c)).sum::<f64>() / n;
    if mean <= 0.0 || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply_mat(m: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

fn has_collinear_triple(points: &[Point2]) -> bool {
    let scale = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| a.distance(*b)))
        .fold(0.0, f64::max);
    let tol = 1e-9 * scale * scale;
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if orient(points[i], points[j], points[k]).abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares planar homography (normalised DLT) mapping `src` onto `dst`.
pub fn homography_fit(src: &[Point2], dst: &[Point2]) -> Result<Homography, GeometryError> {
    if src.len() < 4 || src.len() != dst.len() {
        return Err(GeometryError::DegenerateCorrespondences);
    }
    if src.iter().chain(dst).any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if src.len() == 4 && (has_collinear_triple(src) || has_collinear_triple(dst)) {
        return Err(GeometryError::DegenerateCorrespondences);
    }
    let ts = normalizing_transform(src).ok_or(GeometryError::DegenerateCorrespondences)?;
    let td = normalizing_transform(dst).ok_or(GeometryError::DegenerateCorrespondences)?;

    let n = src.len();
    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&s, &d)) in src.iter().zip(dst).enumerate() {
        let s = apply_mat(&ts, s);
        let d = apply_mat(&td, d);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateCorrespondences)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = order[0];
    // A second (near-)null direction means the solution is not unique.
    let second = sv[order[1]];
    let largest = sv[order[order.len() - 1]];
    if second <= 1e-10 * largest {
        return Err(GeometryError::DegenerateCorrespondences);
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(GeometryError::DegenerateCorrespondences)?;
    Homography::from_matrix(td_inv * hn * ts)
}
