#![allow(dead_code)]

use cobot_core::geometry::Point2;
use cobot_core::planner::SegmentationMasks;
use cobot_core::raster::Bitmask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const W: u32 = 320;
pub const H: u32 = 240;

/// Rotated filled ellipse somewhere inside a `W x H` image.
pub fn random_blob(rng: &mut ChaCha8Rng) -> (Point2, f64, f64, f64) {
    let rx: f64 = rng.random_range(12.0..90.0);
    let ry = rng.random_range(12.0..70.0);
    let r = rx.max(ry);
    let cx = rng.random_range(r + 2.0..W as f64 - r - 2.0);
    let cy = rng.random_range(r.min(100.0) + 2.0..H as f64 - r.min(100.0) - 2.0);
    (Point2::new(cx, cy), rx, ry, rng.random_range(0.0..std::f64::consts::PI))
}

fn in_ellipse(p: Point2, c: Point2, rx: f64, ry: f64, rot: f64) -> bool {
    let q = (p - c).rotated(-rot);
    (q.x / rx).powi(2) + (q.y / ry).powi(2) <= 1.0
}

pub fn random_mask(rng: &mut ChaCha8Rng) -> Bitmask {
    let (c, rx, ry, rot) = random_blob(rng);
    Bitmask::from_fn(W, H, |x, y| in_ellipse(Point2::new(x as f64 + 0.5, y as f64 + 0.5), c, rx, ry, rot))
}

/// An elliptical specimen split by a wavy seam: fat above, meat below.
pub fn random_masks(rng: &mut ChaCha8Rng) -> SegmentationMasks {
    let c = Point2::new(rng.random_range(120.0..200.0), rng.random_range(100.0..140.0));
    let (rx, ry) = (rng.random_range(50.0..110.0), rng.random_range(40.0..90.0));
    let rot = rng.random_range(-0.3..0.3);
    let amp = rng.random_range(0.0..12.0);
    let freq = rng.random_range(0.02..0.15);
    let phase = rng.random_range(0.0..6.3);
    let offset = rng.random_range(-0.5..0.0) * ry;
    let seam = move |x: f64| c.y + offset + amp * (freq * x + phase).sin();
    let inside = move |x: u32, y: u32| in_ellipse(Point2::new(x as f64 + 0.5, y as f64 + 0.5), c, rx, ry, rot);
    let fat = Bitmask::from_fn(W, H, |x, y| inside(x, y) && (y as f64 + 0.5) < seam(x as f64 + 0.5));
    let meat = Bitmask::from_fn(W, H, |x, y| inside(x, y) && (y as f64 + 0.5) >= seam(x as f64 + 0.5));
    SegmentationMasks { meat, fat }
}

/// Distance from `p` to segment `ab`, written out independently of the library.
pub fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - qx).powi(2) + (p.y - qy).powi(2)).sqrt()
}

/// Largest distance from a dropped raw point to the simplified segment that
/// replaced it. Simplified vertices must be a subsequence of `raw`.
pub fn max_deviation(raw: &[Point2], simplified: &[Point2]) -> Option<f64> {
    let mut idx = Vec::with_capacity(simplified.len());
    let mut from = 0;
    for s in simplified {
        let i = from + raw[from..].iter().position(|p| p == s)?;
        idx.push(i);
        from = i;
    }
    if idx.first() != Some(&0) || idx.last() != Some(&(raw.len() - 1)) {
        return None;
    }
    let mut worst = 0.0f64;
    for w in idx.windows(2) {
        for p in &raw[w[0]..=w[1]] {
            worst = worst.max(seg_dist(*p, raw[w[0]], raw[w[1]]));
        }
    }
    Some(worst)
}

/// Pixel-square extent of a mask along x, computed from its set pixels.
pub fn x_extent(mask: &Bitmask) -> (f64, f64) {
    let xs: Vec<u32> = mask.iter_set().map(|(x, _)| x).collect();
    (*xs.iter().min().unwrap() as f64, *xs.iter().max().unwrap() as f64 + 1.0)
}
