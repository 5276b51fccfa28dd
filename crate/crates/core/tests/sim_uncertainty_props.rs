use cobot_core::geometry::{OrientedBox, Point2, Polygon};
use cobot_core::harness::loin;
use cobot_core::planner::{segment, ColorThresholds, Point3, RobotPath};
use cobot_core::raster::RasterImage;
use cobot_core::sim::{render, simulate_cut, MeatSpec, SimConfig};
use cobot_core::uncertainty::{box_displacement, evaluate_cut, fit_beta, psi, MeatLocation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec() -> impl Strategy<Value = MeatSpec> {
    (8.0f64..16.0, 5.0f64..9.0, 0.8f64..2.0, 12.0f64..20.0, 8.0f64..14.0)
        .prop_map(|(w, h, f, cx, cy)| loin(w, h, f, Point2::new(cx, cy)))
}

fn oriented_box() -> impl Strategy<Value = OrientedBox> {
    (20.0f64..300.0, 20.0f64..220.0, 1.0f64..60.0, 1.0f64..60.0, 0.0f64..1.5).prop_map(|(x, y, a, b, th)| {
        let c = Point2::new(x, y);
        let corners = [(-a, -b), (a, -b), (a, b), (-a, b)].map(|(u, v)| c + Point2::new(u, v).rotated(th));
        OrientedBox::from_corners(corners).unwrap()
    })
}

fn location(b: OrientedBox) -> MeatLocation {
    MeatLocation { bbox: b, t: 0.0 }
}

fn straight(y: f64, x0: f64, x1: f64) -> RobotPath {
    RobotPath::new(vec![Point3::new(x0, y, 1.0), Point3::new(x1, y, 1.0)], 2.0).unwrap()
}

/// Pixels whose square meets the polygon boundary, by brute force.
fn boundary_band(poly: &Polygon, w: u32, h: u32) -> usize {
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            if poly.edges().any(|(a, b)| cobot_core::geometry::point_segment_distance(c, a, b) <= std::f64::consts::FRAC_1_SQRT_2) {
                n += 1;
            }
        }
    }
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_segment_area_within_boundary_band(s in spec()) {
        let cfg = SimConfig::default();
        let img: RasterImage = render(&s, &cfg).unwrap();
        let masks = segment(&img, &ColorThresholds::default());
        let px = s.world_meat().map(|p| p * (1.0 / cfg.pixel_pitch)).unwrap();
        let band = boundary_band(&px, img.width(), img.height());
        let diff = (masks.meat.count() as f64 - px.area()).abs();
        prop_assert!(diff <= band as f64, "area {} vs {} pixels, band {}", px.area(), masks.meat.count(), band);
        let hidden = MeatSpec { bone: Some(Polygon::rect(1.0, 1.0, 3.0, 3.0).unwrap()), ..s.clone() };
        prop_assert_eq!(render(&hidden, &cfg).unwrap(), img);
    }

    #[test]
    fn boneless_cut_without_slip_leaves_pose(s in spec(), dy in -0.4f64..0.4, seed in any::<u64>()) {
        let mut cfg = SimConfig::default();
        cfg.drag.slip_noise = 0.0;
        let (lo, hi) = s.world_meat().bounds();
        let y = (lo.y + hi.y) / 2.0 + dy * (hi.y - lo.y);
        let out = simulate_cut(&s, &straight(y, lo.x - 1.0, hi.x + 1.0), &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(out.cut_applied);
        prop_assert_eq!(out.post.pose, s.pose);
    }

    #[test]
    fn forces_stay_in_sensor_range_and_replay(s in spec(), bx in 0.1f64..0.9, bw in 0.2f64..3.0, ramp in 0.1f64..5000.0, seed in any::<u64>()) {
        let mut cfg = SimConfig::default();
        cfg.force.bone_ramp_rate = ramp;
        let (lo, hi) = s.world_meat().bounds();
        let x = lo.x + bx * (hi.x - lo.x) - s.pose.x;
        let boned = MeatSpec::new(s.meat.clone(), s.fat.clone(), Some(Polygon::rect(x, 1.0, x + bw, 3.0).unwrap()), s.pose).unwrap();
        let path = straight(lo.y + 2.0, lo.x - 1.0, hi.x + 1.0);
        let a = simulate_cut(&boned, &path, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = simulate_cut(&boned, &path, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(a.forces.iter().all(|f| f.force >= 0.0 && f.force <= cfg.force.saturation));
        prop_assert_eq!(&a, &b);
        prop_assert!(a.first_bone_contact.is_some());
        prop_assert!(!a.cut_applied);
    }

    #[test]
    fn drag_grows_with_bone_chord(s in spec(), w1 in 0.2f64..1.5, extra in 0.0f64..1.5, seed in any::<u64>()) {
        let mut cfg = SimConfig::default();
        cfg.drag.slip_noise = 0.0;
        let (lo, hi) = s.world_meat().bounds();
        let mid = (lo.x + hi.x) / 2.0 - s.pose.x;
        let drag = |w: f64| {
            let bone = Polygon::rect(mid - w / 2.0, 1.0, mid + w / 2.0, 3.0).unwrap();
            let boned = MeatSpec::new(s.meat.clone(), s.fat.clone(), Some(bone), s.pose).unwrap();
            let out = simulate_cut(&boned, &straight(lo.y + 2.0, lo.x - 1.0, hi.x + 1.0), &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            out.post.world_meat().centroid().distance(s.world_meat().centroid())
        };
        prop_assert!(drag(w1 + extra) >= drag(w1) - 1e-9);
    }

    #[test]
    fn psi_is_bounded_and_finite(d in prop::num::f64::NORMAL | prop::num::f64::ZERO, beta in prop::num::f64::NORMAL) {
        let p = psi(d, beta);
        prop_assert!(!p.is_nan());
        prop_assert!(p < 1.0);
    }

    #[test]
    fn psi_increases_in_d_and_beta(d in 0.01f64..100.0, beta in 0.01f64..2.0, k in 1.0001f64..3.0) {
        prop_assume!(beta * d * k < 15.0);
        prop_assert!(psi(d * k, beta) > psi(d, beta));
        prop_assert!(psi(d, beta * k) > psi(d, beta));
        prop_assert_eq!(psi(0.0, beta), 0.0);
    }

    #[test]
    fn displacement_symmetric_and_exact_for_translation(a in oriented_box(), b in oriented_box(), tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
        prop_assert_eq!(box_displacement(&a, &b), box_displacement(&b, &a));
        let moved = OrientedBox::from_corners(a.corners().map(|p| p + Point2::new(tx, ty))).unwrap();
        let t = (tx * tx + ty * ty).sqrt();
        prop_assert!((box_displacement(&a, &moved) - t).abs() <= 1e-9 * (1.0 + t));
    }

    #[test]
    fn lowering_tau_keeps_alerts(a in oriented_box(), b in oriented_box(), beta in 0.005f64..0.5, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let strict = evaluate_cut(&location(a), &location(b), beta, hi).unwrap();
        let loose = evaluate_cut(&location(a), &location(b), beta, lo).unwrap();
        prop_assert!(!strict.alert || loose.alert);
    }

    #[test]
    fn beta_fit_recovers_generator(beta in 0.005f64..1.0, ds in prop::collection::vec(0.5f64..30.0, 1..10)) {
        let pairs: Vec<(f64, f64)> = ds.iter().map(|&d| (d, psi(d, beta))).filter(|p| p.1 < 1.0 - 1e-9).collect();
        prop_assume!(!pairs.is_empty());
        let fit = fit_beta(&pairs).unwrap();
        prop_assert!((fit - beta).abs() <= 1e-6 * beta, "fit {} vs {}", fit, beta);
    }
}
