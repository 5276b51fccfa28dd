mod common;

use cobot_core::geometry::{Homography, Point2};
use cobot_core::planner::{
    apply_edit, plan_slices, segment, to_robot_path, Calibration, ChannelBounds, ColorThresholds, CutPlan, Edit,
    EditOp, PlanId, SliceParams,
};
use cobot_core::raster::{Bitmask, RasterImage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bounds() -> impl Strategy<Value = ChannelBounds> {
    let pair = (any::<u8>(), any::<u8>()).prop_map(|(a, b)| [a.min(b), a.max(b)]);
    (pair.clone(), pair.clone(), pair).prop_map(|(r, g, b)| ChannelBounds { r, g, b })
}

fn image() -> impl Strategy<Value = RasterImage> {
    (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |px| RasterImage::new(w, h, px).unwrap())
    })
}

fn shifted(mask: &Bitmask, dx: u32) -> Bitmask {
    Bitmask::from_fn(mask.width(), mask.height(), |x, y| x >= dx && mask.get(x - dx, y))
}

fn edit() -> impl Strategy<Value = EditOp> {
    let point = (0.0f64..320.0, 0.0f64..240.0).prop_map(|(x, y)| Point2::new(x, y));
    prop_oneof![
        (0usize..6, point.clone()).prop_map(|(index, point)| EditOp::Move { index, point }),
        (0usize..7, point).prop_map(|(index, point)| EditOp::Add { index, point }),
        (0usize..6).prop_map(|index| EditOp::Remove { index }),
    ]
}

proptest! {
    #[test]
    fn segmentation_masks_are_disjoint(img in image(), meat in bounds(), fat in bounds()) {
        let m = segment(&img, &ColorThresholds { meat, fat });
        for y in 0..img.height() {
            for x in 0..img.width() {
                prop_assert!(!(m.meat.get(x, y) && m.fat.get(x, y)));
                prop_assert_eq!(m.meat.get(x, y), meat.contains(img.get(x, y)));
            }
        }
    }

    #[test]
    fn slices_partition_the_extent(seed in any::<u64>(), n in 2u32..9) {
        let mask = common::random_mask(&mut ChaCha8Rng::seed_from_u64(seed));
        let plan = plan_slices(&mask, &SliceParams::new(n), PlanId::from("p")).unwrap();
        let (lo, hi) = common::x_extent(&mask);
        let xs: Vec<f64> = plan.polylines().iter().map(|l| l.first().x).collect();
        prop_assert_eq!(xs.len(), n as usize - 1);
        for (k, x) in xs.iter().enumerate() {
            prop_assert!(*x > lo && *x < hi);
            prop_assert!((x - (lo + (k + 1) as f64 * (hi - lo) / n as f64)).abs() <= 1e-9);
        }
    }

    #[test]
    fn shifting_the_mask_shifts_the_cuts(seed in any::<u64>(), n in 2u32..6, dx in 0u32..20) {
        let mask = common::random_mask(&mut ChaCha8Rng::seed_from_u64(seed));
        let (_, hi) = common::x_extent(&mask);
        prop_assume!(hi + (dx as f64) < mask.width() as f64);
        let a = plan_slices(&mask, &SliceParams::new(n), PlanId::from("a")).unwrap();
        let b = plan_slices(&shifted(&mask, dx), &SliceParams::new(n), PlanId::from("b")).unwrap();
        for (la, lb) in a.polylines().iter().zip(b.polylines()) {
            prop_assert!((lb.first().x - la.first().x - dx as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn edit_log_replays_to_current_waypoints(seed in any::<u64>(), ops in prop::collection::vec(edit(), 1..12)) {
        let mask = common::random_mask(&mut ChaCha8Rng::seed_from_u64(seed));
        let proposed = plan_slices(&mask, &SliceParams::new(3), PlanId::from("p")).unwrap();
        let snapshot = proposed.clone();
        let mut plan = proposed.clone();
        for op in ops {
            let line = (seed % 2) as usize;
            if let Ok(next) = apply_edit(&plan, &Edit::new(line, op)) {
                prop_assert_eq!(next.revision(), plan.revision() + 1);
                plan = next;
            }
        }
        prop_assert_eq!(&proposed, &snapshot);
        prop_assert_eq!(plan.replay().unwrap(), plan.polylines().to_vec());
        prop_assert_eq!(plan.proposed_polylines(), proposed.polylines());
    }

    #[test]
    fn robot_path_keeps_waypoint_order(seed in any::<u64>(), n in 2u32..6, s in 0.02f64..0.3, tx in -10.0f64..10.0) {
        let mask = common::random_mask(&mut ChaCha8Rng::seed_from_u64(seed));
        let plan = plan_slices(&mask, &SliceParams::new(n), PlanId::from("p")).unwrap();
        let plan = plan.approve(plan.revision()).unwrap();
        let h = Homography::from_rows([[s, 0.0, tx], [0.0, s, -tx], [0.0, 0.0, 1.0]]).unwrap();
        let path = to_robot_path(&plan, &Calibration { h, cut_height_z: 0.5 }, 2.0).unwrap();
        let pixels: Vec<Point2> = plan.polylines().iter().flat_map(|l| l.points().to_vec()).collect();
        prop_assert_eq!(path.points().len(), pixels.len());
        for (q, p) in path.points().iter().zip(&pixels) {
            prop_assert!(h.inverse().apply(q.xy()).unwrap().distance(*p) <= 1e-6);
            prop_assert_eq!(q.z, 0.5);
        }
    }
}

#[test]
fn unapproved_plans_do_not_reach_the_robot() {
    let mask = Bitmask::from_fn(40, 30, |x, y| (5..35).contains(&x) && (5..25).contains(&y));
    let plan: CutPlan = plan_slices(&mask, &SliceParams::new(2), PlanId::from("p")).unwrap();
    let cal = Calibration { h: Homography::identity(), cut_height_z: 1.0 };
    assert!(to_robot_path(&plan, &cal, 1.0).is_err());
    let approved = plan.approve(0).unwrap();
    assert!(apply_edit(&approved, &Edit::new(0, EditOp::Remove { index: 0 })).is_err());
    assert!(plan.approve(1).is_err());
}
