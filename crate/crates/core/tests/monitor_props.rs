use cobot_core::geometry::Point2;
use cobot_core::knife::{calibrate_threshold, classify_contact, ForceSample, ForceThreshold};
use cobot_core::perception::{classify_zone, HandFrame, ZoneState};
use cobot_core::scenario::default_zones;
use cobot_core::sim::hand_landmarks;
use proptest::prelude::*;

fn landmarks(max: usize) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((-40.0f64..360.0, -40.0f64..280.0).prop_map(|(x, y)| Point2::new(x, y)), 0..=max)
}

fn trace() -> impl Strategy<Value = Vec<ForceSample>> {
    prop::collection::vec(0.0f64..25.0, 0..120)
        .prop_map(|f| f.into_iter().enumerate().map(|(i, v)| ForceSample::new(i as f64 * 0.002, v)).collect())
}

proptest! {
    #[test]
    fn adding_a_landmark_never_lowers_severity(mut lm in landmarks(20), extra in landmarks(1)) {
        let zones = default_zones((320, 240));
        let before = classify_zone(&HandFrame::new(0.0, lm.clone(), 0).unwrap(), &zones);
        lm.extend(extra);
        let after = classify_zone(&HandFrame::new(0.0, lm, 0).unwrap(), &zones);
        prop_assert!(after >= before);
    }

    #[test]
    fn severity_ignores_landmark_order(lm in landmarks(21), seed in any::<u64>()) {
        let zones = default_zones((320, 240));
        let mut shuffled = lm.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(
            classify_zone(&HandFrame::new(0.0, lm, 0).unwrap(), &zones),
            classify_zone(&HandFrame::new(0.0, shuffled, 0).unwrap(), &zones)
        );
    }

    #[test]
    fn reach_in_from_operator_edge_is_ordered(x in 60.0f64..260.0, steps in 20usize..200) {
        let zones = default_zones((320, 240));
        let mut last = ZoneState::Clear;
        let mut seen_safe = false;
        for k in 0..=steps {
            let y = 300.0 - 200.0 * k as f64 / steps as f64;
            let z = classify_zone(&HandFrame::new(0.0, hand_landmarks(Point2::new(x, y)), 0).unwrap(), &zones);
            seen_safe |= z == ZoneState::Safe;
            prop_assert!(z >= last, "{:?} after {:?} at y={}", z, last, y);
            prop_assert!(z != ZoneState::Warning || seen_safe);
            last = z;
        }
        prop_assert_eq!(last, ZoneState::Warning);
    }

    #[test]
    fn debounce_one_matches_linear_scan(tr in trace(), base in 0.5f64..15.0, margin in 0.0f64..0.6) {
        let th = ForceThreshold::new(base, margin, 1).unwrap();
        let eff = base * (1.0 + margin);
        let oracle = tr.iter().find(|s| s.force >= eff).map(|s| s.t);
        prop_assert_eq!(classify_contact(tr, th).map(|e| e.t_detect), oracle);
    }

    #[test]
    fn debounce_matches_run_scan(tr in trace(), base in 0.5f64..15.0, debounce in 1u32..5) {
        let th = ForceThreshold::new(base, 0.25, debounce).unwrap();
        let eff = th.effective();
        let mut run = 0;
        let mut oracle = None;
        for s in &tr {
            run = if s.force >= eff { run + 1 } else { 0 };
            if run == debounce {
                oracle = Some(s.t);
                break;
            }
        }
        let ev = classify_contact(tr, th);
        prop_assert_eq!(ev.map(|e| e.t_detect), oracle);
        if let Some(e) = ev {
            prop_assert!(e.peak >= eff);
        }
    }

    #[test]
    fn raising_threshold_never_fires_earlier(tr in trace(), base in 0.5f64..10.0, bump in 0.0f64..5.0, debounce in 1u32..4) {
        let lo = classify_contact(tr.clone(), ForceThreshold::new(base, 0.25, debounce).unwrap());
        let hi = classify_contact(tr, ForceThreshold::new(base + bump, 0.25, debounce).unwrap());
        if let Some(h) = hi {
            prop_assert!(lo.is_some_and(|l| l.t_detect <= h.t_detect));
        }
    }

    #[test]
    fn scaling_forces_and_threshold_keeps_detection_time(tr in trace(), base in 0.5f64..4.5, k in -3i32..=2, debounce in 1u32..4) {
        let c = 2f64.powi(k);
        let th = ForceThreshold::new(base, 0.25, debounce).unwrap();
        let scaled_th = ForceThreshold::new(base * c, 0.25, debounce).unwrap();
        let scaled: Vec<ForceSample> = tr.iter().map(|s| ForceSample::new(s.t, s.force * c)).collect();
        prop_assert_eq!(
            classify_contact(tr, th).map(|e| e.t_detect),
            classify_contact(scaled, scaled_th).map(|e| e.t_detect)
        );
    }

    #[test]
    fn zeros_never_fire(n in 0usize..500, base in 0.01f64..20.0, debounce in 1u32..4) {
        let Ok(th) = ForceThreshold::new(base, 0.0, debounce) else { return Ok(()) };
        let zeros = (0..n).map(|i| ForceSample::new(i as f64 * 0.002, 0.0));
        prop_assert!(classify_contact(zeros, th).is_none());
    }

    #[test]
    fn calibration_base_is_the_maximum(traces in prop::collection::vec(trace(), 1..6)) {
        let oracle = traces.iter().flatten().map(|s| s.force).fold(f64::NEG_INFINITY, f64::max);
        match calibrate_threshold(&traces, 0.0, 2) {
            Ok(th) => prop_assert_eq!(th.base, oracle),
            Err(_) => prop_assert!(!(oracle > 0.0)),
        }
    }
}

#[test]
fn empty_frame_is_clear() {
    let zones = default_zones((320, 240));
    assert_eq!(classify_zone(&HandFrame::empty(1.0), &zones), ZoneState::Clear);
    assert!(HandFrame::new(0.0, vec![Point2::default(); 22], 0).is_err());
}

#[test]
fn zero_base_is_rejected() {
    assert!(ForceThreshold::new(0.0, 0.25, 2).is_err());
}
