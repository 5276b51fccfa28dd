use cobot_core::geometry::{Point2, Polyline};
use cobot_core::knife::ContactEvent;
use cobot_core::perception::ZoneState;
use cobot_core::planner::{CutPlan, Edit, EditOp, PlanId, PlanStatus, Point3, RobotPath};
use cobot_core::supervisor::{
    handle_event, led_for, velocity_command, Action, Event, LedColor, Supervisor, SupervisorConfig, SupervisorState,
};
use cobot_core::uncertainty::CutAssessment;
use proptest::prelude::*;

fn plan(id: &str) -> CutPlan {
    let line = Polyline::new(vec![Point2::new(10.0, 10.0), Point2::new(10.0, 80.0), Point2::new(40.0, 80.0)]).unwrap();
    CutPlan::new(PlanId::from(id), vec![line], (100, 100)).unwrap()
}

fn zone() -> impl Strategy<Value = ZoneState> {
    prop_oneof![Just(ZoneState::Clear), Just(ZoneState::Safe), Just(ZoneState::Warning)]
}

fn event() -> impl Strategy<Value = Event> {
    let id = prop_oneof![Just("a"), Just("b")].prop_map(PlanId::from);
    let rev = 0u64..3;
    prop_oneof![
        Just(Event::MeatPlaced),
        prop_oneof![Just("a"), Just("b")].prop_map(|i| Event::PlanProposed(plan(i))),
        (id.clone(), rev.clone(), 0usize..4, 0.0f64..100.0).prop_map(|(plan_id, revision, index, x)| {
            Event::EditReceived { plan_id, revision, edit: Edit::new(0, EditOp::Move { index, point: Point2::new(x, 50.0) }) }
        }),
        (id.clone(), rev.clone()).prop_map(|(plan_id, revision)| Event::Approved { plan_id, revision }),
        (id, rev).prop_map(|(plan_id, revision)| Event::Rejected { plan_id, revision }),
        zone().prop_map(Event::ZoneChanged),
        Just(Event::ContactDetected(ContactEvent { t_detect: 1.0, peak: 9.0 })),
        Just(Event::CutFinished),
        any::<bool>().prop_map(|alert| Event::AssessmentReady(CutAssessment {
            d: if alert { 40.0 } else { 1.0 },
            psi: if alert { 0.96 } else { 0.05 },
            beta: 0.05,
            tau: 0.5,
            alert,
        })),
        Just(Event::InspectionCleared),
        Just(Event::Reset),
    ]
}

fn all_states() -> Vec<SupervisorState> {
    let id = PlanId::from("p");
    vec![
        SupervisorState::Idle,
        SupervisorState::AwaitingApproval { plan_id: id.clone() },
        SupervisorState::Executing { plan_id: id.clone(), progress: 0.3 },
        SupervisorState::PausedHuman { plan_id: id.clone(), progress: 0.3 },
        SupervisorState::EstoppedContact { plan_id: Some(id.clone()) },
        SupervisorState::PostCut { plan_id: PlanId::from("p") },
        SupervisorState::AwaitingInspection { plan_id: PlanId::from("p") },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn random_event_streams_keep_safety_properties(events in prop::collection::vec(event(), 1..80), safe in any::<bool>()) {
        let config = SupervisorConfig { resume_on: if safe { cobot_core::supervisor::ResumeOn::Safe } else { Default::default() } };
        let mut sup = Supervisor::new(config);
        let mut approved: Vec<(PlanId, u64)> = Vec::new();
        let mut progress = 0.0;
        for ev in &events {
            let before = sup.clone();
            if let Event::Approved { plan_id, revision } = ev {
                approved.push((plan_id.clone(), *revision));
            }
            let actions = sup.handle_event(ev);
            let (pure, pure_actions) = handle_event(&before, ev);
            prop_assert_eq!(&pure, &sup);
            prop_assert_eq!(&pure_actions, &actions);

            if before.state().is_terminal() && !matches!(ev, Event::Reset) {
                prop_assert_eq!(before.state(), sup.state());
            }
            for a in &actions {
                if let Action::Execute(p) = a {
                    prop_assert_eq!(p.status(), PlanStatus::Approved);
                    prop_assert!(approved.contains(&(p.plan_id().clone(), p.revision())));
                }
            }
            if sup.state().is_executing() {
                let p = sup.plan().expect("executing needs a plan");
                prop_assert_eq!(p.status(), PlanStatus::Approved);
                prop_assert_eq!(sup.state().plan_id(), Some(p.plan_id()));
            }
            if sup.zone() == ZoneState::Warning {
                prop_assert!(!sup.state().is_executing());
            }
            prop_assert_eq!(sup.led(), led_for(sup.state(), sup.zone()));
            let led_changed = before.led() != sup.led();
            prop_assert_eq!(actions.iter().any(|a| matches!(a, Action::Led(_))), led_changed);

            if sup.state().is_executing() {
                progress = (progress + 0.05f64).min(0.95);
                sup.advance(progress);
            }
        }
    }

    #[test]
    fn gated_velocity_is_zero(progress in 0.0f64..1.0, speed in 0.1f64..10.0) {
        let path = RobotPath::new(vec![Point3::new(0.0, 0.0, 1.0), Point3::new(3.0, 4.0, 1.0)], speed).unwrap();
        prop_assert_eq!(velocity_command(&path, progress, true), [0.0; 3]);
        let v = velocity_command(&path, progress, false);
        prop_assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - speed).abs() < 1e-12);
    }
}

#[test]
fn led_is_total_and_deterministic() {
    for s in all_states() {
        for z in [ZoneState::Clear, ZoneState::Safe, ZoneState::Warning] {
            let a = led_for(&s, z);
            assert_eq!(a, led_for(&s, z));
            if z == ZoneState::Warning {
                assert_eq!(a, LedColor::Red);
            }
        }
    }
}

#[test]
fn approval_during_warning_waits_for_the_zone() {
    let mut sup = Supervisor::default();
    sup.handle_event(&Event::MeatPlaced);
    sup.handle_event(&Event::PlanProposed(plan("a")));
    sup.handle_event(&Event::ZoneChanged(ZoneState::Warning));
    let acts = sup.handle_event(&Event::Approved { plan_id: PlanId::from("a"), revision: 0 });
    assert!(acts.contains(&Action::Halt));
    assert_eq!(sup.state().name(), "paused_human");
    assert_eq!(sup.led(), LedColor::Red);
    let acts = sup.handle_event(&Event::ZoneChanged(ZoneState::Clear));
    assert!(sup.state().is_executing());
    assert!(acts.contains(&Action::Resume));
}

proptest! {
    #[test]
    fn integrated_velocity_tracks_the_path(
        pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 2..6),
        speed in 0.5f64..5.0,
    ) {
        let pts: Vec<Point3> = pts.iter().map(|&(x, y)| Point3::new(x, y, 1.0)).collect();
        prop_assume!(pts.windows(2).all(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y) > 0.5));
        let path = RobotPath::new(pts.clone(), speed).unwrap();
        let dt = 1.0 / 500.0;
        let len = path.length();
        let mut pos = [pts[0].x, pts[0].y, pts[0].z];
        let mut s = 0.0;
        while s < len {
            let v = velocity_command(&path, s / len, false);
            prop_assert!(((v[0].powi(2) + v[1].powi(2) + v[2].powi(2)).sqrt() - speed).abs() < 1e-9);
            for k in 0..3 {
                pos[k] += v[k] * dt;
            }
            s += speed * dt;
        }
        let end = *pts.last().unwrap();
        let err = ((pos[0] - end.x).powi(2) + (pos[1] - end.y).powi(2) + (pos[2] - end.z).powi(2)).sqrt();
        prop_assert!(err <= speed * dt * (pts.len() as f64) + 1e-9, "ended {:?} vs {:?}", pos, end);
    }
}
