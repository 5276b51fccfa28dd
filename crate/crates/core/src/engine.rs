//! Discrete-event run loop binding the simulator, sensors, console and
//! supervisor on one simulation clock.
//!
//! Time is kept in integer nanoseconds. Control ticks fall at
//! `round(k * 1e9 / control_hz)`, safety ticks likewise at `safety_hz`.
//! Simultaneous items are ordered contact, zone, operator, internal, then by
//! insertion.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::knife::{calibrate_threshold, ContactClassifier, ContactEvent, ForceSample, ForceThreshold, KnifeError};
use crate::perception::{classify_zone, HandFrame, PerceptionError, TracePlayback, ZoneConfig, ZoneState};
use crate::planner::{
    plan_slices, plan_trim, segment, to_robot_path, Calibration, CutPlan, PlanError, PlanId, Point3, RobotPath,
    SegmentationMasks, SliceParams,
};
use crate::protocol::{to_edit, ClientMessage, Decision, ServerMessage};
use crate::raster::RasterImage;
use crate::scenario::{Scenario, Task};
use crate::sim::{render, render_clipped, scripted_hands, simulate_cut, CutSimulation, MeatSpec, SimError};
use crate::supervisor::{velocity_command, Action, Event, LedColor, Supervisor};
use crate::uncertainty::{evaluate_cut, locate_meat, psi, CutAssessment, MeatLocation};

const NS_PER_S: u64 = 1_000_000_000;

/// Delay before the stand-in operator approves the first plan when the
/// scenario has no console script.
const AUTO_APPROVE_DELAY_S: f64 = 0.1;

const DEFAULT_TIME_CAP_S: f64 = 600.0;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Knife(#[from] KnifeError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

pub fn secs_to_ns(t: f64) -> u64 {
    (t.max(0.0) * NS_PER_S as f64).round() as u64
}

pub fn ns_to_secs(t: u64) -> f64 {
    t as f64 / NS_PER_S as f64
}

fn tick_ns(k: u64, hz: u32) -> u64 {
    let hz = hz as u128;
    ((k as u128 * NS_PER_S as u128 + hz / 2) / hz) as u64
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub kind: String,
    pub state: String,
    pub zone: String,
    pub led: LedColor,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}

impl LogEntry {
    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.vz * self.vz).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub entries: Vec<LogEntry>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog, serde_json::Error> {
        let entries = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(EpisodeLog { entries })
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }
}

/// What actually happened in the simulated world, for scoring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTruth {
    pub threshold: Option<ForceThreshold>,
    pub first_bone_contact: Option<f64>,
    pub contact: Option<ContactEvent>,
    pub pre_location: Option<MeatLocation>,
    pub post_spec: Option<MeatSpec>,
    pub assessment: Option<CutAssessment>,
    pub cut_applied: Option<bool>,
    pub plans_proposed: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub log: EpisodeLog,
    pub truth: EpisodeTruth,
    pub final_state: String,
    pub final_zone: ZoneState,
    pub final_led: LedColor,
    pub end_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Contact = 0,
    Zone = 1,
    Operator = 2,
    Internal = 3,
}

#[derive(Debug, Clone)]
enum Item {
    ControlTick(u64),
    SafetyTick(u64),
    Force(ForceSample),
    Operator(ClientMessage),
    Internal(Event),
}

impl Item {
    fn priority(&self) -> Priority {
        match self {
            Item::Force(_) => Priority::Contact,
            Item::SafetyTick(_) => Priority::Zone,
            Item::Operator(_) => Priority::Operator,
            Item::ControlTick(_) | Item::Internal(_) => Priority::Internal,
        }
    }

    fn is_periodic(&self) -> bool {
        matches!(self, Item::ControlTick(_) | Item::SafetyTick(_))
    }
}

#[derive(Debug)]
struct Queued {
    key: (u64, Priority, u64),
    item: Item,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.cmp(&o.key)
    }
}

#[derive(Debug, Clone)]
struct ActiveCut {
    path: RobotPath,
    sim: CutSimulation,
    classifier: ContactClassifier,
    progress: f64,
    moving: bool,
}

/// Who answers plan proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    /// The scenario's console script, or automatic approval without one.
    Scripted,
    /// Commands arrive through [`Episode::submit`].
    Interactive,
}

/// Threshold from repeated bone-free cuts straight through the specimen.
pub fn calibrate_for(scenario: &Scenario) -> Result<ForceThreshold, EpisodeError> {
    let k = scenario.knife;
    if let Some(base) = k.base_lbf {
        return Ok(ForceThreshold::new(base, k.margin, k.debounce)?);
    }
    let cfg = scenario.config;
    let spec = scenario.meat.without_bone();
    let (lo, hi) = spec.world_meat().bounds();
    let c = spec.world_meat().centroid();
    let path = RobotPath::new(
        vec![Point3::new(lo.x - 1.0, c.y, cfg.cut_height_cm), Point3::new(hi.x + 1.0, c.y, cfg.cut_height_cm)],
        cfg.speed_cm_s,
    )
    .expect("non-degenerate calibration path");
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(1);
    let traces: Vec<Vec<ForceSample>> =
        (0..k.calibration_traces).map(|_| simulate_cut(&spec, &path, &cfg, &mut rng).forces).collect();
    Ok(calibrate_threshold(&traces, k.margin, k.debounce)?)
}

pub struct Episode {
    scenario: Scenario,
    zones: ZoneConfig,
    mode: OperatorMode,
    sup: Supervisor,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now: u64,
    pending: usize,
    rng_sim: ChaCha8Rng,
    rng_detect: ChaCha8Rng,
    hands: TracePlayback,
    threshold: ForceThreshold,
    spec: MeatSpec,
    image: Option<RasterImage>,
    cut: Option<ActiveCut>,
    velocity: [f64; 3],
    plan_counter: u64,
    on_screen: Option<(PlanId, u64)>,
    auto_approved: bool,
    log: EpisodeLog,
    truth: EpisodeTruth,
    outbox: Vec<ServerMessage>,
    last_status: Option<(&'static str, ZoneState, LedColor)>,
}

impl Episode {
    pub fn new(scenario: &Scenario, mode: OperatorMode) -> Result<Episode, EpisodeError> {
        let cfg = scenario.config;
        render(&scenario.meat, &cfg)?;
        let frames = scripted_hands(&scenario.hands, &cfg)?;
        let hands = TracePlayback::new(frames)?;
        let threshold = calibrate_for(scenario)?;
        let rng_sim = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut rng_detect = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng_detect.set_stream(2);
        let mut ep = Episode {
            zones: scenario.zones(),
            scenario: scenario.clone(),
            mode,
            sup: Supervisor::new(scenario.supervisor),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            pending: 0,
            rng_sim,
            rng_detect,
            hands,
            threshold,
            spec: scenario.meat.clone(),
            image: None,
            cut: None,
            velocity: [0.0; 3],
            plan_counter: 0,
            on_screen: None,
            auto_approved: false,
            log: EpisodeLog::default(),
            truth: EpisodeTruth { threshold: Some(threshold), ..Default::default() },
            outbox: Vec::new(),
            last_status: None,
        };
        ep.schedule(0, Item::Internal(Event::MeatPlaced));
        ep.schedule(0, Item::ControlTick(0));
        ep.schedule(0, Item::SafetyTick(0));
        if mode == OperatorMode::Scripted {
            for step in scenario.operator.iter().flatten() {
                ep.schedule(secs_to_ns(step.t), Item::Operator(step.message.clone()));
            }
        }
        Ok(ep)
    }

    fn schedule(&mut self, t: u64, item: Item) {
        if !item.is_periodic() {
            self.pending += 1;
        }
        self.seq += 1;
        self.queue.push(Reverse(Queued { key: (t, item.priority(), self.seq), item }));
    }

    pub fn now(&self) -> f64 {
        ns_to_secs(self.now)
    }

    pub fn supervisor(&self) -> &Supervisor {
        &self.sup
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn truth(&self) -> &EpisodeTruth {
        &self.truth
    }

    pub fn threshold(&self) -> ForceThreshold {
        self.threshold
    }

    /// Latest camera image of the specimen.
    pub fn image(&self) -> Option<&RasterImage> {
        self.image.as_ref()
    }

    pub fn drain_outbox(&mut self) -> Vec<ServerMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// Queues a console command at the current simulation time.
    pub fn submit(&mut self, msg: ClientMessage) {
        self.schedule(self.now, Item::Operator(msg));
    }

    /// Nothing left that could change the outcome in scripted mode.
    fn quiescent(&self) -> bool {
        if self.pending > 0 {
            return false;
        }
        if self.sup.state().is_terminal() {
            return true;
        }
        let active = self.sup.state().is_executing()
            || matches!(self.sup.state().name(), "paused_human" | "post_cut");
        !active && self.hands.remaining() == 0 && self.sup.zone() == ZoneState::Clear
    }

    /// Processes every queued item up to and including simulation time `t`.
    pub fn advance_to(&mut self, t: f64) {
        let limit = secs_to_ns(t);
        while self.queue.peek().is_some_and(|q| q.0.key.0 <= limit) {
            self.step();
        }
        self.now = self.now.max(limit);
    }

    fn step(&mut self) {
        let Reverse(q) = self.queue.pop().expect("periodic ticks keep the queue non-empty");
        self.now = q.key.0;
        if !q.item.is_periodic() {
            self.pending -= 1;
        }
        match q.item {
            Item::ControlTick(k) => self.control_tick(k),
            Item::SafetyTick(k) => self.safety_tick(k),
            Item::Force(sample) => self.force_delivered(sample),
            Item::Operator(msg) => self.operator(msg),
            Item::Internal(ev) => self.dispatch(ev),
        }
    }

    /// Runs a scripted episode to quiescence or the time cap.
    pub fn run_to_end(mut self) -> EpisodeResult {
        let cap = secs_to_ns(self.scenario.duration_s.unwrap_or(DEFAULT_TIME_CAP_S));
        while self.queue.peek().is_some_and(|q| q.0.key.0 <= cap) {
            self.step();
            if self.quiescent() {
                break;
            }
        }
        EpisodeResult {
            final_state: self.sup.state().name().to_owned(),
            final_zone: self.sup.zone(),
            final_led: self.sup.led(),
            end_t: self.now(),
            log: self.log,
            truth: self.truth,
        }
    }

    fn record(&mut self, kind: &str) {
        let st = self.sup.state();
        let plan_id = st.plan_id().map(|p| p.0.clone());
        let revision = plan_id.as_ref().and(self.sup.plan().map(|p| p.revision()));
        self.log.entries.push(LogEntry {
            t: self.now(),
            kind: kind.to_owned(),
            state: st.name().to_owned(),
            zone: self.sup.zone().as_str().to_owned(),
            led: self.sup.led(),
            vx: self.velocity[0],
            vy: self.velocity[1],
            vz: self.velocity[2],
            plan_id,
            revision,
        });
        let status = (st.name(), self.sup.zone(), self.sup.led());
        if self.last_status != Some(status) {
            self.last_status = Some(status);
            self.outbox.push(ServerMessage::state(&self.sup, self.now()));
        }
    }

    fn control_tick(&mut self, k: u64) {
        let cfg = self.scenario.config;
        let latency = secs_to_ns(cfg.link_latency_s);
        let mut finished = false;
        let t = self.now();
        let mut delivery = None;
        if let Some(cut) = &mut self.cut {
            let to = if cut.moving {
                let dt = 1.0 / cfg.control_hz as f64;
                cut.progress = (cut.progress + cut.path.commanded_speed() * dt / cut.path.length()).min(1.0);
                cut.path.point_at(cut.progress).xy()
            } else {
                cut.sim.knife()
            };
            let force = cut.sim.step(t, to, &mut self.rng_sim);
            if self.truth.first_bone_contact.is_none() {
                self.truth.first_bone_contact = cut.sim.first_bone_contact();
            }
            let progress = cut.progress;
            self.sup.advance(progress);
            finished = progress >= 1.0 && self.sup.state().is_executing();
            delivery = Some(ForceSample::new(t, force));
        }
        if let Some(sample) = delivery {
            self.schedule(self.now + latency, Item::Force(sample));
        }
        if finished {
            self.dispatch(Event::CutFinished);
        }
        let cmd = match &self.cut {
            Some(cut) if self.sup.state().is_executing() => velocity_command(&cut.path, cut.progress, false),
            _ => [0.0; 3],
        };
        if let Some(cut) = &mut self.cut {
            cut.moving = cmd != [0.0; 3];
        }
        if cmd != self.velocity {
            self.velocity = cmd;
            self.record("velocity");
        }
        self.schedule(tick_ns(k + 1, cfg.control_hz), Item::ControlTick(k + 1));
    }

    fn safety_tick(&mut self, k: u64) {
        let hz = self.scenario.config.safety_hz;
        let clock = k as f64 / hz as f64 + 1e-9;
        let frame: Option<HandFrame> = self.hands.poll(clock).last().cloned();
        let miss = self.scenario.config.hand_miss_rate;
        let seen = frame.filter(|_| miss == 0.0 || self.rng_detect.random::<f64>() >= miss);
        let zone = seen.map_or(ZoneState::Clear, |f| classify_zone(&f, &self.zones));
        if zone != self.sup.zone() {
            self.dispatch(Event::ZoneChanged(zone));
        }
        self.schedule(tick_ns(k + 1, hz), Item::SafetyTick(k + 1));
    }

    fn force_delivered(&mut self, sample: ForceSample) {
        let Some(cut) = &mut self.cut else { return };
        if let Some(ev) = cut.classifier.push(sample) {
            self.truth.contact = Some(ev);
            self.dispatch(Event::ContactDetected(ev));
        }
    }

    fn operator(&mut self, msg: ClientMessage) {
        let addressed = |plan_id: Option<String>, revision: Option<u64>, screen: &Option<(PlanId, u64)>| {
            match (plan_id, revision, screen) {
                (Some(p), Some(r), _) => Some((PlanId(p), r)),
                (p, r, Some((sp, sr))) => Some((p.map(PlanId).unwrap_or_else(|| sp.clone()), r.unwrap_or(*sr))),
                _ => None,
            }
        };
        let ev = match msg {
            ClientMessage::Edit { plan_id, revision, op, index, point, polyline } => {
                let Ok(edit) = to_edit(op, index, point, polyline) else {
                    self.outbox.push(ServerMessage::error("bad_message"));
                    return;
                };
                addressed(plan_id, revision, &self.on_screen)
                    .map(|(plan_id, revision)| Event::EditReceived { plan_id, revision, edit })
            }
            ClientMessage::Decision { plan_id, revision, action } => {
                addressed(plan_id, revision, &self.on_screen).map(|(plan_id, revision)| match action {
                    Decision::Approve => Event::Approved { plan_id, revision },
                    Decision::Reject => Event::Rejected { plan_id, revision },
                })
            }
            ClientMessage::InspectionCleared => Some(Event::InspectionCleared),
            ClientMessage::Reset => Some(Event::Reset),
        };
        match ev {
            Some(ev) => self.dispatch(ev),
            None => {
                self.record("stale_plan");
                self.outbox.push(ServerMessage::error("stale_plan"));
            }
        }
    }

    fn dispatch(&mut self, ev: Event) {
        if ev == Event::Reset {
            if let Some(cut) = self.cut.take() {
                self.spec = cut.sim.finish(&mut self.rng_sim).0;
            }
        }
        let actions = self.sup.handle_event(&ev);
        self.record(ev.kind());
        for a in actions {
            self.perform(a);
        }
    }

    fn perform(&mut self, action: Action) {
        match action {
            Action::Halt | Action::Resume | Action::Led(_) => {}
            Action::RequestPlan | Action::Replan => self.propose(),
            Action::PublishPlan(plan) => {
                self.on_screen = Some((plan.plan_id().clone(), plan.revision()));
                if let Some(img) = &self.image {
                    self.outbox.push(ServerMessage::plan(&plan, img));
                }
                let auto = self.mode == OperatorMode::Scripted && self.scenario.operator.is_none();
                if auto && !self.auto_approved {
                    self.auto_approved = true;
                    let msg = ClientMessage::Decision { plan_id: None, revision: None, action: Decision::Approve };
                    self.schedule(self.now + secs_to_ns(AUTO_APPROVE_DELAY_S), Item::Operator(msg));
                }
            }
            Action::Execute(plan) => self.execute(&plan),
            Action::CaptureAndAssess => self.assess(),
            Action::PublishAssessment(a) => {
                self.truth.assessment = Some(a);
                if let Some(plan) = self.sup.plan() {
                    self.outbox.push(ServerMessage::assessment(plan.plan_id(), &a));
                }
            }
            Action::StalePlan => {
                self.record("stale_plan");
                self.outbox.push(ServerMessage::error("stale_plan"));
            }
            Action::EditRejected(_) => {
                self.record("edit_rejected");
                self.outbox.push(ServerMessage::error("bad_edit"));
            }
            Action::EpisodeOver => {
                if let Some(cut) = self.cut.take() {
                    let (post, applied) = cut.sim.finish(&mut self.rng_sim);
                    self.spec = post.clone();
                    self.truth.post_spec = Some(post);
                    self.truth.cut_applied = Some(applied);
                }
            }
        }
    }

    fn capture(&mut self) -> Result<RasterImage, SimError> {
        let img = render_clipped(&self.spec, &self.scenario.config)?;
        self.image = Some(img.clone());
        Ok(img)
    }

    fn propose(&mut self) {
        let Ok(img) = self.capture() else {
            self.record("plan_error");
            return;
        };
        let masks = segment(&img, &self.scenario.thresholds);
        self.truth.pre_location = locate_meat(&masks.meat, self.now()).ok();
        self.plan_counter += 1;
        let id = PlanId(format!("plan-{}", self.plan_counter));
        match plan_task(&masks, &self.scenario.task, id) {
            Ok(plan) => {
                self.truth.plans_proposed += 1;
                self.dispatch(Event::PlanProposed(plan));
            }
            Err(_) => self.record("plan_error"),
        }
    }

    fn execute(&mut self, plan: &CutPlan) {
        let cfg = self.scenario.config;
        let cal = Calibration { h: cfg.pixel_to_world(), cut_height_z: cfg.cut_height_cm };
        let Ok(path) = to_robot_path(plan, &cal, cfg.speed_cm_s) else {
            self.record("path_error");
            self.dispatch(Event::Reset);
            return;
        };
        let start: Point2 = path.point_at(0.0).xy();
        self.cut = Some(ActiveCut {
            sim: CutSimulation::new(&self.spec, &cfg, start),
            classifier: ContactClassifier::new(self.threshold),
            path,
            progress: 0.0,
            moving: false,
        });
    }

    fn assess(&mut self) {
        let Some(cut) = self.cut.take() else { return };
        let (post, cut_applied) = cut.sim.finish(&mut self.rng_sim);
        self.spec = post.clone();
        self.truth.post_spec = Some(post);
        self.truth.cut_applied = Some(cut_applied);
        let u = self.scenario.uncertainty;
        let post_loc = self
            .capture()
            .ok()
            .and_then(|img| locate_meat(&segment(&img, &self.scenario.thresholds).meat, self.now()).ok());
        let assessment = match (&self.truth.pre_location, post_loc) {
            (Some(pre), Some(post)) => evaluate_cut(pre, &post, u.beta, u.tau).expect("validated parameters"),
            _ => {
                // The meat left the frame or vanished: score the worst case.
                let (w, h) = self.scenario.config.image_size;
                let d = (w as f64).hypot(h as f64);
                let p = psi(d, u.beta);
                CutAssessment { d, psi: p, beta: u.beta, tau: u.tau, alert: p > u.tau }
            }
        };
        self.dispatch(Event::AssessmentReady(assessment));
    }
}

/// Plans the scenario's task on segmented masks.
pub fn plan_task(masks: &SegmentationMasks, task: &Task, id: PlanId) -> Result<CutPlan, PlanError> {
    match *task {
        Task::Slice { n, overshoot_px, angle_deg } => {
            let params = SliceParams { n, overshoot_px, angle: angle_deg.to_radians() };
            plan_slices(&masks.meat, &params, id)
        }
        Task::Trim { epsilon_px } => plan_trim(masks, epsilon_px, id),
    }
}

/// Plan the cell would propose for the scenario's initial specimen.
pub fn initial_plan(scenario: &Scenario) -> Result<CutPlan, PlanError> {
    let img = render_clipped(&scenario.meat, &scenario.config).map_err(|_| PlanError::NoMeat)?;
    plan_task(&segment(&img, &scenario.thresholds), &scenario.task, PlanId::from("plan-1"))
}

/// Runs a scenario in scripted mode.
pub fn run(scenario: &Scenario) -> Result<EpisodeResult, EpisodeError> {
    Ok(Episode::new(scenario, OperatorMode::Scripted)?.run_to_end())
}
