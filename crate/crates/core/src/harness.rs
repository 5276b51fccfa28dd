//! Experiment harness: scenario generators, the hand, knife and uncertainty
//! experiments, and episode-log property checks.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{initial_plan, run, EpisodeError, EpisodeLog, EpisodeResult};
use crate::geometry::{Point2, Polygon};
use crate::perception::ZoneState;
use crate::planner::{segment, ColorThresholds, PlanError};
use crate::protocol::{ClientMessage, Decision, EditKind};
use crate::scenario::{KnifeParams, Labels, OperatorStep, Scenario, ScenarioError, Task, UncertaintyParams};
use crate::sim::{render, zone_onsets, HandWaypoint, MeatSpec, Pose, SimConfig};
use crate::supervisor::SupervisorConfig;
use crate::uncertainty::{displacement, fit_beta, locate_meat, psi, UncertaintyError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("trial {0} has no ground-truth labels")]
    MissingGroundTruth(String),
    #[error("could not plan trial {0}: {1}")]
    Plan(String, PlanError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("pairs file: {0}")]
    Pairs(String),
}

/// A named scenario, as loaded from a directory or produced by a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: String,
    pub scenario: Scenario,
}

/// Per-trial seed derived from the experiment seed.
pub fn trial_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i)
}

/// Pork-loin analog: a chamfered slab of meat with a fat cap along its top
/// edge, placed in the middle of the workspace.
pub fn loin(width: f64, height: f64, fat: f64, center: Point2) -> MeatSpec {
    let c = 1.0f64.min(width / 4.0).min(height / 4.0);
    let (w, h) = (width, height);
    let meat = Polygon::new(
        [(c, 0.0), (w - c, 0.0), (w, c), (w, h - c), (w - c, h), (c, h), (0.0, h - c), (0.0, c)]
            .map(|(x, y)| Point2::new(x, y))
            .to_vec(),
    )
    .expect("convex octagon");
    let cap = Polygon::rect(c, -fat, w - c, 0.0).expect("positive fat thickness");
    let pose = Pose { x: center.x - w / 2.0, y: center.y - (h - fat) / 2.0, theta_deg: 0.0 };
    MeatSpec::new(meat, cap, None, pose).expect("cap abuts meat")
}

fn random_loin(rng: &mut ChaCha8Rng) -> MeatSpec {
    let w = (rng.random_range(11.0..15.0) * 10.0f64).round() / 10.0;
    let h = (rng.random_range(6.0..8.0) * 10.0f64).round() / 10.0;
    let f = (rng.random_range(1.2..2.0) * 10.0f64).round() / 10.0;
    let cx = (rng.random_range(15.0..17.0) * 10.0f64).round() / 10.0;
    let cy = (rng.random_range(9.0..10.0) * 10.0f64).round() / 10.0;
    loin(w, h, f, Point2::new(cx, cy))
}

fn base_scenario(seed: u64, meat: MeatSpec, task: Task) -> Scenario {
    Scenario {
        seed,
        config: SimConfig::default(),
        meat,
        task,
        hands: Vec::new(),
        thresholds: ColorThresholds::default(),
        uncertainty: UncertaintyParams::default(),
        knife: KnifeParams::default(),
        zones: None,
        operator: None,
        labels: None,
        supervisor: SupervisorConfig::default(),
        duration_s: None,
    }
}

/// Body-frame rectangle covering the given world rectangle (pose without rotation).
fn body_rect(spec: &MeatSpec, lo: Point2, hi: Point2) -> Polygon {
    let o = spec.pose.translation();
    Polygon::rect(lo.x - o.x, lo.y - o.y, hi.x - o.x, hi.y - o.y).expect("non-empty rectangle")
}

/// Hand trial: the operator reaches through the safe band into the warning
/// zone once while the robot slices, then withdraws.
pub fn hand_trial(seed: u64, i: u64) -> Trial {
    let s = trial_seed(seed, i);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let meat = random_loin(&mut rng);
    let mut sc = base_scenario(s, meat, Task::Slice { n: 3, overshoot_px: 5.0, angle_deg: 0.0 });
    let x = rng.random_range(80.0..240.0);
    let t_safe = rng.random_range(0.2..0.5);
    let t_reach = t_safe + rng.random_range(0.2..0.9);
    let t_in = t_reach + rng.random_range(0.15..0.4);
    let t_hold = t_in + rng.random_range(0.2..0.6);
    let t_out = t_hold + rng.random_range(0.3..0.5);
    let at = |t: f64, y: f64| HandWaypoint { t, centroid: Point2::new(x, y) };
    sc.hands = vec![at(0.0, 300.0), at(t_safe, 215.0), at(t_reach, 215.0), at(t_in, 150.0), at(t_hold, 150.0), at(t_out, 300.0)];
    let entries = zone_onsets(&sc.hands, &sc.zones(), ZoneState::Warning);
    sc.labels = Some(Labels { hand_entries: entries, bone_on_path: false });
    sc.duration_s = Some(t_out + 0.5);
    Trial { id: format!("hand-{i:03}"), scenario: sc }
}

/// Knife trial: a slicing plan with a bone placed squarely under one cut,
/// or the same specimen without bone as a control.
pub fn knife_trial(seed: u64, i: u64, with_bone: bool) -> Trial {
    let s = trial_seed(seed, i);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let meat = random_loin(&mut rng);
    let n = rng.random_range(2..=5);
    let mut sc = base_scenario(s, meat, Task::Slice { n, overshoot_px: 5.0, angle_deg: 0.0 });
    let plan = initial_plan(&sc).expect("generated specimen is plannable");
    let k = rng.random_range(0..plan.polylines().len());
    let pitch = sc.config.pixel_pitch;
    let cut_x = plan.polylines()[k].first().x * pitch;
    let (lo, hi) = sc.meat.world_meat().bounds();
    let y = rng.random_range(lo.y + 2.0..hi.y - 2.0);
    if with_bone {
        let bone = body_rect(&sc.meat, Point2::new(cut_x - 0.6, y - 0.8), Point2::new(cut_x + 0.6, y + 0.8));
        sc.meat = MeatSpec::new(sc.meat.meat.clone(), sc.meat.fat.clone(), Some(bone), sc.meat.pose)
            .expect("bone inside meat");
    }
    sc.labels = Some(Labels { hand_entries: Vec::new(), bone_on_path: with_bone });
    let kind = if with_bone { "bone" } else { "control" };
    Trial { id: format!("knife-{kind}-{i:03}"), scenario: sc }
}

/// The three end-to-end demonstrations on a fixed pork-loin analog.
pub fn demo_trials(seed: u64) -> Vec<Trial> {
    let spec = loin(14.0, 8.0, 2.0, Point2::new(16.0, 10.0));
    let mut slice = base_scenario(seed, spec.clone(), Task::Slice { n: 4, overshoot_px: 5.0, angle_deg: 0.0 });
    let plan = initial_plan(&slice).expect("demo specimen is plannable");
    let cut_x = plan.polylines()[1].first().x * slice.config.pixel_pitch;
    let c = spec.world_meat().centroid();
    let bone = body_rect(&spec, Point2::new(cut_x - 0.6, c.y - 0.8), Point2::new(cut_x + 0.6, c.y + 0.8));
    slice.meat = MeatSpec { bone: Some(bone), ..spec.clone() };
    slice.labels = Some(Labels { hand_entries: Vec::new(), bone_on_path: true });

    // A soft bone along the fat seam: the knife never reaches the contact
    // threshold, but the meat is dragged.
    let mut drag = base_scenario(seed, spec.clone(), Task::Trim { epsilon_px: 2.0 });
    let seam = Polygon::rect(5.5, -0.4, 8.5, 0.6).expect("non-empty rectangle");
    drag.meat = MeatSpec { bone: Some(seam), ..spec.clone() };
    drag.config.force.bone_ramp_rate = 0.3;
    drag.labels = Some(Labels { hand_entries: Vec::new(), bone_on_path: true });

    let clean = base_scenario(seed, spec, Task::Trim { epsilon_px: 2.0 });
    vec![
        Trial { id: "demo-slice-bone".into(), scenario: slice },
        Trial { id: "demo-trim-drag".into(), scenario: drag },
        Trial { id: "demo-trim-clean".into(), scenario: clean },
    ]
}

/// Randomized episode for supervisor property fuzzing: random specimen and
/// task, several hand visits and a noisy console script.
pub fn fuzz_trial(seed: u64, i: u64) -> Trial {
    let s = trial_seed(seed, i);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let mut meat = random_loin(&mut rng);
    let task = if rng.random_bool(0.5) {
        Task::Slice { n: rng.random_range(2..=4), overshoot_px: 5.0, angle_deg: 0.0 }
    } else {
        Task::Trim { epsilon_px: 2.0 }
    };
    if rng.random_bool(0.4) {
        let (lo, hi) = meat.world_meat().bounds();
        let x = rng.random_range(lo.x + 1.0..hi.x - 1.0);
        let bone = body_rect(&meat, Point2::new(x - 0.8, lo.y + 1.0), Point2::new(x + 0.8, hi.y - 1.0));
        meat.bone = Some(bone);
    }
    let mut sc = base_scenario(s, meat, task);
    if rng.random_bool(0.3) {
        sc.supervisor.resume_on = crate::supervisor::ResumeOn::Safe;
    }
    let horizon = 12.0;
    let mut t = 0.0;
    let mut hands = vec![];
    while t < horizon - 1.0 {
        t += rng.random_range(0.05..1.5);
        let p = Point2::new(rng.random_range(-30.0..350.0), rng.random_range(60.0..300.0));
        hands.push(HandWaypoint { t, centroid: p });
    }
    sc.hands = hands;
    let mut ops = vec![];
    let mut t = 0.0;
    let mut rev_guess = 0u64;
    while t < horizon {
        t += rng.random_range(0.02..1.0);
        let plan_id = if rng.random_bool(0.9) { None } else { Some(format!("plan-{}", rng.random_range(1..4))) };
        let revision = if rng.random_bool(0.7) { None } else { Some(rev_guess) };
        let message = match rng.random_range(0..10) {
            0..=3 => {
                rev_guess += 1;
                let op = [EditKind::Move, EditKind::Add, EditKind::Remove][rng.random_range(0..3)];
                let point = Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                ClientMessage::Edit { plan_id, revision, op, index: rng.random_range(0..5), point: Some(point), polyline: 0 }
            }
            4..=6 => ClientMessage::Decision { plan_id, revision, action: Decision::Approve },
            7 => ClientMessage::Decision { plan_id, revision, action: Decision::Reject },
            8 => ClientMessage::InspectionCleared,
            _ => {
                if rng.random_bool(0.3) {
                    ClientMessage::Reset
                } else {
                    ClientMessage::InspectionCleared
                }
            }
        };
        ops.push(OperatorStep { t, message });
    }
    sc.operator = Some(ops);
    sc.duration_s = Some(horizon + 4.0);
    Trial { id: format!("fuzz-{i:03}"), scenario: sc }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: String,
    /// Ground-truth onset: hand entry or first blade-in-bone tick.
    pub t_event: Option<f64>,
    pub t_detect: Option<f64>,
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub experiment: String,
    pub trials: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `TP / (TP + FN)`, the detection rate.
    pub accuracy: f64,
    pub precision: f64,
    /// False when `TP + FP = 0` and precision is reported as 1.
    pub precision_defined: bool,
    pub latency_mean_s: f64,
    pub latency_std_s: f64,
    pub latencies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_bound_s: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_bound: Option<usize>,
    pub rows: Vec<TrialRow>,
}

impl TrialReport {
    fn new(experiment: &str, trials: usize, tp: usize, fp: usize, fneg: usize, rows: Vec<TrialRow>) -> Self {
        let latencies: Vec<f64> = rows.iter().filter_map(|r| r.latency_s).collect();
        let n = latencies.len() as f64;
        let mean = if latencies.is_empty() { 0.0 } else { latencies.iter().sum::<f64>() / n };
        let std = if latencies.is_empty() {
            0.0
        } else {
            (latencies.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        let accuracy = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
        let precision_defined = tp + fp > 0;
        let precision = if precision_defined { tp as f64 / (tp + fp) as f64 } else { 1.0 };
        TrialReport {
            experiment: experiment.to_owned(),
            trials,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fneg,
            accuracy,
            precision,
            precision_defined,
            latency_mean_s: mean,
            latency_std_s: std,
            latencies,
            latency_bound_s: None,
            within_bound: None,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_csv(&self) -> String {
        let header = if self.experiment == "knife" {
            "trial_id,t_contact,t_detect,latency_s"
        } else {
            "trial_id,t_entry,t_detect,latency_s"
        };
        let f = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        let mut out = format!("{header}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.trial_id, f(r.t_event), f(r.t_detect), f(r.latency_s)));
        }
        out
    }
}

/// First zero-velocity command at or after `t`.
pub fn first_stop_after(log: &EpisodeLog, t: f64) -> Option<f64> {
    log.entries.iter().find(|e| e.kind == "velocity" && e.t >= t && e.speed() == 0.0).map(|e| e.t)
}

/// Times at which the zone classification switched to WARNING.
pub fn warning_onsets(log: &EpisodeLog) -> Vec<f64> {
    log.entries.iter().filter(|e| e.kind == "zone" && e.zone == "warning").map(|e| e.t).collect()
}

pub fn hand_trials(seed: u64, n: usize) -> Vec<Trial> {
    (0..n as u64).map(|i| hand_trial(seed, i)).collect()
}

/// Bone trials followed by bone-free controls of the same specimens.
pub fn knife_trials(seed: u64, n: usize) -> Vec<Trial> {
    let bone = (0..n as u64).map(|i| knife_trial(seed, i, true));
    let control = (0..n as u64).map(|i| knife_trial(seed, i, false));
    bone.chain(control).collect()
}

/// Scores detected WARNING onsets against the labelled entries; a detection
/// matches if it falls within one safety period after the entry.
pub fn run_hand_trials(trials: &[Trial]) -> Result<TrialReport, HarnessError> {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    let mut rows = Vec::new();
    for trial in trials {
        let labels = trial.scenario.labels.as_ref().ok_or_else(|| HarnessError::MissingGroundTruth(trial.id.clone()))?;
        let window = 1.0 / trial.scenario.config.safety_hz as f64 + 1e-9;
        let result = run(&trial.scenario)?;
        let mut detections = warning_onsets(&result.log);
        for &entry in &labels.hand_entries {
            let hit = detections.iter().position(|&d| d >= entry - 1e-9 && d <= entry + window);
            match hit {
                Some(j) => {
                    let d = detections.remove(j);
                    tp += 1;
                    let latency = first_stop_after(&result.log, d).map(|s| s - entry);
                    rows.push(TrialRow { trial_id: trial.id.clone(), t_event: Some(entry), t_detect: Some(d), latency_s: latency });
                }
                None => {
                    fneg += 1;
                    rows.push(TrialRow { trial_id: trial.id.clone(), t_event: Some(entry), t_detect: None, latency_s: None });
                }
            }
        }
        for d in detections {
            fp += 1;
            rows.push(TrialRow { trial_id: trial.id.clone(), t_event: None, t_detect: Some(d), latency_s: None });
        }
    }
    Ok(TrialReport::new("hand", trials.len(), tp, fp, fneg, rows))
}

/// Contact detection per trial and latency from the first blade-in-bone
/// tick to the zero-velocity command.
pub fn run_knife_trials(trials: &[Trial]) -> Result<TrialReport, HarnessError> {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    let mut rows = Vec::new();
    let mut bound = None;
    let mut within = 0;
    for trial in trials {
        let labels = trial.scenario.labels.as_ref().ok_or_else(|| HarnessError::MissingGroundTruth(trial.id.clone()))?;
        let cfg = trial.scenario.config;
        let tick = 1.0 / cfg.control_hz as f64;
        let closed = (trial.scenario.knife.debounce as f64 - 1.0) * tick + cfg.link_latency_s;
        let (lo, hi) = (closed - 1e-3, closed + tick + 1e-3);
        bound = Some([lo, hi]);
        let result = run(&trial.scenario)?;
        let detected = result.log.entries.iter().find(|e| e.kind == "contact").map(|e| e.t);
        let t_contact = result.truth.first_bone_contact;
        let latency = match (detected, t_contact) {
            (Some(d), Some(c)) => first_stop_after(&result.log, d).map(|s| s - c),
            _ => None,
        };
        match (labels.bone_on_path, detected) {
            (true, Some(_)) => tp += 1,
            (true, None) => fneg += 1,
            (false, Some(_)) => fp += 1,
            (false, None) => {}
        }
        if latency.is_some_and(|l| l >= lo && l <= hi) {
            within += 1;
        }
        rows.push(TrialRow { trial_id: trial.id.clone(), t_event: t_contact, t_detect: detected, latency_s: latency });
    }
    let mut report = TrialReport::new("knife", trials.len(), tp, fp, fneg, rows);
    report.latency_bound_s = bound;
    report.within_bound = Some(within);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Movement {
    Translation { cm: f64 },
    Rotation { deg: f64 },
}

impl Movement {
    pub fn family(&self) -> &'static str {
        match self {
            Movement::Translation { .. } => "translation",
            Movement::Rotation { .. } => "rotation",
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Movement::Translation { cm } => cm,
            Movement::Rotation { deg } => deg,
        }
    }
}

/// The displacements of the table in the paper's results section.
pub fn table_cases() -> Vec<Movement> {
    let t = [0.0, 1.1, 1.5, 2.9, 4.5].map(|cm| Movement::Translation { cm });
    let r = [0.0, 7.0, 10.0, 39.0, 45.0].map(|deg| Movement::Rotation { deg });
    t.into_iter().chain(r).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRow {
    pub family: String,
    pub movement: f64,
    pub d_px: f64,
    pub d_cm: f64,
    pub psi: f64,
    pub alert: bool,
}

/// Moves the specimen by each case exactly, then measures it back through
/// render, segmentation, box fitting and the uncertainty score.
pub fn run_uncertainty_table(
    spec: &MeatSpec,
    cfg: &SimConfig,
    thresholds: &ColorThresholds,
    params: UncertaintyParams,
    cases: &[Movement],
) -> Result<Vec<UncertaintyRow>, HarnessError> {
    let locate = |s: &MeatSpec| -> Result<_, HarnessError> {
        let img = render(s, cfg).map_err(EpisodeError::from)?;
        Ok(locate_meat(&segment(&img, thresholds).meat, 0.0)?)
    };
    let pre = locate(spec)?;
    cases
        .iter()
        .map(|m| {
            let post_spec = match *m {
                Movement::Translation { cm } => spec.moved(Point2::new(cm, 0.0), 0.0),
                Movement::Rotation { deg } => spec.moved(Point2::default(), deg),
            };
            let d = displacement(&pre, &locate(&post_spec)?);
            let p = psi(d, params.beta);
            Ok(UncertaintyRow {
                family: m.family().to_owned(),
                movement: m.magnitude(),
                d_px: d,
                d_cm: d * cfg.pixel_pitch,
                psi: p,
                alert: p > params.tau,
            })
        })
        .collect()
}

/// Default specimen for the uncertainty table.
pub fn table_specimen() -> MeatSpec {
    loin(14.0, 8.0, 2.0, Point2::new(16.0, 12.0))
}

/// Reads `d,psi` pairs, one per line; blank lines, `#` comments and a
/// non-numeric header are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>, HarnessError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [d, p] => d.parse::<f64>().ok().zip(p.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(pair) => pairs.push(pair),
            None if i == 0 => continue,
            None => return Err(HarnessError::Pairs(format!("line {} is not `d,psi`", i + 1))),
        }
    }
    Ok(pairs)
}

pub fn calibrate_beta(text: &str) -> Result<f64, HarnessError> {
    Ok(fit_beta(&parse_pairs(text)?)?)
}

/// Safety properties every episode log must satisfy. Returns one message
/// per violation.
pub fn check_log_properties(log: &EpisodeLog, control_hz: u32) -> Vec<String> {
    let mut bad = Vec::new();
    let mut approved: Vec<(String, u64)> = Vec::new();
    let mut prev_state = "idle";
    let mut estopped = false;
    let tick = 1.0 / control_hz as f64;
    for (i, e) in log.entries.iter().enumerate() {
        if e.kind == "velocity" && e.speed() > 0.0 && e.state != "executing" {
            bad.push(format!("entry {i}: motion commanded while {}", e.state));
        }
        if e.kind == "approved" {
            if let (Some(p), Some(r)) = (&e.plan_id, e.revision) {
                approved.push((p.clone(), r));
            }
        }
        if e.state == "executing" && prev_state != "executing" {
            let key = e.plan_id.clone().zip(e.revision);
            if !key.is_some_and(|k| approved.contains(&k)) {
                bad.push(format!("entry {i}: execution of {:?} without approval", e.plan_id));
            }
        }
        if estopped && e.kind != "reset" && e.state != "estopped_contact" {
            bad.push(format!("entry {i}: left estopped_contact via {}", e.kind));
        }
        if e.kind == "reset" {
            estopped = false;
        }
        if e.state == "estopped_contact" {
            estopped = true;
        }
        if e.kind == "zone" && e.zone == "warning" && prev_state == "executing" {
            match first_stop_after(log, e.t) {
                Some(s) if s - e.t <= tick + 1e-9 => {}
                other => bad.push(format!("entry {i}: warning at {} not followed by a stop in time ({other:?})", e.t)),
            }
        }
        prev_state = &e.state;
    }
    bad
}

/// Runs a trial twice and reports whether the logs are byte-identical.
pub fn replay_identical(trial: &Trial) -> Result<(EpisodeResult, bool), HarnessError> {
    let a = run(&trial.scenario)?;
    let b = run(&trial.scenario)?;
    let same = a.log.to_jsonl() == b.log.to_jsonl();
    Ok((a, same))
}


/// Loads every `*.json` scenario in `dir`, sorted by file name; the trial id
/// is the file stem.
pub fn load_trials(dir: &Path) -> Result<Vec<Trial>, ScenarioError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let scenario = Scenario::load(&p)
                .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", p.display())))?;
            Ok(Trial { id, scenario })
        })
        .collect()
}

/// Writes each trial as `<id>.json` into `dir`, creating it if needed.
pub fn write_trials(dir: &Path, trials: &[Trial]) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir)?;
    for t in trials {
        std::fs::write(dir.join(format!("{}.json", t.id)), t.scenario.to_json())?;
    }
    Ok(())
}
