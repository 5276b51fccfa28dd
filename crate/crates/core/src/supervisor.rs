//! Safety and transparency state machine.
//!
//! The supervisor owns the episode mode, the hand zone and the plan under
//! review. It never moves the robot itself; it answers each event with a list
//! of actions for the run loop (gate velocity, publish a plan, capture the
//! post-cut image, and so on).

use serde::{Deserialize, Serialize};

use crate::knife::ContactEvent;
use crate::perception::ZoneState;
use crate::planner::{apply_edit, CutPlan, Edit, PlanError, PlanId, RobotPath};
use crate::uncertainty::CutAssessment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedColor {
    Green,
    Yellow,
    Red,
}

impl LedColor {
    pub fn as_str(self) -> &'static str {
        match self {
            LedColor::Green => "green",
            LedColor::Yellow => "yellow",
            LedColor::Red => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupervisorState {
    Idle,
    AwaitingApproval { plan_id: PlanId },
    /// `progress` is the arc-length fraction of the robot path covered so far.
    Executing { plan_id: PlanId, progress: f64 },
    PausedHuman { plan_id: PlanId, progress: f64 },
    EstoppedContact { plan_id: Option<PlanId> },
    PostCut { plan_id: PlanId },
    AwaitingInspection { plan_id: PlanId },
}

impl SupervisorState {
    pub fn name(&self) -> &'static str {
        match self {
            SupervisorState::Idle => "idle",
            SupervisorState::AwaitingApproval { .. } => "awaiting_approval",
            SupervisorState::Executing { .. } => "executing",
            SupervisorState::PausedHuman { .. } => "paused_human",
            SupervisorState::EstoppedContact { .. } => "estopped_contact",
            SupervisorState::PostCut { .. } => "post_cut",
            SupervisorState::AwaitingInspection { .. } => "awaiting_inspection",
        }
    }

    pub fn plan_id(&self) -> Option<&PlanId> {
        match self {
            SupervisorState::Idle => None,
            SupervisorState::EstoppedContact { plan_id } => plan_id.as_ref(),
            SupervisorState::AwaitingApproval { plan_id }
            | SupervisorState::Executing { plan_id, .. }
            | SupervisorState::PausedHuman { plan_id, .. }
            | SupervisorState::PostCut { plan_id }
            | SupervisorState::AwaitingInspection { plan_id } => Some(plan_id),
        }
    }

    pub fn progress(&self) -> Option<f64> {
        match self {
            SupervisorState::Executing { progress, .. } | SupervisorState::PausedHuman { progress, .. } => {
                Some(*progress)
            }
            _ => None,
        }
    }

    /// The only state in which the robot may move.
    pub fn is_executing(&self) -> bool {
        matches!(self, SupervisorState::Executing { .. })
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SupervisorState::EstoppedContact { .. })
    }
}

pub fn led_for(state: &SupervisorState, zone: ZoneState) -> LedColor {
    let failure = matches!(
        state,
        SupervisorState::PausedHuman { .. }
            | SupervisorState::EstoppedContact { .. }
            | SupervisorState::AwaitingInspection { .. }
    );
    if failure || zone == ZoneState::Warning {
        LedColor::Red
    } else if zone == ZoneState::Safe {
        LedColor::Yellow
    } else {
        LedColor::Green
    }
}

/// Zero when gated or finished, otherwise the current segment direction at
/// the commanded speed.
pub fn velocity_command(path: &RobotPath, progress: f64, gated: bool) -> [f64; 3] {
    if gated || progress >= 1.0 {
        return [0.0; 3];
    }
    let u = path.tangent(path.segment_at(progress));
    let s = path.commanded_speed();
    [u.x * s, u.y * s, u.z * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResumeOn {
    #[default]
    Clear,
    Safe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    pub resume_on: ResumeOn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    MeatPlaced,
    PlanProposed(CutPlan),
    EditReceived { plan_id: PlanId, revision: u64, edit: Edit },
    Approved { plan_id: PlanId, revision: u64 },
    Rejected { plan_id: PlanId, revision: u64 },
    ZoneChanged(ZoneState),
    ContactDetected(ContactEvent),
    CutFinished,
    AssessmentReady(CutAssessment),
    InspectionCleared,
    Reset,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::MeatPlaced => "meat_placed",
            Event::PlanProposed(_) => "plan_proposed",
            Event::EditReceived { .. } => "edit",
            Event::Approved { .. } => "approved",
            Event::Rejected { .. } => "rejected",
            Event::ZoneChanged(_) => "zone",
            Event::ContactDetected(_) => "contact",
            Event::CutFinished => "cut_finished",
            Event::AssessmentReady(_) => "assessment",
            Event::InspectionCleared => "inspection_cleared",
            Event::Reset => "reset",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Hold the knife still.
    Halt,
    /// Continue along the approved path from the stored progress.
    Resume,
    Led(LedColor),
    RequestPlan,
    Replan,
    /// Show the (possibly revised) plan to the operator.
    PublishPlan(CutPlan),
    /// Start executing the approved plan from progress zero.
    Execute(CutPlan),
    CaptureAndAssess,
    PublishAssessment(CutAssessment),
    StalePlan,
    EditRejected(PlanError),
    EpisodeOver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supervisor {
    state: SupervisorState,
    zone: ZoneState,
    plan: Option<CutPlan>,
    config: SupervisorConfig,
}

impl Default for Supervisor {
    fn default() -> Self {
        Supervisor::new(SupervisorConfig::default())
    }
}

impl Supervisor {
    pub fn new(config: SupervisorConfig) -> Self {
        Supervisor { state: SupervisorState::Idle, zone: ZoneState::Clear, plan: None, config }
    }

    pub fn state(&self) -> &SupervisorState {
        &self.state
    }

    pub fn zone(&self) -> ZoneState {
        self.zone
    }

    pub fn led(&self) -> LedColor {
        led_for(&self.state, self.zone)
    }

    /// The plan under review or being executed.
    pub fn plan(&self) -> Option<&CutPlan> {
        self.plan.as_ref()
    }

    fn resumes(&self, zone: ZoneState) -> bool {
        match self.config.resume_on {
            ResumeOn::Clear => zone == ZoneState::Clear,
            ResumeOn::Safe => zone <= ZoneState::Safe,
        }
    }

    /// Records where the knife is along the path. Progress never moves
    /// backwards; outside execution and pause there is nothing to record.
    pub fn advance(&mut self, to: f64) {
        if let SupervisorState::Executing { progress, .. } | SupervisorState::PausedHuman { progress, .. } =
            &mut self.state
        {
            *progress = progress.max(to.clamp(0.0, 1.0));
        }
    }

    fn matches_plan(&self, plan_id: &PlanId, revision: u64) -> bool {
        matches!(&self.state, SupervisorState::AwaitingApproval { plan_id: p } if p == plan_id)
            && self.plan.as_ref().is_some_and(|p| p.revision() == revision)
    }

    pub fn handle_event(&mut self, ev: &Event) -> Vec<Action> {
        let led_before = self.led();
        let mut actions = self.transition(ev);
        let led_after = self.led();
        if led_after != led_before {
            actions.push(Action::Led(led_after));
        }
        actions
    }

    fn transition(&mut self, ev: &Event) -> Vec<Action> {
        use SupervisorState as S;
        match ev {
            Event::ZoneChanged(z) => {
                self.zone = *z;
                match &self.state {
                    S::Executing { plan_id, progress } if *z == ZoneState::Warning => {
                        self.state = S::PausedHuman { plan_id: plan_id.clone(), progress: *progress };
                        vec![Action::Halt]
                    }
                    S::PausedHuman { plan_id, progress } if self.resumes(*z) => {
                        self.state = S::Executing { plan_id: plan_id.clone(), progress: *progress };
                        vec![Action::Resume]
                    }
                    _ => vec![],
                }
            }
            Event::ContactDetected(_) => {
                if self.state.is_terminal() {
                    return vec![];
                }
                self.state = S::EstoppedContact { plan_id: self.state.plan_id().cloned() };
                vec![Action::Halt, Action::EpisodeOver]
            }
            Event::Reset => {
                self.state = S::Idle;
                self.plan = None;
                vec![Action::Halt]
            }
            _ if self.state.is_terminal() => match ev {
                Event::EditReceived { .. } | Event::Approved { .. } | Event::Rejected { .. } => {
                    vec![Action::StalePlan]
                }
                _ => vec![],
            },
            Event::MeatPlaced => match self.state {
                S::Idle => vec![Action::RequestPlan],
                _ => vec![],
            },
            Event::PlanProposed(plan) => match self.state {
                S::Idle => {
                    self.state = S::AwaitingApproval { plan_id: plan.plan_id().clone() };
                    self.plan = Some(plan.clone());
                    vec![Action::PublishPlan(plan.clone())]
                }
                _ => vec![],
            },
            Event::EditReceived { plan_id, revision, edit } => {
                if !self.matches_plan(plan_id, *revision) {
                    return vec![Action::StalePlan];
                }
                let current = self.plan.as_ref().expect("plan under review");
                match apply_edit(current, edit) {
                    Ok(next) => {
                        self.plan = Some(next.clone());
                        vec![Action::PublishPlan(next)]
                    }
                    Err(e) => vec![Action::EditRejected(e)],
                }
            }
            Event::Approved { plan_id, revision } => {
                if !self.matches_plan(plan_id, *revision) {
                    return vec![Action::StalePlan];
                }
                let approved = self.plan.as_ref().expect("plan under review").approve(*revision);
                let Ok(approved) = approved else {
                    return vec![Action::StalePlan];
                };
                self.plan = Some(approved.clone());
                if self.zone == ZoneState::Warning {
                    self.state = S::PausedHuman { plan_id: plan_id.clone(), progress: 0.0 };
                    vec![Action::Execute(approved), Action::Halt]
                } else {
                    self.state = S::Executing { plan_id: plan_id.clone(), progress: 0.0 };
                    vec![Action::Execute(approved)]
                }
            }
            Event::Rejected { plan_id, revision } => {
                if !self.matches_plan(plan_id, *revision) {
                    return vec![Action::StalePlan];
                }
                self.plan = self.plan.as_ref().and_then(|p| p.reject(*revision).ok());
                self.state = S::Idle;
                vec![Action::Replan]
            }
            Event::CutFinished => match &self.state {
                S::Executing { plan_id, .. } => {
                    self.state = S::PostCut { plan_id: plan_id.clone() };
                    vec![Action::Halt, Action::CaptureAndAssess]
                }
                _ => vec![],
            },
            Event::AssessmentReady(a) => match &self.state {
                S::PostCut { plan_id } => {
                    self.state = if a.alert {
                        S::AwaitingInspection { plan_id: plan_id.clone() }
                    } else {
                        S::Idle
                    };
                    vec![Action::PublishAssessment(*a)]
                }
                _ => vec![],
            },
            Event::InspectionCleared => match self.state {
                S::AwaitingInspection { .. } => {
                    self.state = S::Idle;
                    vec![]
                }
                _ => vec![],
            },
        }
    }
}

/// Value-level form of [`Supervisor::handle_event`].
pub fn handle_event(sup: &Supervisor, ev: &Event) -> (Supervisor, Vec<Action>) {
    let mut next = sup.clone();
    let actions = next.handle_event(ev);
    (next, actions)
}
