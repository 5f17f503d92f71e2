//! Runs a trajectory against the cloth and gripper, logging frames and
//! events into an [`EpisodeReport`].

use serde::{Deserialize, Serialize};

use crate::cloth::{ClothState, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::geom::{Line2, Pose, Vec3};
use crate::gripper::{Finger, FrictionMode, GraspChange, GripperState, ModeTransition};
use crate::metrics::FoldScore;
use crate::percept::BinaryMask;

use super::trajectory::{ActionTag, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Fold,
    Drag,
    Lift,
    Flatten,
    Payload,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Fold => "fold",
            TaskKind::Drag => "drag",
            TaskKind::Lift => "lift",
            TaskKind::Flatten => "flatten",
            TaskKind::Payload => "payload",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecParams {
    /// Physics step, seconds.
    pub dt: f64,
    /// Frame sampling rate, Hz.
    pub report_rate: f64,
    /// Keep a copy of particle positions with every frame.
    pub keep_snapshots: bool,
}

impl Default for ExecParams {
    fn default() -> Self {
        ExecParams {
            dt: DEFAULT_DT,
            report_rate: 50.0,
            keep_snapshots: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FingerFrame {
    pub torque_cmd: f64,
    pub grip_force: f64,
    pub mode: FrictionMode,
    pub grasped: usize,
    /// Constraint force the finger applied during the last step, N.
    pub force: Vec3,
    pub slipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub tool_pose: Pose,
    pub width: f64,
    pub fingers: [FingerFrame; 2],
    /// Index into [`EpisodeReport::snapshots`] when snapshots are kept.
    pub snapshot: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    GraspAttempt {
        finger: Finger,
        ok: bool,
        captured: usize,
    },
    ModeTransition {
        finger: Finger,
        from: FrictionMode,
        to: FrictionMode,
        grip_force: f64,
    },
    /// The finger's load exceeded its cap. A high-friction grasp lets go
    /// (`released`); a low-friction contact slides.
    Slip {
        finger: Finger,
        demand: f64,
        cap: f64,
        released: bool,
    },
    ContactLost {
        finger: Finger,
    },
    Release {
        finger: Finger,
    },
    WidthClamped {
        requested: f64,
        applied: f64,
    },
    Diverged {
        particle: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Time at which a stage of the plan begins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMark {
    pub tag: ActionTag,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftClass {
    Perfect,
    Half,
    Fail,
}

/// Metrics attached to an episode after evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<FoldScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_line: Option<Line2>,
    /// Post-fold over pre-fold mask area.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drag_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_force: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_z_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_z_after: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub task: TaskKind,
    pub stages: Vec<StageMark>,
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
    #[serde(skip)]
    pub snapshots: Vec<Vec<Vec3>>,
    #[serde(skip)]
    pub pre_mask: Option<BinaryMask>,
    #[serde(skip)]
    pub post_mask: Option<BinaryMask>,
    /// Edge map the wrinkle penalty was counted on.
    #[serde(skip)]
    pub edges: Option<BinaryMask>,
    pub metrics: EpisodeMetrics,
    /// Set when the episode aborted (divergence, perception or planning
    /// failure).
    pub failure: Option<String>,
    pub end_time: f64,
}

impl EpisodeReport {
    pub fn new(task: TaskKind) -> Self {
        EpisodeReport {
            task,
            stages: Vec::new(),
            frames: Vec::new(),
            events: Vec::new(),
            snapshots: Vec::new(),
            pre_mask: None,
            post_mask: None,
            edges: None,
            metrics: EpisodeMetrics::default(),
            failure: None,
            end_time: 0.0,
        }
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Start of the first stage with `tag`.
    pub fn stage_start(&self, tag: ActionTag) -> Option<f64> {
        self.stages.iter().find(|s| s.tag == tag).map(|s| s.t)
    }

    pub fn mode_transitions(
        &self,
    ) -> impl Iterator<Item = (f64, Finger, FrictionMode, FrictionMode)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::ModeTransition {
                finger, from, to, ..
            } => Some((e.t, finger, from, to)),
            _ => None,
        })
    }

    /// True when some finger tried to grasp and failed.
    pub fn grasp_failed(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e.kind, EventKind::GraspAttempt { ok: false, .. }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Final cloth and gripper state together with the log.
#[derive(Clone, Debug)]
pub struct Execution {
    pub report: EpisodeReport,
    pub cloth: ClothState,
    pub gripper: GripperState,
}

struct Recorder {
    report: EpisodeReport,
    keep_snapshots: bool,
}

impl Recorder {
    fn event(&mut self, t: f64, kind: EventKind) {
        self.report.events.push(Event { t, kind });
    }

    fn transition(&mut self, t: f64, tr: Option<ModeTransition>) {
        if let Some(tr) = tr {
            self.event(
                t,
                EventKind::ModeTransition {
                    finger: tr.finger,
                    from: tr.from,
                    to: tr.to,
                    grip_force: tr.grip_force,
                },
            );
        }
    }

    fn frame(
        &mut self,
        t: f64,
        gripper: &GripperState,
        cloth: &ClothState,
        loads: &[(Vec3, bool); 2],
    ) {
        let fingers = Finger::BOTH.map(|f| {
            let s = gripper.finger(f);
            FingerFrame {
                torque_cmd: s.torque_cmd,
                grip_force: s.grip_force,
                mode: s.mode,
                grasped: s.grasped.len(),
                force: loads[f.index()].0,
                slipped: loads[f.index()].1,
            }
        });
        let snapshot = self.keep_snapshots.then(|| {
            self.report.snapshots.push(cloth.positions.clone());
            self.report.snapshots.len() - 1
        });
        self.report.frames.push(Frame {
            t,
            tool_pose: gripper.tool_pose,
            width: gripper.width,
            fingers,
            snapshot,
        });
    }
}

/// Executes `traj` from the given cloth and gripper state. Divergence ends
/// the episode early with the report flagged failed and the last valid
/// state returned.
pub fn execute(
    task: TaskKind,
    traj: &Trajectory,
    cloth: &ClothState,
    gripper: &GripperState,
    params: &ExecParams,
) -> Result<Execution> {
    traj.validate(&gripper.params)?;
    if !(params.dt > 0.0 && params.report_rate > 0.0) {
        return Err(Error::validation(
            "exec params",
            "dt and report_rate must be positive",
        ));
    }
    let dt = params.dt;
    let t0 = traj.start_time();
    let n_steps = (traj.duration() / dt - 1e-9).ceil().max(0.0) as usize;
    let stride = ((1.0 / (params.report_rate * dt)).round() as usize).max(1);

    let mut rec = Recorder {
        report: EpisodeReport::new(task),
        keep_snapshots: params.keep_snapshots,
    };
    let mut last_tag = None;
    for w in &traj.waypoints {
        if last_tag != Some(w.tag) {
            rec.report.stages.push(StageMark { tag: w.tag, t: w.t });
            last_tag = Some(w.tag);
        }
    }

    let mut cloth = cloth.clone();
    let mut gripper = gripper.clone();
    let first = traj.sample(t0).expect("validated trajectory is non-empty");
    gripper.tool_pose = first.pose;
    gripper.set_width(first.width);
    for f in Finger::BOTH {
        let tr = gripper.command_torque(f, first.torque[f.index()])?;
        rec.transition(t0, tr);
    }
    let mut loads = [(Vec3::zeros(), false); 2];
    rec.frame(t0, &gripper, &cloth, &loads);

    let mut width_clamp_logged = false;
    let mut slipping = [false; 2];
    let mut t_done = t0;
    for k in 0..n_steps {
        let t_prev = t0 + k as f64 * dt;
        let t_next = t0 + (k + 1) as f64 * dt;
        let cmd = traj
            .sample(t_next)
            .expect("validated trajectory is non-empty");

        gripper.tool_pose = cmd.pose;
        let applied = gripper.params.clamp_width(cmd.width);
        if applied != cmd.width && !width_clamp_logged {
            rec.event(
                t_next,
                EventKind::WidthClamped {
                    requested: cmd.width,
                    applied,
                },
            );
            width_clamp_logged = true;
        }
        gripper.drive_width(cmd.width, dt);

        for f in Finger::BOTH {
            let torque = cmd.torque[f.index()];
            if torque == gripper.finger(f).torque_cmd {
                continue;
            }
            if torque == 0.0 {
                let was_holding = gripper.is_holding(f);
                let tr = gripper.release(f);
                rec.transition(t_next, tr);
                if was_holding {
                    rec.event(t_next, EventKind::Release { finger: f });
                }
            } else {
                let tr = gripper.command_torque(f, torque)?;
                if matches!(
                    tr,
                    Some(ModeTransition {
                        to: FrictionMode::HighFriction,
                        ..
                    })
                ) {
                    gripper.refresh_offsets(f, &cloth);
                }
                rec.transition(t_next, tr);
            }
        }

        for w in traj.with_tag(ActionTag::Grasp) {
            if !(w.t > t_prev && w.t <= t_next) {
                continue;
            }
            for f in Finger::BOTH {
                if w.torque_of(f) > 0.0 && !gripper.is_holding(f) {
                    let ok = gripper.attempt_sliding_grasp(f, &cloth);
                    let captured = gripper.finger(f).grasped.len();
                    rec.event(
                        t_next,
                        EventKind::GraspAttempt {
                            finger: f,
                            ok,
                            captured,
                        },
                    );
                }
            }
        }

        let constraints = gripper.emit_constraints();
        let (next, feedback) = match cloth.step(dt, &constraints) {
            Ok(r) => r,
            Err(Error::Diverged { particle, time }) => {
                rec.event(time, EventKind::Diverged { particle });
                rec.report.failure = Some(format!(
                    "simulation diverged at t={time:.4}s (particle {particle})"
                ));
                break;
            }
            Err(e) => return Err(e),
        };
        cloth = next;
        t_done = t_next;
        for f in Finger::BOTH {
            let load = feedback.load(f);
            loads[f.index()] = (load.force, load.slipped);
        }
        let changes = gripper.absorb_feedback(&cloth, &feedback);
        for f in Finger::BOTH {
            let load = feedback.load(f);
            if load.slipped && !slipping[f.index()] {
                let released = changes
                    .iter()
                    .any(|(g, c)| *g == f && matches!(c, GraspChange::Broke { .. }));
                rec.event(
                    t_next,
                    EventKind::Slip {
                        finger: f,
                        demand: load.demand,
                        cap: load.cap,
                        released,
                    },
                );
            }
            slipping[f.index()] = load.slipped;
        }
        for (f, change) in changes {
            if change == GraspChange::ContactLost {
                rec.event(t_next, EventKind::ContactLost { finger: f });
            }
        }
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            rec.frame(t_next, &gripper, &cloth, &loads);
        }
    }
    rec.report.end_time = t_done;
    Ok(Execution {
        report: rec.report,
        cloth,
        gripper,
    })
}
