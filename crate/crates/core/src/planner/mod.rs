//! Manipulation plans, their execution against the physics, and the
//! automatic fold loop.

pub mod auto;
pub mod execute;
pub mod plans;
pub mod trajectory;

pub use auto::{auto_fold, FoldOptions, FoldRun, FoldSpec};
pub use execute::{
    execute, EpisodeMetrics, EpisodeReport, Event, EventKind, ExecParams, Execution, FingerFrame,
    Frame, LiftClass, StageMark, TaskKind,
};
pub use plans::{plan_drag, plan_flatten, plan_fold, plan_lift, PlannerParams};
pub use trajectory::{ActionTag, Command, Trajectory, Waypoint};
