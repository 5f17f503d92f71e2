//! Timed tool waypoints and their interpolation.
//!
//! Pose and width are interpolated linearly between waypoints. Torque is a
//! zero-order hold: the command of the last waypoint at or before `t`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::gripper::{Finger, GripperParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionTag {
    Init,
    PreGrasp,
    Grasp,
    Move,
    FoldArc,
    Hold,
    Release,
    Slide,
}

impl ActionTag {
    pub const ALL: [ActionTag; 8] = [
        ActionTag::Init,
        ActionTag::PreGrasp,
        ActionTag::Grasp,
        ActionTag::Move,
        ActionTag::FoldArc,
        ActionTag::Hold,
        ActionTag::Release,
        ActionTag::Slide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionTag::Init => "init",
            ActionTag::PreGrasp => "pre_grasp",
            ActionTag::Grasp => "grasp",
            ActionTag::Move => "move",
            ActionTag::FoldArc => "fold_arc",
            ActionTag::Hold => "hold",
            ActionTag::Release => "release",
            ActionTag::Slide => "slide",
        }
    }

    /// Position in the fixed stage order; the manipulation stages share a
    /// rank.
    pub fn stage_rank(self) -> u8 {
        match self {
            ActionTag::Init => 0,
            ActionTag::PreGrasp => 1,
            ActionTag::Grasp => 2,
            ActionTag::Move | ActionTag::FoldArc | ActionTag::Hold | ActionTag::Slide => 3,
            ActionTag::Release => 4,
        }
    }
}

impl fmt::Display for ActionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ActionTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown action tag {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pose: Pose,
    pub width: f64,
    /// Motor torque per finger (left, right), N·m.
    pub torque: [f64; 2],
    pub tag: ActionTag,
}

impl Waypoint {
    pub fn torque_of(&self, f: Finger) -> f64 {
        self.torque[f.index()]
    }
}

/// Interpolated command at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    pub pose: Pose,
    pub width: f64,
    pub torque: [f64; 2],
    pub tag: ActionTag,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Planner notes such as a clamped opening width.
    pub warnings: Vec<String>,
}

pub const TEXT_HEADER: &str = "t x y z roll pitch yaw width torque_l torque_r tag";

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Self {
        Trajectory {
            waypoints,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.t)
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Checks ordering, the starting width and the speed limit.
    pub fn validate(&self, gripper: &GripperParams) -> Result<()> {
        let err = |reason: String| Err(Error::validation("trajectory", reason));
        let Some(first) = self.waypoints.first() else {
            return err("no waypoints".into());
        };
        if first.width != gripper.width_min {
            return err(format!(
                "first waypoint must start at the minimum width {}, got {}",
                gripper.width_min, first.width
            ));
        }
        for (k, w) in self.waypoints.iter().enumerate() {
            let finite = w.t.is_finite()
                && w.pose.position.iter().all(|c| c.is_finite())
                && w.width.is_finite()
                && [w.pose.roll, w.pose.pitch, w.pose.yaw]
                    .iter()
                    .all(|a| a.is_finite());
            if !finite {
                return err(format!("waypoint {k} has non-finite values"));
            }
            if w.torque.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return err(format!("waypoint {k} has a negative torque"));
            }
        }
        for (k, pair) in self.waypoints.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return err(format!(
                    "waypoint times not strictly increasing at {}",
                    k + 1
                ));
            }
        }
        let speed = self.max_speed();
        if speed > gripper.tool_speed * (1.0 + 1e-9) {
            return err(format!(
                "implied tool speed {speed:.4} m/s exceeds {} m/s",
                gripper.tool_speed
            ));
        }
        Ok(())
    }

    /// Largest straight-line tool speed between consecutive waypoints.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| (p[1].pose.position - p[0].pose.position).norm() / (p[1].t - p[0].t))
            .fold(0.0, f64::max)
    }

    /// Index of the last waypoint with time at or before `t`.
    fn segment(&self, t: f64) -> usize {
        self.waypoints
            .partition_point(|w| w.t <= t)
            .saturating_sub(1)
    }

    pub fn sample(&self, t: f64) -> Option<Command> {
        let first = self.waypoints.first()?;
        if t <= first.t {
            return Some(Command {
                pose: first.pose,
                width: first.width,
                torque: first.torque,
                tag: first.tag,
            });
        }
        let k = self.segment(t);
        let a = &self.waypoints[k];
        let Some(b) = self.waypoints.get(k + 1) else {
            return Some(Command {
                pose: a.pose,
                width: a.width,
                torque: a.torque,
                tag: a.tag,
            });
        };
        let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        Some(Command {
            pose: a.pose.lerp(&b.pose, s),
            width: a.width + (b.width - a.width) * s,
            torque: a.torque,
            tag: a.tag,
        })
    }

    pub fn with_tag(&self, tag: ActionTag) -> impl Iterator<Item = &Waypoint> {
        self.waypoints.iter().filter(move |w| w.tag == tag)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# gog trajectory v1")?;
        for note in &self.warnings {
            writeln!(w, "# warning: {note}")?;
        }
        writeln!(w, "{TEXT_HEADER}")?;
        for p in &self.waypoints {
            let q = &p.pose;
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {} {} {}",
                p.t,
                q.position.x,
                q.position.y,
                q.position.z,
                q.roll,
                q.pitch,
                q.yaw,
                p.width,
                p.torque[0],
                p.torque[1],
                p.tag
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the text form written by [`Trajectory::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            what: "trajectory",
            line,
            reason,
        };
        let mut traj = Trajectory::default();
        let mut header_seen = false;
        for (k, line) in r.lines().enumerate() {
            let line_no = k + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(note) = comment.trim().strip_prefix("warning:") {
                    traj.warnings.push(note.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = trimmed.split_whitespace().collect();
                if cols != TEXT_HEADER.split_whitespace().collect::<Vec<_>>() {
                    return Err(parse_err(
                        line_no,
                        format!("expected header {TEXT_HEADER:?}"),
                    ));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 11 {
                return Err(parse_err(
                    line_no,
                    format!("expected 11 fields, found {}", fields.len()),
                ));
            }
            let mut nums = [0.0f64; 10];
            for (slot, text) in nums.iter_mut().zip(&fields[..10]) {
                *slot = text
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("not a number: {text:?}")))?;
            }
            let tag = fields[10].parse().map_err(|e| parse_err(line_no, e))?;
            traj.waypoints.push(Waypoint {
                t: nums[0],
                pose: Pose {
                    position: Vec3::new(nums[1], nums[2], nums[3]),
                    roll: nums[4],
                    pitch: nums[5],
                    yaw: nums[6],
                },
                width: nums[7],
                torque: [nums[8], nums[9]],
                tag,
            });
        }
        if !header_seen {
            return Err(parse_err(0, "missing header line".into()));
        }
        Ok(traj)
    }
}

impl FromStr for Trajectory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trajectory::read_text(s.as_bytes())
    }
}
