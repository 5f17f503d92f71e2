//! The gripper: one width degree of freedom carrying two finger grippers,
//! each switching passively between a low-friction roller contact and a
//! high-friction pad once its grip force crosses a threshold.
//!
//! The tool frame is a freely posed 6-DOF frame. Finger jaws sit at
//! `±width/2` along the tool x axis; the tool y axis is the jaw's tangential
//! (roller) axis.

use serde::{Deserialize, Serialize};

use crate::cloth::{ClothState, ConstraintFeedback};
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};

/// Hard span limit of the width mechanism, meters.
pub const SPAN_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Left,
    Right,
}

impl Finger {
    pub const BOTH: [Finger; 2] = [Finger::Left, Finger::Right];

    pub fn index(self) -> usize {
        match self {
            Finger::Left => 0,
            Finger::Right => 1,
        }
    }

    /// Sign of the finger's offset along the tool x axis.
    pub fn side(self) -> f64 {
        match self {
            Finger::Left => -1.0,
            Finger::Right => 1.0,
        }
    }
}

impl std::fmt::Display for Finger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Finger::Left => "left",
            Finger::Right => "right",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrictionMode {
    #[default]
    LowFriction,
    HighFriction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperParams {
    pub width_min: f64,
    pub width_max: f64,
    /// Grip force at which a finger switches to high friction, N.
    pub f_switch: f64,
    /// Grip force per unit motor torque, N per N·m.
    pub k_transmission: f64,
    pub mu_lf: f64,
    /// Load at which a high-friction grasp lets go, N.
    pub f_hold_max: f64,
    /// Jaw capture box: footprint along tool x, along tool y, height; meters.
    pub capture_box: [f64; 3],
    /// Cell size used to separate stacked layers inside the capture box.
    pub capture_cell: f64,
    /// Two candidates in one cell count as different layers when their
    /// heights differ by more than this.
    pub layer_epsilon: f64,
    pub min_grasp_particles: usize,
    /// m/s
    pub width_speed: f64,
    /// Linear tool speed limit, m/s.
    pub tool_speed: f64,
    /// Width of the switching band below `f_switch`; zero means a clean
    /// threshold.
    pub switch_hysteresis: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        GripperParams {
            width_min: 0.0,
            width_max: SPAN_LIMIT,
            f_switch: 5.0,
            k_transmission: 50.0,
            mu_lf: 0.1,
            f_hold_max: 40.0,
            capture_box: [0.02, 0.02, 0.01],
            capture_cell: 0.01,
            layer_epsilon: 5e-4,
            min_grasp_particles: 2,
            width_speed: 0.2,
            tool_speed: 0.5,
            switch_hysteresis: 0.0,
        }
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<()> {
        let err = |reason: String| Err(Error::validation("gripper params", reason));
        if !(self.width_min >= 0.0
            && self.width_min < self.width_max
            && self.width_max <= SPAN_LIMIT)
        {
            return err(format!(
                "need 0 <= width_min < width_max <= {SPAN_LIMIT}, got [{}, {}]",
                self.width_min, self.width_max
            ));
        }
        for (name, v) in [
            ("f_switch", self.f_switch),
            ("k_transmission", self.k_transmission),
            ("mu_lf", self.mu_lf),
            ("f_hold_max", self.f_hold_max),
            ("capture_cell", self.capture_cell),
            ("width_speed", self.width_speed),
            ("tool_speed", self.tool_speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.capture_box.iter().any(|v| !(*v > 0.0)) {
            return err("capture_box dimensions must be positive".into());
        }
        if !(self.layer_epsilon >= 0.0) || !(self.switch_hysteresis >= 0.0) {
            return err("layer_epsilon and switch_hysteresis must be non-negative".into());
        }
        if self.min_grasp_particles == 0 {
            return err("min_grasp_particles must be at least 1".into());
        }
        Ok(())
    }

    pub fn clamp_width(&self, w: f64) -> f64 {
        if w.is_nan() {
            return self.width_min;
        }
        w.clamp(self.width_min, self.width_max)
    }

    /// Torque that produces grip force `force`.
    pub fn torque_for_force(&self, force: f64) -> f64 {
        force / self.k_transmission
    }
}

/// A particle held by a finger, with its position in the jaw frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspedParticle {
    pub index: usize,
    pub offset: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FingerState {
    pub torque_cmd: f64,
    pub grip_force: f64,
    pub mode: FrictionMode,
    pub grasped: Vec<GraspedParticle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub params: GripperParams,
    pub tool_pose: Pose,
    pub width: f64,
    pub fingers: [FingerState; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub finger: Finger,
    pub from: FrictionMode,
    pub to: FrictionMode,
    pub grip_force: f64,
}

/// One grasped particle's constraint for the next physics step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspConstraint {
    pub particle: usize,
    pub finger: Finger,
    /// World position the particle is held at.
    pub target: Vec3,
    pub mode: FrictionMode,
    /// Unit jaw tangential axis; low-friction particles are free along it.
    pub slide_axis: Vec3,
    /// Load cap of the owning finger, N.
    pub friction_force_cap: f64,
}

/// A particle fixed in place, e.g. fabric clamped to a test rig.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub particle: usize,
    pub position: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraspConstraintSet {
    pub entries: Vec<GraspConstraint>,
    pub anchors: Vec<Anchor>,
}

impl GraspConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.anchors.is_empty()
    }

    pub(crate) fn check_indices(&self, n: usize) -> Result<()> {
        let bad = self
            .entries
            .iter()
            .map(|e| e.particle)
            .chain(self.anchors.iter().map(|a| a.particle))
            .find(|&p| p >= n);
        match bad {
            Some(p) => Err(Error::validation(
                "grasp constraints",
                format!("particle index {p} out of range for {n} particles"),
            )),
            None => Ok(()),
        }
    }
}

/// What happened to the grasp of one finger after a physics step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraspChange {
    /// A high-friction grasp exceeded its hold force and let go.
    Broke { demand: f64, cap: f64 },
    /// A low-friction contact slid along its roller axis.
    Slid { demand: f64, cap: f64 },
    /// Every particle rolled out of a low-friction jaw.
    ContactLost,
}

impl GripperState {
    pub fn new(params: GripperParams) -> Result<Self> {
        params.validate()?;
        Ok(GripperState {
            params,
            tool_pose: Pose::default(),
            width: params.width_min,
            fingers: Default::default(),
        })
    }

    pub fn finger(&self, f: Finger) -> &FingerState {
        &self.fingers[f.index()]
    }

    fn finger_mut(&mut self, f: Finger) -> &mut FingerState {
        &mut self.fingers[f.index()]
    }

    pub fn set_width(&mut self, w: f64) {
        self.width = self.params.clamp_width(w);
    }

    /// Moves the width toward `target` by at most `width_speed * dt`.
    pub fn drive_width(&mut self, target: f64, dt: f64) {
        let target = self.params.clamp_width(target);
        let max_step = self.params.width_speed * dt;
        let delta = (target - self.width).clamp(-max_step, max_step);
        self.set_width(self.width + delta);
    }

    /// Jaw frame of a finger: tool orientation, origin at the jaw's lower
    /// face center.
    pub fn jaw_pose(&self, f: Finger) -> Pose {
        let mut pose = self.tool_pose;
        pose.position = self
            .tool_pose
            .to_world(&Vec3::new(f.side() * 0.5 * self.width, 0.0, 0.0));
        pose
    }

    pub fn slide_axis(&self) -> Vec3 {
        self.tool_pose.rotation() * Vec3::y()
    }

    /// Sets the motor torque of one finger and recomputes its friction mode.
    /// Returns the mode transition, if any.
    pub fn command_torque(&mut self, f: Finger, torque: f64) -> Result<Option<ModeTransition>> {
        if !(torque >= 0.0 && torque.is_finite()) {
            return Err(Error::validation(
                "torque",
                format!("must be non-negative, got {torque}"),
            ));
        }
        let params = self.params;
        let finger = self.finger_mut(f);
        let before = finger.mode;
        finger.torque_cmd = torque;
        finger.grip_force = params.k_transmission * torque;
        let threshold = match before {
            FrictionMode::HighFriction => params.f_switch - params.switch_hysteresis,
            FrictionMode::LowFriction => params.f_switch,
        };
        finger.mode = if finger.grip_force >= threshold {
            FrictionMode::HighFriction
        } else {
            FrictionMode::LowFriction
        };
        if finger.grip_force == 0.0 {
            finger.grasped.clear();
        }
        let transition = (finger.mode != before).then_some(ModeTransition {
            finger: f,
            from: before,
            to: finger.mode,
            grip_force: finger.grip_force,
        });
        Ok(transition)
    }

    /// Re-records jaw-frame offsets of the grasped particles from the cloth.
    pub fn refresh_offsets(&mut self, f: Finger, cloth: &ClothState) {
        let jaw = self.jaw_pose(f);
        for g in &mut self.finger_mut(f).grasped {
            g.offset = jaw.to_local(&cloth.positions[g.index]);
        }
    }

    /// Candidate particles inside the capture box of a finger's jaw, with
    /// their jaw-frame coordinates.
    fn capture_candidates(&self, f: Finger, cloth: &ClothState) -> Vec<(usize, Vec3)> {
        let jaw = self.jaw_pose(f);
        let [bx, by, bz] = self.params.capture_box;
        let r = cloth.material.patch_radius;
        cloth
            .positions
            .iter()
            .enumerate()
            .filter_map(|(k, p)| {
                let local = jaw.to_local(p);
                let inside = local.x.abs() <= 0.5 * bx + r
                    && local.y.abs() <= 0.5 * by + r
                    && local.z >= -1e-9
                    && local.z <= bz;
                inside.then_some((k, local))
            })
            .collect()
    }

    /// Capture cell of a jaw-frame point. Cells are centered on the jaw
    /// axis so mirrored points fall in mirrored cells.
    pub fn capture_cell_of(&self, local: &Vec3) -> (i64, i64) {
        let cell = self.params.capture_cell;
        (
            (local.x / cell).round() as i64,
            (local.y / cell).round() as i64,
        )
    }

    /// Slides the finger's jaw under the fabric inside its capture box and
    /// grasps the lowest layer in each capture cell. A particle with a lower
    /// one within half a cell of it is also left alone, so a stack split by a
    /// cell boundary still counts as a stack. Returns whether at least
    /// `min_grasp_particles` were captured; on failure nothing is grasped.
    pub fn attempt_sliding_grasp(&mut self, f: Finger, cloth: &ClothState) -> bool {
        let candidates = if self.finger(f).grip_force > 0.0 {
            self.capture_candidates(f, cloth)
        } else {
            Vec::new()
        };
        let mut lowest: Vec<((i64, i64), f64)> = Vec::new();
        for (_, local) in &candidates {
            let cell = self.capture_cell_of(local);
            match lowest.iter_mut().find(|(c, _)| *c == cell) {
                Some((_, z)) => *z = z.min(local.z),
                None => lowest.push((cell, local.z)),
            }
        }
        let eps = self.params.layer_epsilon;
        let reach = 0.5 * self.params.capture_cell;
        let covered = |p: &Vec3| {
            candidates
                .iter()
                .any(|(_, q)| q.z < p.z - eps && (q.x - p.x).hypot(q.y - p.y) < reach)
        };
        let captured: Vec<GraspedParticle> = candidates
            .iter()
            .filter(|(_, local)| {
                let cell = self.capture_cell_of(local);
                let floor = lowest
                    .iter()
                    .find(|(c, _)| *c == cell)
                    .map(|(_, z)| *z)
                    .unwrap_or(local.z);
                local.z <= floor + eps && !covered(local)
            })
            .map(|&(index, offset)| GraspedParticle { index, offset })
            .collect();
        let ok = captured.len() >= self.params.min_grasp_particles;
        self.finger_mut(f).grasped = if ok { captured } else { Vec::new() };
        ok
    }

    /// Constraints the current grasp imposes on the cloth.
    pub fn emit_constraints(&self) -> GraspConstraintSet {
        let axis = self.slide_axis();
        let mut set = GraspConstraintSet::default();
        for f in Finger::BOTH {
            let finger = self.finger(f);
            if finger.grip_force <= 0.0 {
                continue;
            }
            let jaw = self.jaw_pose(f);
            let cap = match finger.mode {
                FrictionMode::HighFriction => self.params.f_hold_max,
                FrictionMode::LowFriction => self.params.mu_lf * finger.grip_force,
            };
            for g in &finger.grasped {
                if set.entries.iter().any(|e| e.particle == g.index) {
                    continue;
                }
                set.entries.push(GraspConstraint {
                    particle: g.index,
                    finger: f,
                    target: jaw.to_world(&g.offset),
                    mode: finger.mode,
                    slide_axis: axis,
                    friction_force_cap: cap,
                });
            }
        }
        set
    }

    /// Applies the outcome of a physics step to the grasp: broken
    /// high-friction grasps are dropped, low-friction contacts follow the
    /// cloth along the roller axis and lose particles that roll out of the
    /// jaw.
    pub fn absorb_feedback(
        &mut self,
        cloth: &ClothState,
        feedback: &ConstraintFeedback,
    ) -> Vec<(Finger, GraspChange)> {
        let mut changes = Vec::new();
        let [_, by, _] = self.params.capture_box;
        let reach = 0.5 * by + cloth.material.patch_radius;
        for f in Finger::BOTH {
            let load = feedback.load(f);
            let jaw = self.jaw_pose(f);
            let finger = self.finger_mut(f);
            if finger.grasped.is_empty() {
                continue;
            }
            match finger.mode {
                FrictionMode::HighFriction => {
                    if load.slipped {
                        finger.grasped.clear();
                        changes.push((
                            f,
                            GraspChange::Broke {
                                demand: load.demand,
                                cap: load.cap,
                            },
                        ));
                    }
                }
                FrictionMode::LowFriction => {
                    if load.slipped {
                        changes.push((
                            f,
                            GraspChange::Slid {
                                demand: load.demand,
                                cap: load.cap,
                            },
                        ));
                    }
                    for g in &mut finger.grasped {
                        g.offset.y = jaw.to_local(&cloth.positions[g.index]).y;
                    }
                    finger.grasped.retain(|g| g.offset.y.abs() <= reach);
                    if finger.grasped.is_empty() {
                        changes.push((f, GraspChange::ContactLost));
                    }
                }
            }
        }
        changes
    }

    /// Opens the finger: zero torque, low friction, nothing grasped.
    pub fn release(&mut self, f: Finger) -> Option<ModeTransition> {
        let finger = self.finger_mut(f);
        let before = finger.mode;
        *finger = FingerState::default();
        (before != FrictionMode::LowFriction).then_some(ModeTransition {
            finger: f,
            from: before,
            to: FrictionMode::LowFriction,
            grip_force: 0.0,
        })
    }

    pub fn is_holding(&self, f: Finger) -> bool {
        !self.finger(f).grasped.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloth::{build_cloth, ClothSpec, Placement, DEFAULT_DT};

    fn gripper() -> GripperState {
        GripperState::new(GripperParams::default()).unwrap()
    }

    #[test]
    fn width_is_symmetric_and_clamped() {
        let mut g = gripper();
        g.set_width(0.25);
        assert_eq!(g.width, 0.25);
        assert!((g.jaw_pose(Finger::Left).position.x + 0.125).abs() < 1e-15);
        assert!((g.jaw_pose(Finger::Right).position.x - 0.125).abs() < 1e-15);
        g.set_width(0.9);
        assert_eq!(g.width, 0.5);
        g.set_width(-0.1);
        assert_eq!(g.width, 0.0);
        g.set_width(f64::NAN);
        assert_eq!(g.width, 0.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut g = gripper();
        let below = g.params.torque_for_force(4.99);
        assert!(g.command_torque(Finger::Left, below).unwrap().is_none());
        assert_eq!(g.finger(Finger::Left).mode, FrictionMode::LowFriction);
        let t = g.command_torque(Finger::Left, 0.1).unwrap().unwrap();
        assert_eq!(g.finger(Finger::Left).grip_force, 5.0);
        assert_eq!(t.to, FrictionMode::HighFriction);
        assert!(g.command_torque(Finger::Left, -0.1).is_err());
    }

    #[test]
    fn release_is_idempotent() {
        let mut g = gripper();
        g.command_torque(Finger::Right, 0.3).unwrap();
        g.fingers[1].grasped.push(GraspedParticle {
            index: 3,
            offset: Vec3::zeros(),
        });
        assert!(g.release(Finger::Right).is_some());
        let once = g.clone();
        assert!(g.release(Finger::Right).is_none());
        assert_eq!(once, g);
        assert!(g.finger(Finger::Right).grasped.is_empty());
    }

    #[test]
    fn corner_grasp_on_single_layer() {
        let cloth = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let mut g = gripper();
        g.tool_pose.position = Vec3::new(-0.15, -0.14, 0.0);
        g.set_width(0.0);
        g.command_torque(Finger::Left, 0.04).unwrap();
        assert!(g.attempt_sliding_grasp(Finger::Left, &cloth));
        assert!(g.finger(Finger::Left).grasped.len() >= 2);
    }

    #[test]
    fn no_grasp_in_the_air() {
        let cloth = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let mut g = gripper();
        g.tool_pose.position = Vec3::new(0.5, 0.5, 0.1);
        g.command_torque(Finger::Left, 0.04).unwrap();
        assert!(!g.attempt_sliding_grasp(Finger::Left, &cloth));
        assert!(g.finger(Finger::Left).grasped.is_empty());
    }

    #[test]
    fn zero_force_emits_nothing() {
        let cloth = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let mut g = gripper();
        g.tool_pose.position = Vec3::new(-0.15, -0.14, 0.0);
        g.command_torque(Finger::Left, 0.04).unwrap();
        assert!(g.attempt_sliding_grasp(Finger::Left, &cloth));
        g.command_torque(Finger::Left, 0.0).unwrap();
        assert!(g.emit_constraints().is_empty());
        assert!(g.finger(Finger::Left).grasped.is_empty());
    }

    #[test]
    fn rigid_grasp_tracks_jaw() {
        let cloth = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let mut g = gripper();
        g.tool_pose.position = Vec3::new(-0.15, -0.14, 0.0);
        g.command_torque(Finger::Left, 0.04).unwrap();
        assert!(g.attempt_sliding_grasp(Finger::Left, &cloth));
        g.command_torque(Finger::Left, 0.2).unwrap();
        g.refresh_offsets(Finger::Left, &cloth);
        let before: Vec<_> = g.finger(Finger::Left).grasped.clone();
        g.tool_pose.position.x += 0.1;
        let (next, fb) = cloth.step(DEFAULT_DT, &g.emit_constraints()).unwrap();
        assert!(!fb.load(Finger::Left).slipped);
        let jaw = g.jaw_pose(Finger::Left);
        for p in &before {
            let drift = (jaw.to_local(&next.positions[p.index]) - p.offset).norm();
            assert!(drift < 1e-9, "drift {drift}");
        }
    }
}
