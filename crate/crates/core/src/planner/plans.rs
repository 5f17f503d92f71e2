//! Staged motion plans for folding, dragging, lifting and flattening.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{perp, Line2, Pose, Vec2, Vec3};
use crate::gripper::GripperParams;

use super::trajectory::{ActionTag, Trajectory, Waypoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    /// Height of the pre-grasp hover above the table, meters.
    pub hover_height: f64,
    pub descend_speed: f64,
    /// Time between the sliding grasp and the firm grasp, seconds.
    pub grasp_dwell: f64,
    /// Fold arc apex height as a fraction of the corner-to-target distance.
    pub apex_factor: f64,
    pub workspace_radius: f64,
    /// Jaws are placed this far inside the cloth from the target corners.
    pub jaw_inset: f64,
    /// Grip force of the sliding grasp (below the switch threshold), N.
    pub slide_grip_force: f64,
    /// Grip force of the firm grasp, N.
    pub firm_grip_force: f64,
    /// Grip force while sliding over the cloth when flattening, N.
    pub flatten_grip_force: f64,
    /// Linear speed of translations and lifts, m/s.
    pub move_speed: f64,
    /// Tool speed along the fold arc, m/s.
    pub arc_speed: f64,
    pub arc_segments: usize,
    /// Turn the tool over about the finger axis along the fold arc so the
    /// held patch flips with the fabric.
    pub wrist_flip: bool,
    /// Lift height while dragging, meters.
    pub drag_lift: f64,
    pub release_dwell: f64,
    pub retract_height: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            hover_height: 0.03,
            descend_speed: 0.05,
            grasp_dwell: 0.2,
            apex_factor: 0.5,
            workspace_radius: 0.8,
            jaw_inset: 0.005,
            slide_grip_force: 2.0,
            firm_grip_force: 10.0,
            flatten_grip_force: 4.0,
            move_speed: 0.1,
            arc_speed: 0.15,
            arc_segments: 32,
            wrist_flip: true,
            drag_lift: 0.02,
            release_dwell: 0.1,
            retract_height: 0.05,
        }
    }
}

/// Shortest segment the planner emits, seconds.
const MIN_SEGMENT: f64 = 0.05;

impl PlannerParams {
    pub fn validate(&self, gripper: &GripperParams) -> Result<()> {
        let err = |reason: String| Err(Error::validation("planner params", reason));
        for (name, v) in [
            ("hover_height", self.hover_height),
            ("descend_speed", self.descend_speed),
            ("grasp_dwell", self.grasp_dwell),
            ("apex_factor", self.apex_factor),
            ("workspace_radius", self.workspace_radius),
            ("slide_grip_force", self.slide_grip_force),
            ("firm_grip_force", self.firm_grip_force),
            ("flatten_grip_force", self.flatten_grip_force),
            ("move_speed", self.move_speed),
            ("arc_speed", self.arc_speed),
            ("drag_lift", self.drag_lift),
            ("release_dwell", self.release_dwell),
            ("retract_height", self.retract_height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.jaw_inset >= 0.0) {
            return err("jaw_inset must be non-negative".into());
        }
        if self.arc_segments < 2 {
            return err("arc_segments must be at least 2".into());
        }
        for (name, v) in [
            ("descend_speed", self.descend_speed),
            ("move_speed", self.move_speed),
            ("arc_speed", self.arc_speed),
        ] {
            if v > gripper.tool_speed {
                return err(format!(
                    "{name} {v} exceeds the tool speed limit {}",
                    gripper.tool_speed
                ));
            }
        }
        if self.slide_grip_force >= gripper.f_switch || self.flatten_grip_force >= gripper.f_switch
        {
            return err("sliding grip forces must stay below f_switch".into());
        }
        if self.firm_grip_force < gripper.f_switch {
            return err("firm_grip_force must reach f_switch".into());
        }
        Ok(())
    }
}

/// Accumulates waypoints, timing each segment from the motion it contains.
struct Builder<'a> {
    gripper: &'a GripperParams,
    waypoints: Vec<Waypoint>,
}

impl<'a> Builder<'a> {
    fn start(gripper: &'a GripperParams, pose: Pose) -> Self {
        Builder {
            gripper,
            waypoints: vec![Waypoint {
                t: 0.0,
                pose,
                width: gripper.width_min,
                torque: [0.0; 2],
                tag: ActionTag::Init,
            }],
        }
    }

    fn last(&self) -> Waypoint {
        *self
            .waypoints
            .last()
            .expect("builder starts with a waypoint")
    }

    /// Appends a waypoint reached no faster than `speed` and the width rate,
    /// and no sooner than `min_dt`.
    fn push(
        &mut self,
        pose: Pose,
        width: f64,
        torque: f64,
        tag: ActionTag,
        speed: f64,
        min_dt: f64,
    ) {
        let prev = self.last();
        let travel = (pose.position - prev.pose.position).norm() / speed;
        let opening = (width - prev.width).abs() / self.gripper.width_speed;
        let dt = travel.max(opening).max(min_dt).max(MIN_SEGMENT);
        self.waypoints.push(Waypoint {
            t: prev.t + dt,
            pose,
            width,
            torque: [torque; 2],
            tag,
        });
    }

    fn finish(self, params: &PlannerParams, warnings: Vec<String>) -> Result<Trajectory> {
        for w in &self.waypoints {
            let r = w.pose.position.norm();
            if r > params.workspace_radius {
                return Err(Error::Planning(format!(
                    "waypoint at ({:.3}, {:.3}, {:.3}) lies {:.3} m from the base, outside the {} m workspace",
                    w.pose.position.x, w.pose.position.y, w.pose.position.z, r, params.workspace_radius
                )));
            }
        }
        let traj = Trajectory {
            waypoints: self.waypoints,
            warnings,
        };
        traj.validate(self.gripper)?;
        Ok(traj)
    }
}

fn unit(v: Vec2, what: &'static str) -> Result<Vec2> {
    let n = v.norm();
    if !(n > 1e-12 && n.is_finite()) {
        return Err(Error::validation(what, "must be a non-zero finite vector"));
    }
    Ok(v / n)
}

/// Yaw that puts the tool x axis (the finger axis) along `x_axis`.
fn yaw_along(x_axis: Vec2) -> f64 {
    x_axis.y.atan2(x_axis.x)
}

fn at(p: Vec2, z: f64, yaw: f64) -> Pose {
    Pose::new(Vec3::new(p.x, p.y, z), yaw)
}

/// Opening width for two grasp points, with a warning when it had to be
/// clamped.
fn grasp_width(
    p1: Vec2,
    p2: Vec2,
    inset: f64,
    gripper: &GripperParams,
    warnings: &mut Vec<String>,
) -> f64 {
    let requested = ((p1 - p2).norm() - 2.0 * inset).max(0.0);
    let width = gripper.clamp_width(requested);
    if width < requested {
        warnings.push(format!(
            "opening width clamped from {requested:.4} m to {width:.4} m"
        ));
    }
    width
}

/// Shared opening: hover, open to `width`, descend, sliding grasp, firm
/// grasp.
fn approach_and_grasp(
    b: &mut Builder,
    params: &PlannerParams,
    jaw_mid: Vec2,
    yaw: f64,
    width: f64,
) {
    let g = b.gripper;
    let slide = g.torque_for_force(params.slide_grip_force);
    let firm = g.torque_for_force(params.firm_grip_force);
    let hover = at(jaw_mid, params.hover_height, yaw);
    let down = at(jaw_mid, 0.0, yaw);
    if width > g.width_min {
        b.push(
            hover,
            width,
            0.0,
            ActionTag::PreGrasp,
            params.move_speed,
            0.0,
        );
    }
    b.push(
        down,
        width,
        0.0,
        ActionTag::PreGrasp,
        params.descend_speed,
        0.0,
    );
    b.push(down, width, slide, ActionTag::Grasp, params.move_speed, 0.0);
    b.push(
        down,
        width,
        firm,
        ActionTag::Grasp,
        params.move_speed,
        params.grasp_dwell,
    );
}

fn release_and_retract(b: &mut Builder, params: &PlannerParams) {
    let last = b.last();
    b.push(
        last.pose,
        last.width,
        0.0,
        ActionTag::Release,
        params.move_speed,
        params.release_dwell,
    );
    let mut up = last.pose;
    up.position.z += params.retract_height;
    b.push(
        up,
        last.width,
        0.0,
        ActionTag::Release,
        params.move_speed,
        0.0,
    );
}

/// Fold plan carrying the corners `p1` (left finger) and `p2` across
/// `fold_line`. The line's normal must point toward the corners.
pub fn plan_fold(
    p1: Vec2,
    p2: Vec2,
    fold_line: &Line2,
    gripper: &GripperParams,
    params: &PlannerParams,
) -> Result<Trajectory> {
    params.validate(gripper)?;
    if (p1 - p2).norm() < 1e-9 {
        return Err(Error::Planning("grasp corners coincide".into()));
    }
    let (d1, d2) = (
        fold_line.signed_distance(&p1),
        fold_line.signed_distance(&p2),
    );
    if d1.min(d2) <= 1e-9 {
        return Err(Error::Planning(format!(
            "fold line does not separate the grasp corners from their targets (signed distances {d1:.4}, {d2:.4})"
        )));
    }
    let mut warnings = Vec::new();
    let width = grasp_width(p1, p2, params.jaw_inset, gripper, &mut warnings);
    let yaw = yaw_along(p2 - p1);
    let corner_mid = 0.5 * (p1 + p2);
    let jaw_mid = corner_mid - fold_line.normal * params.jaw_inset;
    if fold_line.signed_distance(&jaw_mid) <= 1e-9 {
        return Err(Error::Planning("jaw inset crosses the fold line".into()));
    }
    let target = fold_line.reflect(&jaw_mid);
    let apex = params.apex_factor * (fold_line.reflect(&corner_mid) - corner_mid).norm();

    let mut b = Builder::start(gripper, at(jaw_mid, params.hover_height, yaw));
    approach_and_grasp(&mut b, params, jaw_mid, yaw, width);
    let firm = gripper.torque_for_force(params.firm_grip_force);
    let center = 0.5 * (jaw_mid + target);
    let half = 0.5 * (target - jaw_mid);
    let n = params.arc_segments;
    for k in 1..=n {
        let theta = std::f64::consts::PI * k as f64 / n as f64;
        let p = if k == n {
            target
        } else {
            center - half * theta.cos()
        };
        let z = if k == n { 0.0 } else { apex * theta.sin() };
        let mut pose = at(p, z, yaw);
        if params.wrist_flip {
            pose.roll = theta;
        }
        b.push(pose, width, firm, ActionTag::FoldArc, params.arc_speed, 0.0);
    }
    release_and_retract(&mut b, params);
    b.finish(params, warnings)
}

/// Drag plan: grasp at the edge midpoint with the fingers closed, lift
/// slightly, translate by `distance` along `direction`, lower and release.
pub fn plan_drag(
    edge_midpoint: Vec2,
    direction: Vec2,
    distance: f64,
    gripper: &GripperParams,
    params: &PlannerParams,
) -> Result<Trajectory> {
    params.validate(gripper)?;
    if !(distance >= 0.0 && distance.is_finite()) {
        return Err(Error::validation(
            "drag distance",
            format!("must be non-negative, got {distance}"),
        ));
    }
    let d = unit(direction, "drag direction")?;
    // roller axis along the drag; finger axis across it
    let yaw = yaw_along(-perp(&d));
    let jaw = edge_midpoint - d * params.jaw_inset;
    let mut b = Builder::start(gripper, at(jaw, params.hover_height, yaw));
    approach_and_grasp(&mut b, params, jaw, yaw, gripper.width_min);
    if distance > 0.0 {
        let firm = gripper.torque_for_force(params.firm_grip_force);
        let w = gripper.width_min;
        let end = jaw + d * distance;
        b.push(
            at(jaw, params.drag_lift, yaw),
            w,
            firm,
            ActionTag::Move,
            params.move_speed,
            0.0,
        );
        b.push(
            at(end, params.drag_lift, yaw),
            w,
            firm,
            ActionTag::Move,
            params.move_speed,
            0.0,
        );
        b.push(
            at(end, 0.0, yaw),
            w,
            firm,
            ActionTag::Move,
            params.move_speed,
            0.0,
        );
    }
    release_and_retract(&mut b, params);
    b.finish(params, Vec::new())
}

/// Lift plan: grasp both corners, lift vertically to `height`, hold for
/// `hold` seconds, release. `inward` points from the corners into the cloth.
pub fn plan_lift(
    p1: Vec2,
    p2: Vec2,
    inward: Vec2,
    height: f64,
    hold: f64,
    gripper: &GripperParams,
    params: &PlannerParams,
) -> Result<Trajectory> {
    params.validate(gripper)?;
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::validation(
            "lift height",
            format!("must be positive, got {height}"),
        ));
    }
    if !(hold >= 0.0 && hold.is_finite()) {
        return Err(Error::validation(
            "hold time",
            format!("must be non-negative, got {hold}"),
        ));
    }
    if (p1 - p2).norm() < 1e-9 {
        return Err(Error::Planning("grasp corners coincide".into()));
    }
    let inward = unit(inward, "inward direction")?;
    let mut warnings = Vec::new();
    let width = grasp_width(p1, p2, params.jaw_inset, gripper, &mut warnings);
    let yaw = yaw_along(p2 - p1);
    let jaw_mid = 0.5 * (p1 + p2) + inward * params.jaw_inset;
    let mut b = Builder::start(gripper, at(jaw_mid, params.hover_height, yaw));
    approach_and_grasp(&mut b, params, jaw_mid, yaw, width);
    let firm = gripper.torque_for_force(params.firm_grip_force);
    let top = at(jaw_mid, height, yaw);
    b.push(top, width, firm, ActionTag::Move, params.move_speed, 0.0);
    if hold > 0.0 {
        b.push(top, width, firm, ActionTag::Hold, params.move_speed, hold);
    }
    release_and_retract(&mut b, params);
    b.finish(params, warnings)
}

/// Flatten plan: firm grasp at `grasp_point`, then the grip drops below the
/// switch threshold and the tool slides `slide_length` along
/// `slide_direction` on the roller contact before releasing.
pub fn plan_flatten(
    grasp_point: Vec2,
    slide_direction: Vec2,
    slide_length: f64,
    gripper: &GripperParams,
    params: &PlannerParams,
) -> Result<Trajectory> {
    params.validate(gripper)?;
    if !(slide_length >= 0.0 && slide_length.is_finite()) {
        return Err(Error::validation(
            "slide length",
            format!("must be non-negative, got {slide_length}"),
        ));
    }
    let d = unit(slide_direction, "slide direction")?;
    let yaw = yaw_along(-perp(&d));
    let mut b = Builder::start(gripper, at(grasp_point, params.hover_height, yaw));
    approach_and_grasp(&mut b, params, grasp_point, yaw, gripper.width_min);
    if slide_length > 0.0 {
        let soft = gripper.torque_for_force(params.flatten_grip_force);
        let w = gripper.width_min;
        b.push(
            at(grasp_point, 0.0, yaw),
            w,
            soft,
            ActionTag::Slide,
            params.move_speed,
            0.0,
        );
        let end = grasp_point + d * slide_length;
        b.push(
            at(end, 0.0, yaw),
            w,
            soft,
            ActionTag::Slide,
            params.move_speed,
            0.0,
        );
    }
    release_and_retract(&mut b, params);
    b.finish(params, Vec::new())
}
