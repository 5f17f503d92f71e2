//! Payload pull: the cloth is clamped along one edge, one finger grips the
//! opposite edge, and the tool backs away at constant speed until the grasp
//! slips or the rig's force cap is reached.

use serde::{Deserialize, Serialize};

use crate::cloth::{build_cloth, ClothSpec, Placement, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::gripper::{Anchor, Finger, FrictionMode, GripperParams, GripperState};

/// Lightest cloth the protocol accepts, kg.
pub const MIN_PAYLOAD_MASS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadSetup {
    pub cloth: ClothSpec,
    /// Grip force of the pulling finger, N.
    pub grip_force: f64,
    /// Rig force cap, N.
    pub max_force: f64,
    /// Tool retraction speed, m/s.
    pub pull_speed: f64,
    /// Give up after this much retraction, meters.
    pub max_travel: f64,
    pub jaw_inset: f64,
    pub dt: f64,
}

impl Default for PayloadSetup {
    fn default() -> Self {
        PayloadSetup {
            cloth: ClothSpec {
                width_m: 0.2,
                height_m: 0.2,
                nx: 11,
                ny: 11,
                mass_per_area: 3.0,
                stiffness_structural: 400.0,
                stiffness_shear: 100.0,
                stiffness_bend: 10.0,
                damping: 0.05,
                ..ClothSpec::default()
            },
            grip_force: 10.0,
            max_force: 30.0,
            pull_speed: 0.05,
            max_travel: 0.3,
            jaw_inset: 0.01,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadOutcome {
    /// Recorded pull force, N: the rig cap when nothing slipped, otherwise
    /// the peak tension up to the first slip.
    pub peak_force: f64,
    pub grasped: bool,
    pub slipped: bool,
    pub mode: FrictionMode,
    /// Tool travel when the pull ended, meters.
    pub travel: f64,
}

pub fn payload_pull(setup: &PayloadSetup, gripper: &GripperParams) -> Result<PayloadOutcome> {
    if !(setup.max_force > 0.0 && setup.max_force.is_finite()) {
        return Err(Error::validation("payload", "max_force must be positive"));
    }
    if !(setup.grip_force >= 0.0 && setup.pull_speed > 0.0 && setup.max_travel > 0.0) {
        return Err(Error::validation(
            "payload",
            "grip_force, pull_speed and max_travel must be valid",
        ));
    }
    let spec = &setup.cloth;
    if spec.total_mass() < MIN_PAYLOAD_MASS {
        return Err(Error::validation(
            "payload cloth",
            format!(
                "mass {:.3} kg is below the {MIN_PAYLOAD_MASS} kg minimum",
                spec.total_mass()
            ),
        ));
    }
    let mut cloth = build_cloth(spec, Placement::default())?;
    let grid = cloth.grid.expect("built cloth has a grid");
    for p in cloth.positions.iter_mut() {
        p.z = 0.0;
    }
    // clamp the y = min edge
    let anchors: Vec<Anchor> = (0..grid.nx)
        .map(|i| {
            let k = grid.index(i, 0);
            Anchor {
                particle: k,
                position: cloth.positions[k],
            }
        })
        .collect();

    let pull = Vec3::y();
    let mut g = GripperState::new(*gripper)?;
    // roller axis along the pull
    g.tool_pose = Pose::new(
        Vec3::new(0.0, 0.5 * spec.height_m - setup.jaw_inset, 0.0),
        0.0,
    );
    g.set_width(gripper.width_min);
    let torque = gripper.torque_for_force(setup.grip_force);
    g.command_torque(Finger::Left, torque)?;
    let mode = g.finger(Finger::Left).mode;
    let grasped = setup.grip_force > 0.0 && g.attempt_sliding_grasp(Finger::Left, &cloth);
    if !grasped {
        return Ok(PayloadOutcome {
            peak_force: 0.0,
            grasped: false,
            slipped: false,
            mode,
            travel: 0.0,
        });
    }

    let dt = setup.dt;
    let mut peak: f64 = 0.0;
    let mut travel = 0.0;
    let steps = (setup.max_travel / (setup.pull_speed * dt)).ceil() as usize;
    for _ in 0..steps {
        travel += setup.pull_speed * dt;
        g.tool_pose.position += pull * (setup.pull_speed * dt);
        let mut constraints = g.emit_constraints();
        constraints.anchors.clone_from(&anchors);
        let feedback = cloth.advance(dt, &constraints)?;
        g.absorb_feedback(&cloth, &feedback);
        let load = *feedback.load(Finger::Left);
        let tension = load.force.dot(&pull).max(0.0);
        if load.slipped {
            peak = peak.max(tension);
            return Ok(PayloadOutcome {
                peak_force: peak.min(setup.max_force),
                grasped: true,
                slipped: true,
                mode,
                travel,
            });
        }
        peak = peak.max(tension);
        if peak >= setup.max_force {
            break;
        }
    }
    Ok(PayloadOutcome {
        peak_force: setup.max_force,
        grasped: true,
        slipped: false,
        mode,
        travel,
    })
}
