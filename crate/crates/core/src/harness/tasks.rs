//! One trial of a scenario: place and settle the cloth, run the task
//! pipeline and collect the metric row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloth::{build_cloth, ClothState, Placement};
use crate::error::{Error, Result};
use crate::geom::{Line2, Vec2};
use crate::gripper::GripperState;
use crate::metrics::{classify_lift, drag_offset, leading_edge_offset, payload_pull};
use crate::percept::{
    aligned_direction, cloth_frame, observe, rasterize_mask_on, select_grasp_corners, BinaryMask,
};
use crate::planner::{
    auto_fold, execute, plan_drag, plan_flatten, plan_lift, EpisodeReport, FoldSpec, LiftClass,
    TaskKind,
};

use super::scenario::{
    Scenario, DEFAULT_RIDGE_AMPLITUDE, DEFAULT_RIDGE_HALF_WIDTH, DEFAULT_RIDGE_OFFSET,
};
use super::wrinkle::{apply_ridge, random_ridges, Ridge};

/// Initial conditions of one trial, drawn from the suite seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub trial: usize,
    pub placement: Placement,
    pub wrinkles: Vec<Ridge>,
}

/// Generator for one trial: the suite seed picks the key, the scenario name
/// and trial index pick the stream, so trials do not depend on each other
/// or on scenario order.
pub fn trial_rng(seed: u64, scenario: &str, trial: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(scenario.as_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    let stream = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn symmetric<R: Rng>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

pub fn trial_setup(scenario: &Scenario, seed: u64, trial: usize) -> Result<TrialSetup> {
    let mut rng = trial_rng(seed, &scenario.name, trial);
    let pose = &scenario.pose;
    let placement = if pose.poses.is_empty() {
        Placement::new(
            pose.x + symmetric(&mut rng, pose.jitter_xy),
            pose.y + symmetric(&mut rng, pose.jitter_xy),
            (pose.yaw_deg + symmetric(&mut rng, pose.jitter_yaw_deg)).to_radians(),
        )
    } else {
        let [x, y, yaw] = pose.poses[trial % pose.poses.len()];
        Placement::new(x, y, yaw.to_radians())
    };
    let wrinkles = if pose.wrinkles > 0 {
        let flat = build_cloth(&scenario.cloth, placement)?;
        random_ridges(
            &mut rng,
            &flat,
            pose.wrinkles,
            pose.wrinkle_amplitude,
            pose.wrinkle_half_width,
        )?
    } else {
        Vec::new()
    };
    Ok(TrialSetup {
        trial,
        placement,
        wrinkles,
    })
}

/// One CSV row. Metrics that do not apply to the task stay empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub scenario: String,
    pub trial: usize,
    pub task: TaskKind,
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
    pub valid: bool,
    pub iou_1: Option<f64>,
    pub wr_1: Option<f64>,
    pub area_ratio_1: Option<f64>,
    pub iou_2: Option<f64>,
    pub wr_2: Option<f64>,
    pub area_ratio_2: Option<f64>,
    /// Drag placement offset, meters (1 mm resolution).
    pub offset: Option<f64>,
    pub lift: Option<LiftClass>,
    pub peak_force: Option<f64>,
    pub max_z_before: Option<f64>,
    pub max_z_after: Option<f64>,
    pub failure: Option<String>,
}

impl TrialRow {
    fn new(scenario: &Scenario, setup: &TrialSetup) -> Self {
        TrialRow {
            scenario: scenario.name.clone(),
            trial: setup.trial,
            task: scenario.task,
            x: setup.placement.origin.x,
            y: setup.placement.origin.y,
            yaw_deg: setup.placement.yaw.to_degrees(),
            valid: false,
            iou_1: None,
            wr_1: None,
            area_ratio_1: None,
            iou_2: None,
            wr_2: None,
            area_ratio_2: None,
            offset: None,
            lift: None,
            peak_force: None,
            max_z_before: None,
            max_z_after: None,
            failure: None,
        }
    }
}

/// Everything a trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub setup: TrialSetup,
    pub row: TrialRow,
    pub episodes: Vec<EpisodeReport>,
    /// Settled cloth the task started from; its topology renders frames.
    pub start: Option<ClothState>,
}

impl TrialOutcome {
    pub fn valid(&self) -> bool {
        self.row.valid
    }
}

fn settle(cloth: &ClothState, scenario: &Scenario) -> Result<ClothState> {
    Ok(cloth
        .settle(scenario.sim.settle_time, scenario.sim.settle_tol)?
        .0)
}

fn unit(v: [f64; 2]) -> Vec2 {
    Vec2::new(v[0], v[1]).normalize()
}

/// Places, wrinkles and settles the cloth for a trial.
pub fn prepare_cloth(scenario: &Scenario, setup: &TrialSetup) -> Result<ClothState> {
    let mut cloth = build_cloth(&scenario.cloth, setup.placement)?;
    for r in &setup.wrinkles {
        cloth = apply_ridge(&cloth, r)?;
    }
    settle(&cloth, scenario)
}

/// Runs one trial. Errors and failed episodes come back as an invalid row
/// rather than an `Err`.
pub fn run_trial(scenario: &Scenario, setup: TrialSetup, keep_snapshots: bool) -> TrialOutcome {
    let mut row = TrialRow::new(scenario, &setup);
    let mut episodes = Vec::new();
    let mut start = None;
    let result = (|| -> Result<()> {
        if scenario.task == TaskKind::Payload {
            let out = payload_pull(&scenario.payload, &scenario.gripper)?;
            if !out.grasped {
                return Err(Error::Planning("payload grasp captured nothing".into()));
            }
            row.peak_force = Some(out.peak_force);
            return Ok(());
        }
        let cloth = prepare_cloth(scenario, &setup)?;
        start = Some(cloth.clone());
        let mut scenario = scenario.clone();
        scenario.exec.keep_snapshots |= keep_snapshots;
        match scenario.task {
            TaskKind::Fold => run_fold(&scenario, &cloth, &mut row, &mut episodes),
            TaskKind::Drag => run_drag(&scenario, &cloth, &mut row, &mut episodes),
            TaskKind::Lift => run_lift(&scenario, &cloth, &mut row, &mut episodes),
            TaskKind::Flatten => run_flatten(&scenario, &cloth, &mut row, &mut episodes),
            TaskKind::Payload => unreachable!("handled above"),
        }
    })();
    match result {
        Ok(()) => match episodes.iter().find_map(|e| e.failure.clone()) {
            Some(f) => row.failure = Some(f),
            None => row.valid = true,
        },
        Err(e) => row.failure = Some(e.to_string()),
    }
    TrialOutcome {
        setup,
        row,
        episodes,
        start,
    }
}

fn run_fold(
    s: &Scenario,
    cloth: &ClothState,
    row: &mut TrialRow,
    episodes: &mut Vec<EpisodeReport>,
) -> Result<()> {
    let gripper = GripperState::new(s.gripper)?;
    let n_folds = s.params.n_folds.expect("validated fold scenario");
    let spec = FoldSpec {
        direction: unit(s.params.direction()),
        n_folds,
    };
    let run = auto_fold(cloth, &gripper, &spec, &s.fold_options())?;
    for (k, r) in run.reports.iter().enumerate() {
        let score = r.metrics.fold;
        let (iou, wr, area) = match k {
            0 => (&mut row.iou_1, &mut row.wr_1, &mut row.area_ratio_1),
            _ => (&mut row.iou_2, &mut row.wr_2, &mut row.area_ratio_2),
        };
        *iou = score.map(|f| f.iou);
        *wr = score.map(|f| f.wr);
        *area = r.metrics.area_ratio;
    }
    let completed = run.completed();
    episodes.extend(run.reports);
    if completed < n_folds && episodes.iter().all(|e| e.failure.is_none()) {
        return Err(Error::Planning(format!(
            "only {completed} of {n_folds} folds completed"
        )));
    }
    Ok(())
}

fn run_drag(
    s: &Scenario,
    cloth: &ClothState,
    row: &mut TrialRow,
    episodes: &mut Vec<EpisodeReport>,
) -> Result<()> {
    let gripper = GripperState::new(s.gripper)?;
    let distance = s.params.distance.expect("validated drag scenario");
    let obs = observe(cloth, s.sim.scale, &s.corners)?;
    let requested = unit(s.params.direction());
    let d = if s.sim.snap_direction {
        aligned_direction(&obs.corners, requested)
    } else {
        requested
    };
    let grasp = select_grasp_corners(&obs.corners, d, &s.gripper)?;
    let edge_mid = 0.5 * (grasp.p1 + grasp.p2);
    // where the leading edge should end up: its starting place moved on by
    // the drag distance
    let reference = Line2::new(edge_mid, d).expect("unit direction");
    let lead = leading_edge_offset(&obs.mask, &reference)?;
    let target = Line2::new(edge_mid + d * (lead + distance), d).expect("unit direction");

    let traj = plan_drag(edge_mid, d, distance, &s.gripper, &s.planner)?;
    let run = execute(TaskKind::Drag, &traj, cloth, &gripper, &s.exec)?;
    let mut report = run.report;
    if !report.failed() {
        let settled = settle(&run.cloth, s)?;
        let frame = obs.mask.frame.union(&cloth_frame(&settled, s.sim.scale)?);
        let post = rasterize_mask_on(&settled, &frame)?;
        let offset = drag_offset(&post, &target)?;
        report.metrics.drag_offset = Some(offset);
        report.pre_mask = Some(obs.mask.resample(&frame));
        report.post_mask = Some(post);
        row.offset = Some(offset);
    }
    episodes.push(report);
    Ok(())
}

fn run_lift(
    s: &Scenario,
    cloth: &ClothState,
    row: &mut TrialRow,
    episodes: &mut Vec<EpisodeReport>,
) -> Result<()> {
    let gripper = GripperState::new(s.gripper)?;
    let obs = observe(cloth, s.sim.scale, &s.corners)?;
    let requested = unit(s.params.direction());
    let d = if s.sim.snap_direction {
        aligned_direction(&obs.corners, requested)
    } else {
        requested
    };
    let grasp = select_grasp_corners(&obs.corners, d, &s.gripper)?;
    let height = s.params.height.expect("validated lift scenario");
    let hold = s.params.hold.expect("validated lift scenario");
    let traj = plan_lift(grasp.p1, grasp.p2, -d, height, hold, &s.gripper, &s.planner)?;
    let run = execute(TaskKind::Lift, &traj, cloth, &gripper, &s.exec)?;
    let mut report = run.report;
    report.pre_mask = Some(obs.mask);
    if !report.failed() {
        let class = classify_lift(&report)?;
        report.metrics.lift = Some(class);
        row.lift = Some(class);
    }
    episodes.push(report);
    Ok(())
}

/// Raises the flattening ridge across the cloth, perpendicular to `normal`
/// and `offset` from the cloth's center.
pub fn flatten_ridge(
    cloth: &ClothState,
    normal: Vec2,
    offset: f64,
    amplitude: f64,
    half_width: f64,
) -> Result<Ridge> {
    let c = cloth.centroid();
    Ridge::new(
        Vec2::new(c.x, c.y) + normal * offset,
        normal,
        amplitude,
        half_width,
    )
}

fn run_flatten(
    s: &Scenario,
    cloth: &ClothState,
    row: &mut TrialRow,
    episodes: &mut Vec<EpisodeReport>,
) -> Result<()> {
    let gripper = GripperState::new(s.gripper)?;
    let p = &s.params;
    let requested = unit(p.direction());
    let d = if s.sim.snap_direction {
        aligned_direction(&observe(cloth, s.sim.scale, &s.corners)?.corners, requested)
    } else {
        requested
    };
    let ridge = flatten_ridge(
        cloth,
        d,
        p.ridge_offset.unwrap_or(DEFAULT_RIDGE_OFFSET),
        p.ridge_amplitude.unwrap_or(DEFAULT_RIDGE_AMPLITUDE),
        p.ridge_half_width.unwrap_or(DEFAULT_RIDGE_HALF_WIDTH),
    )?;
    let wrinkled = settle(&apply_ridge(cloth, &ridge)?, s)?;
    let before = wrinkled.max_z();
    row.max_z_before = Some(before);

    // grip the edge beyond the ridge and pull away from it
    let mask = observe(&wrinkled, s.sim.scale, &s.corners)?.mask;
    let across = Line2::new(ridge.point, d).expect("unit direction");
    let edge = leading_edge_offset(&mask, &across)?;
    let grasp_point = ridge.point + d * (edge - s.planner.jaw_inset);
    let slide = p.slide_length.expect("validated flatten scenario");
    let traj = plan_flatten(grasp_point, d, slide, &s.gripper, &s.planner)?;
    let run = execute(TaskKind::Flatten, &traj, &wrinkled, &gripper, &s.exec)?;
    let mut report = run.report;
    report.metrics.max_z_before = Some(before);
    report.pre_mask = Some(mask);
    if !report.failed() {
        let after = settle(&run.cloth, s)?.max_z();
        report.metrics.max_z_after = Some(after);
        row.max_z_after = Some(after);
    }
    episodes.push(report);
    Ok(())
}

/// Masks a trial wants written, with file stems.
pub fn trial_masks(outcome: &TrialOutcome) -> Vec<(String, &BinaryMask)> {
    let mut out = Vec::new();
    for (k, e) in outcome.episodes.iter().enumerate() {
        let stem = format!(
            "{}_t{:03}_e{}",
            outcome.row.scenario,
            outcome.row.trial,
            k + 1
        );
        for (kind, m) in [
            ("pre", &e.pre_mask),
            ("post", &e.post_mask),
            ("edges", &e.edges),
        ] {
            if let Some(m) = m {
                out.push((format!("{stem}_{kind}"), m));
            }
        }
    }
    out
}
