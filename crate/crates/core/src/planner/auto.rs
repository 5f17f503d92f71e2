//! The closed fold loop: observe, pick corners, place the fold line, plan,
//! execute, settle and score.

use serde::{Deserialize, Serialize};

use crate::cloth::ClothState;
use crate::error::{Error, Result};
use crate::geom::{perp, Line2, Vec2};
use crate::gripper::GripperState;
use crate::metrics::{
    canny, generate_fold_ground_truth, render_shaded_on, score_fold, CannyParams,
};
use crate::percept::{
    aligned_direction, cloth_frame, observe, rasterize_mask_on, select_grasp_corners, CornerParams,
    DEFAULT_SCALE,
};

use super::execute::{execute, EpisodeReport, ExecParams, TaskKind};
use super::plans::{plan_fold, PlannerParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    /// Direction of the first fold: the side of the cloth that moves.
    pub direction: Vec2,
    pub n_folds: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldOptions {
    /// Mask resolution, meters per pixel.
    pub scale: f64,
    pub corners: CornerParams,
    pub planner: PlannerParams,
    pub exec: ExecParams,
    pub canny: CannyParams,
    /// Settling after each fold, seconds.
    pub settle_time: f64,
    pub settle_tol: f64,
    /// Align the first fold with the cloth's edges.
    pub snap_direction: bool,
}

impl Default for FoldOptions {
    fn default() -> Self {
        FoldOptions {
            scale: DEFAULT_SCALE,
            corners: CornerParams::default(),
            planner: PlannerParams::default(),
            exec: ExecParams::default(),
            canny: CannyParams::default(),
            settle_time: 2.0,
            settle_tol: 1e-7,
            snap_direction: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FoldRun {
    /// One report per attempted fold; a failed fold ends the run.
    pub reports: Vec<EpisodeReport>,
    pub cloth: ClothState,
}

impl FoldRun {
    pub fn completed(&self) -> usize {
        self.reports.iter().filter(|r| !r.failed()).count()
    }
}

fn failed(msg: String) -> EpisodeReport {
    let mut r = EpisodeReport::new(TaskKind::Fold);
    r.failure = Some(msg);
    r
}

/// Folds the cloth `n_folds` times; each fold halves the current silhouette
/// along a line through its area centroid, and the second fold turns 90°
/// from the first.
pub fn auto_fold(
    cloth: &ClothState,
    gripper: &GripperState,
    spec: &FoldSpec,
    opts: &FoldOptions,
) -> Result<FoldRun> {
    if !(1..=2).contains(&spec.n_folds) {
        return Err(Error::validation(
            "fold spec",
            format!("n_folds must be 1 or 2, got {}", spec.n_folds),
        ));
    }
    let requested = spec
        .direction
        .try_normalize(1e-12)
        .ok_or_else(|| Error::validation("fold spec", "direction must be a non-zero vector"))?;
    let mut cloth = cloth.clone();
    let mut reports = Vec::new();
    let mut previous: Option<Vec2> = None;
    for _ in 0..spec.n_folds {
        let obs = match observe(&cloth, opts.scale, &opts.corners) {
            Ok(o) => o,
            Err(e) => {
                reports.push(failed(e.to_string()));
                break;
            }
        };
        let direction = match previous {
            None if opts.snap_direction => aligned_direction(&obs.corners, requested),
            None => requested,
            Some(d) => perp(&d),
        };
        let grasp = match select_grasp_corners(&obs.corners, direction, &gripper.params) {
            Ok(g) => g,
            Err(e) => {
                let mut r = failed(e.to_string());
                r.pre_mask = Some(obs.mask);
                reports.push(r);
                break;
            }
        };
        let centroid = obs
            .mask
            .centroid()
            .expect("observed mask has a contour, so it is non-empty");
        let line = Line2::new(centroid, direction).expect("direction is unit length");
        let traj = match plan_fold(grasp.p1, grasp.p2, &line, &gripper.params, &opts.planner) {
            Ok(t) => t,
            Err(e) => {
                let mut r = failed(e.to_string());
                r.pre_mask = Some(obs.mask);
                r.metrics.fold_line = Some(line);
                reports.push(r);
                break;
            }
        };
        let run = execute(TaskKind::Fold, &traj, &cloth, gripper, &opts.exec)?;
        let mut report = run.report;
        report.metrics.fold_line = Some(line);
        if report.failed() {
            report.pre_mask = Some(obs.mask);
            reports.push(report);
            break;
        }
        let settled = match run.cloth.settle(opts.settle_time, opts.settle_tol) {
            Ok((c, _)) => c,
            Err(e) => {
                report.failure = Some(e.to_string());
                report.pre_mask = Some(obs.mask);
                reports.push(report);
                break;
            }
        };
        cloth = settled;

        let frame = obs.mask.frame.union(&cloth_frame(&cloth, opts.scale)?);
        let pre = obs.mask.resample(&frame);
        let post = rasterize_mask_on(&cloth, &frame)?;
        let truth = generate_fold_ground_truth(&pre, &line)?;
        let render = render_shaded_on(&cloth, &frame)?;
        report.metrics.fold = Some(score_fold(&post, &truth, &render, &opts.canny)?);
        report.metrics.area_ratio = Some(post.count() as f64 / pre.count().max(1) as f64);
        report.edges = Some(canny(&render, opts.canny.low, opts.canny.high)?);
        report.pre_mask = Some(pre);
        report.post_mask = Some(post);
        reports.push(report);
        previous = Some(direction);
    }
    Ok(FoldRun { reports, cloth })
}
