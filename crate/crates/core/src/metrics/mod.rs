//! Evaluation: silhouette IoU against the halved pre-fold mask, a
//! Canny-based wrinkle penalty, drag placement offset, lift outcome
//! classes and the payload pull protocol.

pub mod canny;
pub mod image;
pub mod payload;

use serde::{Deserialize, Serialize};

pub use canny::{canny, canny_with, sobel, CannyParams};
pub use image::{render_shaded, render_shaded_on, GrayImage};
pub use payload::{payload_pull, PayloadOutcome, PayloadSetup};

use crate::error::{Error, Result};
use crate::geom::{Line2, Vec2};
use crate::gripper::Finger;
use crate::percept::BinaryMask;
use crate::planner::{ActionTag, EpisodeReport, EventKind, LiftClass, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub iou: f64,
    /// Fraction of cloth-mask pixels flagged as wrinkle edges.
    pub wr: f64,
}

/// Pixels kept from the mask boundary when counting wrinkles.
pub const BOUNDARY_MARGIN: usize = 3;

fn same_grid(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.frame == b.frame
}

/// Intersection over union. Masks on different frames are compared on a
/// frame grown from `a`'s to cover both, with nearest-neighbor sampling.
/// Two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (inter, union) = if same_grid(a, b) {
        count_pair(a, b)
    } else {
        let frame = a.frame.union(&b.frame);
        count_pair(&a.resample(&frame), &b.resample(&frame))
    };
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn count_pair(a: &BinaryMask, b: &BinaryMask) -> (usize, usize) {
    a.bits.iter().zip(&b.bits).fold((0, 0), |(i, u), (x, y)| {
        (i + usize::from(*x && *y), u + usize::from(*x || *y))
    })
}

/// The desired post-fold silhouette: the pre-fold mask clipped to the
/// stationary side of the fold line (signed distance ≤ 0).
pub fn generate_fold_ground_truth(pre_mask: &BinaryMask, fold_line: &Line2) -> Result<BinaryMask> {
    let (lo, hi) = pre_mask
        .occupied_bounds()
        .ok_or_else(|| Error::validation("pre-fold mask", "mask is empty"))?;
    let box_corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    let d: Vec<f64> = box_corners
        .iter()
        .map(|c| fold_line.signed_distance(c))
        .collect();
    if d.iter().all(|v| *v > 0.0) || d.iter().all(|v| *v < 0.0) {
        return Err(Error::validation(
            "fold line",
            "does not intersect the mask's bounding box",
        ));
    }
    let frame = pre_mask.frame;
    Ok(BinaryMask::from_fn(frame, |i, j| {
        pre_mask.get(i, j) && fold_line.signed_distance(&frame.pixel_center(i, j)) <= 0.0
    }))
}

/// Wrinkle penalty: edge pixels inside the eroded cloth mask over the mask
/// area.
pub fn wrinkle_penalty(
    img: &GrayImage,
    cloth_mask: &BinaryMask,
    params: &CannyParams,
) -> Result<f64> {
    if img.width() != cloth_mask.width() || img.height() != cloth_mask.height() {
        return Err(Error::validation(
            "wrinkle penalty",
            "image and mask dimensions differ",
        ));
    }
    let area = cloth_mask.count();
    if area == 0 {
        return Err(Error::validation("wrinkle penalty", "cloth mask is empty"));
    }
    let edges = canny(img, params.low, params.high)?;
    Ok(edge_fraction(&edges, cloth_mask, params.boundary_margin))
}

/// `|edges ∧ erode(mask)| / |mask|`.
pub fn edge_fraction(edges: &BinaryMask, cloth_mask: &BinaryMask, margin: usize) -> f64 {
    let inner = cloth_mask.erode(margin);
    let hits = edges
        .bits
        .iter()
        .zip(&inner.bits)
        .filter(|(e, m)| **e && **m)
        .count();
    hits as f64 / cloth_mask.count().max(1) as f64
}

pub fn score_fold(
    post_mask: &BinaryMask,
    ground_truth: &BinaryMask,
    render: &GrayImage,
    params: &CannyParams,
) -> Result<FoldScore> {
    Ok(FoldScore {
        iou: iou(post_mask, ground_truth),
        wr: wrinkle_penalty(render, post_mask, params)?,
    })
}

/// Rounds meters to the nearest millimeter.
pub fn round_mm(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Mean signed distance of the mask's leading edge past `alignment_line`
/// (positive along its normal), rounded to 1 mm.
pub fn drag_offset(final_mask: &BinaryMask, alignment_line: &Line2) -> Result<f64> {
    leading_edge_offset(final_mask, alignment_line).map(round_mm)
}

/// Unrounded [`drag_offset`]. The mask is cut into one-pixel bins along the
/// line; each bin contributes its outermost pixel edge.
pub fn leading_edge_offset(final_mask: &BinaryMask, alignment_line: &Line2) -> Result<f64> {
    if final_mask.is_blank() {
        return Err(Error::validation("drag mask", "mask is empty"));
    }
    let frame = final_mask.frame;
    let s = frame.scale;
    let n = alignment_line.normal;
    let reach = 0.5 * s * (n.x.abs() + n.y.abs());
    let tangent = alignment_line.tangent();
    let mut bins: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (i, j) in final_mask.occupied() {
        let c = frame.pixel_center(i, j);
        let along = ((c - alignment_line.point).dot(&tangent) / s).round() as i64;
        let d = alignment_line.signed_distance(&c) + reach;
        bins.entry(along).and_modify(|v| *v = v.max(d)).or_insert(d);
    }
    Ok(bins.values().sum::<f64>() / bins.len() as f64)
}

/// Whether each finger kept its grasp from the grasp stage through the end
/// of the hold, judged only from the event stream.
pub fn retained_grasp(report: &EpisodeReport, finger: Finger) -> bool {
    let hold_end = report
        .stage_start(ActionTag::Release)
        .unwrap_or(report.end_time);
    let mut held = false;
    for e in report.events.iter().filter(|e| e.t < hold_end) {
        match e.kind {
            EventKind::GraspAttempt { finger: f, ok, .. } if f == finger => held |= ok,
            EventKind::Slip { finger: f, .. } | EventKind::ContactLost { finger: f }
                if f == finger =>
            {
                return false
            }
            EventKind::Release { finger: f } if f == finger => return false,
            _ => {}
        }
    }
    held
}

/// Perfect when both fingers held through the hold, Half for one, Fail for
/// none.
pub fn classify_lift(report: &EpisodeReport) -> Result<LiftClass> {
    if report.task != TaskKind::Lift {
        return Err(Error::validation(
            "lift report",
            format!("episode is a {} task", report.task),
        ));
    }
    let held = Finger::BOTH
        .iter()
        .filter(|f| retained_grasp(report, **f))
        .count();
    Ok(match held {
        2 => LiftClass::Perfect,
        1 => LiftClass::Half,
        _ => LiftClass::Fail,
    })
}
