//! Top-down frame renders of a recorded episode with the jaws marked.

use crate::cloth::ClothState;
use crate::error::{Error, Result};
use crate::geom::{xy, Vec2, Vec3};
use crate::gripper::Finger;
use crate::io::Raster;
use crate::metrics::render_shaded_on;
use crate::percept::MaskFrame;
use crate::planner::{EpisodeReport, Frame};

/// Jaw marker half-size, pixels.
const MARK: i64 = 3;
/// Marker intensity for an empty and a holding jaw.
const MARK_OPEN: u8 = 96;
const MARK_HOLDING: u8 = 255;

fn jaw_points(f: &Frame) -> [Vec2; 2] {
    Finger::BOTH.map(|finger| {
        xy(&f
            .tool_pose
            .to_world(&Vec3::new(finger.side() * 0.5 * f.width, 0.0, 0.0)))
    })
}

fn frame_name(index: usize, total: usize) -> String {
    let digits = total.saturating_sub(1).to_string().len().max(5);
    format!("frame_{index:0digits$}.png")
}

/// Renders every `stride`-th frame (always the first). `cloth` supplies the
/// topology the snapshots belong to; the episode must have been recorded
/// with snapshots. All images share one pixel grid covering the cloth and
/// the jaws over the sampled frames.
pub fn render_frames(
    report: &EpisodeReport,
    cloth: &ClothState,
    stride: usize,
    scale: f64,
) -> Result<Vec<(String, Raster)>> {
    if stride == 0 {
        return Err(Error::validation("frame stride", "must be at least 1"));
    }
    if report.frames.is_empty() {
        return Err(Error::validation("episode", "has no frames"));
    }
    let picked: Vec<(usize, &Frame, &Vec<Vec3>)> = report
        .frames
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(k, f)| {
            f.snapshot
                .and_then(|s| report.snapshots.get(s))
                .map(|snap| (k, f, snap))
                .ok_or_else(|| {
                    Error::validation("episode", "frames were recorded without snapshots")
                })
        })
        .collect::<Result<_>>()?;

    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for (_, f, snap) in &picked {
        for p in snap.iter().map(xy).chain(jaw_points(f)) {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    let grid = MaskFrame::covering(lo, hi, 0.05, scale)?;

    picked
        .into_iter()
        .map(|(k, f, snap)| {
            let posed = cloth.with_positions(snap.clone())?;
            let mut raster = Raster::from_gray(&render_shaded_on(&posed, &grid)?);
            for (finger, jaw) in Finger::BOTH.iter().zip(jaw_points(f)) {
                let value = if f.fingers[finger.index()].grasped > 0 {
                    MARK_HOLDING
                } else {
                    MARK_OPEN
                };
                let ci = ((jaw.x - grid.origin.x) / scale).floor() as i64;
                let cj = ((jaw.y - grid.origin.y) / scale).floor() as i64;
                for j in cj - MARK..=cj + MARK {
                    for i in ci - MARK..=ci + MARK {
                        if i >= 0
                            && j >= 0
                            && (i as usize) < raster.width
                            && (j as usize) < raster.height
                        {
                            raster.data[j as usize * raster.width + i as usize] = value;
                        }
                    }
                }
            }
            Ok((frame_name(k, report.frames.len()), raster))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_pad_to_the_largest_index() {
        assert_eq!(frame_name(7, 100), "frame_00007.png");
        assert_eq!(frame_name(12, 200_000), "frame_000012.png");
    }
}
