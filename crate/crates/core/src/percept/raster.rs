//! Orthographic top-down rasterization of the cloth by polygon scan
//! conversion. A pixel is filled when its center lies inside a polygon;
//! spans are half-open so adjacent cells tile without gaps or overlap.

use crate::cloth::ClothState;
use crate::error::{Error, Result};
use crate::geom::{xy, Vec2};

use super::mask::{BinaryMask, MaskFrame};

/// Fraction of the cloth extent added on each side of the mask frame.
pub const FRAME_PADDING: f64 = 0.05;

/// Calls `fill(i, j)` for every pixel whose center is inside `poly`
/// (even-odd rule).
pub fn scan_polygon(frame: &MaskFrame, poly: &[Vec2], mut fill: impl FnMut(usize, usize)) {
    if poly.len() < 3 {
        return;
    }
    let s = frame.scale;
    let (ymin, ymax) = poly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    // generous row range; the per-edge test below decides membership
    let row_lo = (((ymin - frame.origin.y) / s - 0.5).floor() - 1.0).max(0.0);
    let row_hi = (((ymax - frame.origin.y) / s - 0.5).ceil() + 1.0).min(frame.height_px as f64);
    if row_hi <= row_lo {
        return;
    }
    let (row_lo, row_hi) = (row_lo as usize, row_hi as usize);
    let mut xs: Vec<f64> = Vec::with_capacity(4);
    for j in row_lo..row_hi {
        let y = frame.origin.y + (j as f64 + 0.5) * s;
        xs.clear();
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if y >= lo.y && y < hi.y {
                xs.push(lo.x + (y - lo.y) * (hi.x - lo.x) / (hi.y - lo.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let c0 = ((pair[0] - frame.origin.x) / s - 0.5).ceil().max(0.0);
            let c1 = ((pair[1] - frame.origin.x) / s - 0.5)
                .ceil()
                .min(frame.width_px as f64);
            if c1 <= c0 {
                continue;
            }
            for i in c0 as usize..c1 as usize {
                fill(i, j);
            }
        }
    }
}

pub fn rasterize_polygon(poly: &[Vec2], frame: &MaskFrame) -> BinaryMask {
    let mut mask = BinaryMask::empty(*frame);
    scan_polygon(frame, poly, |i, j| mask.set(i, j, true));
    mask
}

/// Frame covering the cloth's top-down extent, padded by
/// [`FRAME_PADDING`].
pub fn cloth_frame(cloth: &ClothState, scale: f64) -> Result<MaskFrame> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::validation(
            "mask scale",
            format!("must be positive, got {scale}"),
        ));
    }
    if cloth.is_empty() {
        return Err(Error::validation("cloth", "no particles"));
    }
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in &cloth.positions {
        lo = lo.inf(&xy(p));
        hi = hi.sup(&xy(p));
    }
    let extent = hi - lo;
    if !(extent.x > 1e-9 || extent.y > 1e-9) {
        return Err(Error::validation(
            "cloth",
            "degenerate: all particles coincide in the table plane",
        ));
    }
    // a cloth collapsed to a line still needs a finite band to rasterize
    let pad = extent.x.max(extent.y) * FRAME_PADDING;
    let lo = lo - Vec2::repeat(pad);
    let hi = hi + Vec2::repeat(pad);
    MaskFrame::covering(lo, hi, 0.0, scale)
}

/// Top-down occupancy of the cloth on a frame fit to its current extent.
pub fn rasterize_mask(cloth: &ClothState, scale: f64) -> Result<BinaryMask> {
    let frame = cloth_frame(cloth, scale)?;
    rasterize_mask_on(cloth, &frame)
}

/// Top-down occupancy of the cloth on a caller-supplied frame. Parts of the
/// cloth outside the frame are clipped.
pub fn rasterize_mask_on(cloth: &ClothState, frame: &MaskFrame) -> Result<BinaryMask> {
    let grid = cloth
        .grid
        .ok_or_else(|| Error::validation("cloth", "rasterization needs a grid topology"))?;
    let mut mask = BinaryMask::empty(*frame);
    for (i, j) in grid.cells() {
        let quad = grid.cell(i, j).map(|k| xy(&cloth.positions[k]));
        scan_polygon(frame, &quad, |a, b| mask.set(a, b, true));
    }
    Ok(mask)
}
