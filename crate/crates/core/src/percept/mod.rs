//! Top-down perception stand-in: cloth masks, contours, corners and the
//! choice of which two corners to grasp.

pub mod contour;
pub mod corners;
pub mod mask;
pub mod raster;

pub use contour::{extract_contour, largest_component, Polygon};
pub use corners::{
    aligned_direction, detect_corners, dominant_orientation, select_grasp_corners, CornerParams,
    CornerSet, GraspCorners,
};
pub use mask::{BinaryMask, MaskFrame};
pub use raster::{cloth_frame, rasterize_mask, rasterize_mask_on, rasterize_polygon, scan_polygon};

use crate::cloth::ClothState;
use crate::error::Result;

/// Default mask resolution, meters per pixel.
pub const DEFAULT_SCALE: f64 = 0.002;

/// Mask, outline and corners of the cloth as seen from above.
#[derive(Clone, Debug)]
pub struct Observation {
    pub mask: BinaryMask,
    pub contour: Polygon,
    pub corners: CornerSet,
}

pub fn observe(cloth: &ClothState, scale: f64, params: &CornerParams) -> Result<Observation> {
    let mask = rasterize_mask(cloth, scale)?;
    let contour = extract_contour(&mask)?;
    let corners = detect_corners(&contour, params)?;
    Ok(Observation {
        mask,
        contour,
        corners,
    })
}
