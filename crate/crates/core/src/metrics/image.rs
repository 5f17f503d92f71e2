//! Grayscale images and the top-down shaded render of a cloth.

use serde::{Deserialize, Serialize};

use crate::cloth::ClothState;
use crate::error::{Error, Result};
use crate::geom::{xy, Vec2, Vec3};
use crate::percept::{cloth_frame, MaskFrame};

/// Intensities in [0, 1] on a [`MaskFrame`] grid, row-major with row 0 at
/// the frame origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub frame: MaskFrame,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(frame: MaskFrame, fill: f64) -> Self {
        GrayImage {
            data: vec![fill; frame.len()],
            frame,
        }
    }

    pub fn from_fn(frame: MaskFrame, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(frame.len());
        for j in 0..frame.height_px {
            for i in 0..frame.width_px {
                data.push(f(i, j));
            }
        }
        Self::from_data(frame, data)
    }

    pub fn from_data(frame: MaskFrame, data: Vec<f64>) -> Result<Self> {
        if data.len() != frame.len() {
            return Err(Error::validation(
                "gray image",
                "data length does not match the frame",
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(
                "gray image",
                format!("intensity {v} outside [0, 1]"),
            ));
        }
        Ok(GrayImage { frame, data })
    }

    pub fn width(&self) -> usize {
        self.frame.width_px
    }

    pub fn height(&self) -> usize {
        self.frame.height_px
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.frame.width_px + i]
    }

    /// Reads with coordinates clamped into the image.
    pub fn get_clamped(&self, i: i64, j: i64) -> f64 {
        let i = i.clamp(0, self.width() as i64 - 1) as usize;
        let j = j.clamp(0, self.height() as i64 - 1) as usize;
        self.get(i, j)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }
}

/// Direction toward the light.
pub fn light_direction() -> Vec3 {
    Vec3::new(1.0, 1.0, 2.0).normalize()
}

const AMBIENT: f64 = 0.2;
const DIFFUSE: f64 = 0.8;

fn shade(n: &Vec3) -> f64 {
    AMBIENT + DIFFUSE * n.dot(&light_direction()).max(0.0)
}

/// Upward-facing unit vertex normals from the grid's cell faces.
fn vertex_normals(cloth: &ClothState) -> Result<Vec<Vec3>> {
    let grid = cloth
        .grid
        .ok_or_else(|| Error::validation("cloth", "rendering needs a grid topology"))?;
    let p = &cloth.positions;
    let mut acc = vec![Vec3::zeros(); p.len()];
    for (i, j) in grid.cells() {
        let [a, b, c, d] = grid.cell(i, j);
        for [x, y, z] in [[a, b, c], [a, c, d]] {
            let mut n = (p[y] - p[x]).cross(&(p[z] - p[x]));
            if n.z < 0.0 {
                n = -n;
            }
            acc[x] += n;
            acc[y] += n;
            acc[z] += n;
        }
    }
    Ok(acc
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect())
}

const EDGE_EPS: f64 = 1e-9;

/// Top-down Lambertian render: per-vertex shading interpolated across each
/// triangle, nearest surface to the camera wins. Background is black.
pub fn render_shaded_on(cloth: &ClothState, frame: &MaskFrame) -> Result<GrayImage> {
    let grid = cloth
        .grid
        .ok_or_else(|| Error::validation("cloth", "rendering needs a grid topology"))?;
    let normals = vertex_normals(cloth)?;
    let intensity: Vec<f64> = normals.iter().map(shade).collect();
    let mut img = GrayImage::new(*frame, 0.0);
    let mut depth = vec![f64::NEG_INFINITY; frame.len()];
    let s = frame.scale;
    for (i, j) in grid.cells() {
        let [a, b, c, d] = grid.cell(i, j);
        for tri in [[a, b, c], [a, c, d]] {
            let v = tri.map(|k| xy(&cloth.positions[k]));
            let area = (v[1] - v[0]).perp(&(v[2] - v[0]));
            if area.abs() < 1e-18 {
                continue;
            }
            let lo = v[0].inf(&v[1]).inf(&v[2]);
            let hi = v[0].sup(&v[1]).sup(&v[2]);
            let i0 = (((lo.x - frame.origin.x) / s - 0.5).ceil().max(0.0)) as usize;
            let j0 = (((lo.y - frame.origin.y) / s - 0.5).ceil().max(0.0)) as usize;
            let i1 = (((hi.x - frame.origin.x) / s - 0.5).floor()).min(frame.width_px as f64 - 1.0);
            let j1 =
                (((hi.y - frame.origin.y) / s - 0.5).floor()).min(frame.height_px as f64 - 1.0);
            if i1 < 0.0 || j1 < 0.0 {
                continue;
            }
            for pj in j0..=j1 as usize {
                for pi in i0..=i1 as usize {
                    let q: Vec2 = frame.pixel_center(pi, pj);
                    let w0 = (v[2] - v[1]).perp(&(q - v[1])) / area;
                    let w1 = (v[0] - v[2]).perp(&(q - v[2])) / area;
                    let w2 = 1.0 - w0 - w1;
                    // centers on a shared edge must not fall through both triangles
                    if w0 < -EDGE_EPS || w1 < -EDGE_EPS || w2 < -EDGE_EPS {
                        continue;
                    }
                    let z = w0 * cloth.positions[tri[0]].z
                        + w1 * cloth.positions[tri[1]].z
                        + w2 * cloth.positions[tri[2]].z;
                    let k = pj * frame.width_px + pi;
                    if z > depth[k] {
                        depth[k] = z;
                        img.data[k] = (w0 * intensity[tri[0]]
                            + w1 * intensity[tri[1]]
                            + w2 * intensity[tri[2]])
                            .clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Shaded render on the cloth's own padded frame.
pub fn render_shaded(cloth: &ClothState, scale: f64) -> Result<GrayImage> {
    let frame = cloth_frame(cloth, scale)?;
    render_shaded_on(cloth, &frame)
}
