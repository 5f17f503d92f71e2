//! Synthetic wrinkles: straight ridges raised out of a flat cloth without
//! stretching it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloth::ClothState;
use crate::error::{Error, Result};
use crate::geom::{perp, Vec2, Vec3};

/// A raised-cosine ridge running along a line: height `amplitude` on the
/// line, falling to zero `half_width` away on either side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub point: Vec2,
    /// Unit normal of the ridge line (the direction the profile varies in).
    pub normal: Vec2,
    pub amplitude: f64,
    pub half_width: f64,
}

const TABLE_STEPS: usize = 2000;

impl Ridge {
    pub fn new(point: Vec2, normal: Vec2, amplitude: f64, half_width: f64) -> Result<Self> {
        let normal = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::validation("ridge", "normal must be non-zero"))?;
        if !(amplitude >= 0.0
            && amplitude.is_finite()
            && half_width > 0.0
            && half_width.is_finite())
        {
            return Err(Error::validation(
                "ridge",
                format!("need amplitude >= 0 and half_width > 0, got {amplitude} and {half_width}"),
            ));
        }
        Ok(Ridge {
            point,
            normal,
            amplitude,
            half_width,
        })
    }

    pub fn height(&self, s: f64) -> f64 {
        if s.abs() >= self.half_width {
            0.0
        } else {
            0.5 * self.amplitude * (1.0 + (std::f64::consts::PI * s / self.half_width).cos())
        }
    }

    fn slope(&self, s: f64) -> f64 {
        if s.abs() >= self.half_width {
            0.0
        } else {
            let k = std::f64::consts::PI / self.half_width;
            -0.5 * self.amplitude * k * (k * s).sin()
        }
    }

    /// Cumulative arc length of the profile over [0, half_width].
    fn arc_table(&self) -> Vec<f64> {
        let h = self.half_width / TABLE_STEPS as f64;
        let mut table = Vec::with_capacity(TABLE_STEPS + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 0..TABLE_STEPS {
            let mid = (k as f64 + 0.5) * h;
            acc += h * (1.0 + self.slope(mid).powi(2)).sqrt();
            table.push(acc);
        }
        table
    }
}

/// Profile coordinate reached after `arc` meters of fabric from the crest.
fn unroll(table: &[f64], half_width: f64, arc: f64) -> f64 {
    let total = *table.last().expect("table is non-empty");
    if arc >= total {
        return arc - total + half_width;
    }
    let k = table
        .partition_point(|v| *v <= arc)
        .clamp(1, table.len() - 1);
    let (a, b) = (table[k - 1], table[k]);
    let step = half_width / (table.len() - 1) as f64;
    let t = if b > a { (arc - a) / (b - a) } else { 0.0 };
    (k as f64 - 1.0 + t) * step
}

/// Lifts `ridge` out of a cloth lying flat near the table. Each particle's
/// distance from the ridge line is read as fabric length, so material is
/// drawn in toward the crest and springs keep their lengths.
pub fn apply_ridge(cloth: &ClothState, ridge: &Ridge) -> Result<ClothState> {
    let table = ridge.arc_table();
    let positions = cloth
        .positions
        .iter()
        .map(|p| {
            let u = (Vec2::new(p.x, p.y) - ridge.point).dot(&ridge.normal);
            let s = unroll(&table, ridge.half_width, u.abs()).copysign(u);
            let shift = ridge.normal * (s - u);
            Vec3::new(p.x + shift.x, p.y + shift.y, p.z + ridge.height(s))
        })
        .collect();
    cloth.with_positions(positions)
}

/// `count` ridges through random points of the cloth's footprint with random
/// orientation.
pub fn random_ridges<R: Rng>(
    rng: &mut R,
    cloth: &ClothState,
    count: usize,
    amplitude: f64,
    half_width: f64,
) -> Result<Vec<Ridge>> {
    let c = cloth.centroid();
    let radius = cloth
        .positions
        .iter()
        .map(|p| Vec2::new(p.x - c.x, p.y - c.y).norm())
        .fold(0.0, f64::max);
    (0..count)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let normal = Vec2::new(angle.cos(), angle.sin());
            let along = rng.random_range(-0.5..0.5) * radius;
            let across = rng.random_range(-0.4..0.4) * radius;
            let point = Vec2::new(c.x, c.y) + perp(&normal) * along + normal * across;
            Ridge::new(point, normal, amplitude, half_width)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloth::{build_cloth, ClothSpec, Placement, SpringKind};

    #[test]
    fn ridge_keeps_structural_lengths() {
        let spec = ClothSpec {
            nx: 41,
            ny: 41,
            ..ClothSpec::default()
        };
        let flat = build_cloth(&spec, Placement::default()).unwrap();
        let ridge = Ridge::new(Vec2::zeros(), Vec2::x(), 0.02, 0.03).unwrap();
        let c = apply_ridge(&flat, &ridge).unwrap();
        assert!((c.max_z() - flat.max_z() - 0.02).abs() < 1e-3);
        let worst = c
            .springs()
            .iter()
            .filter(|s| s.kind == SpringKind::Structural)
            .map(|s| {
                ((c.positions[s.i] - c.positions[s.j]).norm() - s.rest_length).abs() / s.rest_length
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "worst strain {worst}");
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let flat = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let ridge = Ridge::new(Vec2::new(0.01, 0.0), Vec2::new(1.0, 1.0), 0.0, 0.03).unwrap();
        let c = apply_ridge(&flat, &ridge).unwrap();
        for (a, b) in c.positions.iter().zip(&flat.positions) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
