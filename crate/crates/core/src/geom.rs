//! Small geometric vocabulary shared by every module: vectors, tool poses and
//! oriented 2D lines.

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Standard gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

/// 6-DOF pose of the gripper base: position in meters, orientation as
/// roll/pitch/yaw in radians (applied yaw·pitch·roll).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::new(Vec3::zeros(), 0.0)
    }
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Pose {
            position,
            roll: 0.0,
            pitch: 0.0,
            yaw,
        }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    /// Maps a point expressed in this frame into the world frame.
    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.position + self.rotation() * local
    }

    /// Maps a world point into this frame.
    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.rotation().inverse() * (world - self.position)
    }

    /// Linear blend of position and orientation angles. Orientation blending
    /// is per-angle, which is adequate for the yaw-only motions planned here.
    pub fn lerp(&self, other: &Pose, s: f64) -> Pose {
        Pose {
            position: self.position + (other.position - self.position) * s,
            roll: self.roll + (other.roll - self.roll) * s,
            pitch: self.pitch + (other.pitch - self.pitch) * s,
            yaw: self.yaw + (other.yaw - self.yaw) * s,
        }
    }
}

/// An oriented line in the table plane. `normal` is unit length; the side it
/// points into is the "positive" side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub point: Vec2,
    pub normal: Vec2,
}

impl Line2 {
    /// Builds a line, normalizing `normal`. Returns `None` for a zero normal.
    pub fn new(point: Vec2, normal: Vec2) -> Option<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return None;
        }
        Some(Line2 {
            point,
            normal: normal / n,
        })
    }

    pub fn signed_distance(&self, p: &Vec2) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn reflect(&self, p: &Vec2) -> Vec2 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    /// Unit direction along the line (normal rotated by +90°).
    pub fn tangent(&self) -> Vec2 {
        perp(&self.normal)
    }
}

/// Counter-clockwise perpendicular.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

pub fn rotate2(v: &Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn xy(v: &Vec3) -> Vec2 {
    Vec2::new(v.x, v.y)
}

/// Shoelace area of a polygon given as an open or closed vertex list;
/// positive for counter-clockwise winding.
pub fn signed_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..n {
        let a = points[k];
        let b = points[(k + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_is_involutive() {
        let line = Line2::new(Vec2::new(0.1, 0.2), Vec2::new(1.0, 2.0)).unwrap();
        let p = Vec2::new(-0.3, 0.7);
        let q = line.reflect(&p);
        assert!((line.signed_distance(&q) + line.signed_distance(&p)).abs() < 1e-12);
        assert!((line.reflect(&q) - p).norm() < 1e-12);
    }

    #[test]
    fn pose_round_trip() {
        let pose = Pose::new(Vec3::new(0.1, -0.2, 0.3), 0.7);
        let p = Vec3::new(0.05, 0.02, -0.01);
        assert!((pose.to_local(&pose.to_world(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(Line2::new(Vec2::zeros(), Vec2::zeros()).is_none());
    }

    #[test]
    fn ccw_square_has_positive_area() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!((signed_area(&sq) - 1.0).abs() < 1e-12);
    }
}
