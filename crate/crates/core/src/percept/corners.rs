use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{perp, Vec2};
use crate::gripper::GripperParams;

use super::contour::Polygon;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CornerParams {
    /// Simplification tolerance, meters.
    pub epsilon: f64,
    /// Minimum turn angle for a simplified vertex to count as a corner.
    pub min_turn_deg: f64,
}

impl Default for CornerParams {
    fn default() -> Self {
        CornerParams {
            epsilon: 0.008,
            min_turn_deg: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CornerSet {
    /// Corners in the source polygon's (counter-clockwise) order.
    pub corners: Vec<Vec2>,
    pub source: Polygon,
}

impl CornerSet {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }
}

/// Two grasp corners and the opening width that spans them. `p1` sits on
/// the left finger when facing along the fold direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCorners {
    pub p1: Vec2,
    pub p2: Vec2,
    pub width: f64,
    /// True when the corner distance exceeded the gripper span.
    pub clamped: bool,
}

fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Iterative endpoint fit on the open chain `pts[lo..=hi]`; pushes kept
/// indices except `hi`.
fn simplify_chain(pts: &[Vec2], lo: usize, hi: usize, epsilon: f64, keep: &mut Vec<usize>) {
    let mut stack = vec![(lo, hi)];
    let mut kept = vec![lo];
    while let Some((a, b)) = stack.pop() {
        let mut worst = (0.0, a);
        for k in a + 1..b {
            let d = point_segment_distance(&pts[k], &pts[a], &pts[b]);
            if d > worst.0 {
                worst = (d, k);
            }
        }
        if worst.0 > epsilon {
            kept.push(worst.1);
            stack.push((worst.1, b));
            stack.push((a, worst.1));
        }
    }
    kept.sort_unstable();
    keep.extend(kept);
}

/// Simplifies a closed polygon, returning the kept vertices in order.
pub fn simplify_closed(polygon: &Polygon, epsilon: f64) -> Vec<Vec2> {
    let v = polygon.vertices();
    let n = v.len();
    if n <= 3 {
        return v.to_vec();
    }
    // anchor on an extreme point so no corner is hidden behind the start
    let center = v.iter().sum::<Vec2>() / n as f64;
    let farthest_from = |p: Vec2| {
        (0..n)
            .max_by(|&a, &b| {
                (v[a] - p)
                    .norm()
                    .total_cmp(&(v[b] - p).norm())
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    };
    let first = farthest_from(center);
    let mut ring: Vec<Vec2> = v[first..].iter().chain(&v[..first]).copied().collect();
    ring.push(ring[0]);
    let far = farthest_from(v[first]);
    let far = (far + n - first) % n;
    let far = if far == 0 { 1 } else { far };
    let mut keep = Vec::new();
    simplify_chain(&ring, 0, far, epsilon, &mut keep);
    simplify_chain(&ring, far, n, epsilon, &mut keep);
    keep.into_iter().map(|k| ring[k]).collect()
}

/// Unsigned turn angle at `b` walking a→b→c, degrees.
pub fn turn_angle_deg(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    let u = b - a;
    let w = c - b;
    let (nu, nw) = (u.norm(), w.norm());
    if nu == 0.0 || nw == 0.0 {
        return 0.0;
    }
    (u.dot(&w) / (nu * nw)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Corner detection: closed-polygon simplification followed by a turn-angle
/// filter on the simplified vertices.
pub fn detect_corners(polygon: &Polygon, params: &CornerParams) -> Result<CornerSet> {
    if !polygon.is_closed() {
        return Err(Error::validation(
            "polygon",
            "corner detection needs a closed contour",
        ));
    }
    if polygon.vertices().len() < 3 {
        return Err(Error::validation("polygon", "fewer than 3 vertices"));
    }
    let simplified = simplify_closed(polygon, params.epsilon);
    let n = simplified.len();
    let mut kept: Vec<usize> = Vec::new();
    if n >= 3 {
        for k in 0..n {
            let a = simplified[(k + n - 1) % n];
            let b = simplified[k];
            let c = simplified[(k + 1) % n];
            if turn_angle_deg(&a, &b, &c) >= params.min_turn_deg
                && kept.last().map(|&q| simplified[q]) != Some(b)
            {
                kept.push(k);
            }
        }
    }
    if kept.len() > 1 && simplified[kept[0]] == simplified[kept[kept.len() - 1]] {
        kept.pop();
    }
    let corners = merge_chamfers(&simplified, &kept, CHAMFER_FACTOR * params.epsilon);
    let corners = refine_corners(polygon.vertices(), &corners, params.epsilon);
    Ok(CornerSet {
        corners,
        source: polygon.clone(),
    })
}

/// Corners joined by a simplified edge shorter than this many tolerances
/// are one cut corner.
const CHAMFER_FACTOR: f64 = 2.5;

fn line_intersection(p: Vec2, u: Vec2, q: Vec2, w: Vec2) -> Option<Vec2> {
    let den = u.perp(&w);
    if den.abs() < 1e-12 * u.norm() * w.norm() {
        return None;
    }
    Some(p + u * ((q - p).perp(&w) / den))
}

/// Total least-squares line through `pts`: centroid and unit direction.
fn fit_line(pts: &[Vec2]) -> Option<(Vec2, Vec2)> {
    if pts.len() < 2 {
        return None;
    }
    let c = pts.iter().sum::<Vec2>() / pts.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy == 0.0 {
        return None;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Vec2::new(theta.cos(), theta.sin())))
}

/// Moves each corner to the meeting point of straight lines fitted to the
/// contour on either side of it. The ends of every side, within `2·epsilon`
/// of a corner or a quarter of the side, are left out of the fit; a corner whose refined position
/// lands further than `2·epsilon` away keeps its raw position.
fn refine_corners(vertices: &[Vec2], corners: &[Vec2], epsilon: f64) -> Vec<Vec2> {
    let m = corners.len();
    if m < 3 || vertices.len() < 3 {
        return corners.to_vec();
    }
    // sample the outline by length so long straight runs weigh what they span
    let step = epsilon / 8.0;
    let mut contour = Vec::new();
    for k in 0..vertices.len() {
        let (a, b) = (vertices[k], vertices[(k + 1) % vertices.len()]);
        let pieces = ((b - a).norm() / step).ceil().max(1.0) as usize;
        contour.extend((0..pieces).map(|s| a + (b - a) * (s as f64 / pieces as f64)));
    }
    let n = contour.len();
    let nearest = |c: &Vec2| {
        (0..n)
            .min_by(|&a, &b| (contour[a] - c).norm().total_cmp(&(contour[b] - c).norm()))
            .unwrap_or(0)
    };
    let at: Vec<usize> = corners.iter().map(nearest).collect();
    let trim = 2.0 * epsilon;
    let sides: Vec<Option<(Vec2, Vec2)>> = (0..m)
        .map(|k| {
            let (a, b) = (corners[k], corners[(k + 1) % m]);
            let (start, end) = (at[k], at[(k + 1) % m]);
            let len = (end + n - start) % n;
            let cut = trim.min(0.25 * (b - a).norm());
            let arc: Vec<Vec2> = (0..=len)
                .map(|s| contour[(start + s) % n])
                .filter(|p| (p - a).norm() > cut && (p - b).norm() > cut)
                .collect();
            fit_line(&arc).or_else(|| fit_line(&[a, b]))
        })
        .collect();
    (0..m)
        .map(|k| {
            let raw = corners[k];
            match (sides[(k + m - 1) % m], sides[k]) {
                (Some((p, u)), Some((q, w))) => line_intersection(p, u, q, w)
                    .filter(|x| (x - raw).norm() <= trim)
                    .unwrap_or(raw),
                _ => raw,
            }
        })
        .collect()
}

/// Replaces each pair of corners on adjacent simplified vertices less than
/// `min_edge` apart with the meeting point of their outer edges.
fn merge_chamfers(simplified: &[Vec2], kept: &[usize], min_edge: f64) -> Vec<Vec2> {
    let n = simplified.len();
    let m = kept.len();
    if m < 2 {
        return kept.iter().map(|&k| simplified[k]).collect();
    }
    let mut out = Vec::with_capacity(m);
    let mut used = vec![false; m];
    // a pair that wraps around the start is handled first so the order holds
    let mut start = 0;
    if (kept[0] + n - 1) % n == kept[m - 1]
        && (simplified[kept[0]] - simplified[kept[m - 1]]).norm() < min_edge
    {
        start = 1;
    }
    let mut idx = start;
    while idx < start + m {
        let t = idx % m;
        let u = (idx + 1) % m;
        if used[t] {
            idx += 1;
            continue;
        }
        let (a, b) = (kept[t], kept[u]);
        let adjacent = m > 2 && (a + 1) % n == b;
        if adjacent && !used[u] && (simplified[b] - simplified[a]).norm() < min_edge {
            let before = simplified[(a + n - 1) % n];
            let after = simplified[(b + 1) % n];
            let (pa, pb) = (simplified[a], simplified[b]);
            let mid = 0.5 * (pa + pb);
            let merged = line_intersection(before, pa - before, after, pb - after)
                .filter(|x| (x - mid).norm() <= min_edge)
                .unwrap_or(mid);
            out.push(merged);
            used[t] = true;
            used[u] = true;
            idx += 2;
        } else {
            out.push(simplified[a]);
            used[t] = true;
            idx += 1;
        }
    }
    out
}

const PROJECTION_TIE: f64 = 1e-9;

/// Picks the two corners furthest along `fold_direction` (the side that
/// moves). Among equally far pairs the wider pair wins, then the
/// lexicographically smaller one, so the choice ignores input order.
pub fn select_grasp_corners(
    corners: &CornerSet,
    fold_direction: Vec2,
    gripper: &GripperParams,
) -> Result<GraspCorners> {
    let pts = &corners.corners;
    if pts.len() < 2 {
        return Err(Error::Perception(format!(
            "need at least 2 corners, found {}",
            pts.len()
        )));
    }
    let norm = fold_direction.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::validation(
            "fold direction",
            "must be a non-zero vector",
        ));
    }
    let d = fold_direction / norm;
    let lex = |a: &Vec2, b: &Vec2| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y));
    let ordered = |a: Vec2, b: Vec2| if lex(&a, &b).is_le() { (a, b) } else { (b, a) };

    let mut best: Option<(f64, f64, (Vec2, Vec2))> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[i] == pts[j] {
                continue;
            }
            let reach = pts[i].dot(&d).min(pts[j].dot(&d));
            let dist = (pts[i] - pts[j]).norm();
            let pair = ordered(pts[i], pts[j]);
            let better = match &best {
                None => true,
                Some((r, dd, bp)) => {
                    if (reach - r).abs() > PROJECTION_TIE {
                        reach > *r
                    } else if (dist - dd).abs() > PROJECTION_TIE {
                        dist > *dd
                    } else {
                        lex(&pair.0, &bp.0).then(lex(&pair.1, &bp.1)).is_lt()
                    }
                }
            };
            if better {
                best = Some((reach, dist, pair));
            }
        }
    }
    let Some((_, dist, (a, b))) = best else {
        return Err(Error::Perception("all corners coincide".into()));
    };
    let left = perp(&d);
    let (p1, p2) = if a.dot(&left) >= b.dot(&left) {
        (a, b)
    } else {
        (b, a)
    };
    let width = gripper.clamp_width(dist);
    Ok(GraspCorners {
        p1,
        p2,
        width,
        clamped: width < dist,
    })
}

/// Dominant edge orientation of a corner polygon modulo 90°, radians, from
/// length-weighted averaging of the edge angles.
pub fn dominant_orientation(corners: &[Vec2]) -> Option<f64> {
    if corners.len() < 3 {
        return None;
    }
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..corners.len() {
        let e = corners[(k + 1) % corners.len()] - corners[k];
        let len = e.norm();
        let theta = e.y.atan2(e.x);
        s += len * (4.0 * theta).sin();
        c += len * (4.0 * theta).cos();
    }
    (s.hypot(c) > 1e-12).then(|| s.atan2(c) / 4.0)
}

/// Snaps `requested` to the nearest edge normal of an outline with at least
/// four corners. Other outlines keep the requested direction.
pub fn aligned_direction(corners: &CornerSet, requested: Vec2) -> Vec2 {
    let d = requested.normalize();
    if corners.len() < 4 {
        return d;
    }
    let Some(phi) = dominant_orientation(&corners.corners) else {
        return d;
    };
    (0..4)
        .map(|k| {
            let a = phi + k as f64 * std::f64::consts::FRAC_PI_2;
            Vec2::new(a.cos(), a.sin())
        })
        .max_by(|u, v| u.dot(&d).total_cmp(&v.dot(&d)))
        .unwrap_or(d)
}
