//! Outer-boundary extraction of the largest 8-connected component.
//!
//! The boundary is traced along pixel edges ("crack following") with the
//! region kept on the left, which yields a counter-clockwise polygon in the
//! y-up world frame. Collinear runs are merged, so a filled rectangle comes
//! back as exactly four corners.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geom::{signed_area, Vec2};

use super::mask::BinaryMask;

/// Closed polygon in world coordinates; the last point repeats the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub points: Vec<Vec2>,
}

impl Polygon {
    /// Closes an open vertex list.
    pub fn closed(mut points: Vec<Vec2>) -> Self {
        if let (Some(first), Some(last)) = (points.first().copied(), points.last().copied()) {
            if first != last {
                points.push(first);
            }
        }
        Polygon { points }
    }

    pub fn is_closed(&self) -> bool {
        self.points.len() >= 2 && self.points.first() == self.points.last()
    }

    /// Distinct vertices (closing duplicate dropped).
    pub fn vertices(&self) -> &[Vec2] {
        if self.is_closed() {
            &self.points[..self.points.len() - 1]
        } else {
            &self.points
        }
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(self.vertices())
    }
}

/// Labels 8-connected components and returns the pixel list of the largest
/// one (earliest in raster order on ties).
pub fn largest_component(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![u32::MAX; w * h];
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..w * h {
        if !mask.bits[start] || label[start] != u32::MAX {
            continue;
        }
        let mut members = Vec::new();
        label[start] = next;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            members.push((i as usize, j as usize));
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (x, y) = (i + di, j + dj);
                    if mask.get_signed(x, y) {
                        let q = y as usize * w + x as usize;
                        if label[q] == u32::MAX {
                            label[q] = next;
                            queue.push_back(q);
                        }
                    }
                }
            }
        }
        next += 1;
        if members.len() > best.len() {
            best = members;
        }
    }
    best
}

/// Traces the outer boundary of the largest connected component.
pub fn extract_contour(mask: &BinaryMask) -> Result<Polygon> {
    let component = largest_component(mask);
    let Some(&start) = component.iter().min_by_key(|(i, j)| (*j, *i)) else {
        return Err(Error::Perception("mask is empty".into()));
    };
    let mut member = vec![false; mask.bits.len()];
    let w = mask.width();
    for (i, j) in &component {
        member[j * w + i] = true;
    }
    let inside = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as usize) < mask.height()
            && member[y as usize * w + x as usize]
    };

    // headings: east, north, west, south
    const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    // pixel ahead-left / ahead-right of vertex (x, y) for each heading
    let ahead = |x: i64, y: i64, d: usize| -> ((i64, i64), (i64, i64)) {
        match d {
            0 => ((x, y), (x, y - 1)),
            1 => ((x - 1, y), (x, y)),
            2 => ((x - 1, y - 1), (x - 1, y)),
            _ => ((x, y - 1), (x - 1, y - 1)),
        }
    };

    // the lowest-then-leftmost pixel's bottom edge runs east with the region
    // on its left
    let start_v = (start.0 as i64, start.1 as i64);
    let start_d = 0usize;
    let mut v = start_v;
    let mut d = start_d;
    let mut corners: Vec<(i64, i64)> = Vec::new();
    let max_steps = 4 * (mask.bits.len() + 1);
    for step in 0..max_steps {
        let (left, right) = ahead(v.0, v.1, d);
        let nd = if inside(right.0, right.1) {
            (d + 3) % 4
        } else if inside(left.0, left.1) {
            d
        } else {
            (d + 1) % 4
        };
        if nd != d {
            corners.push(v);
        }
        d = nd;
        if step > 0 && v == start_v && d == start_d {
            break;
        }
        v = (v.0 + DIRS[d].0, v.1 + DIRS[d].1);
    }
    // the trace closes on the start vertex; list it first
    corners.rotate_right(1);
    let s = mask.frame.scale;
    let o = mask.frame.origin;
    let points: Vec<Vec2> = corners
        .iter()
        .map(|&(x, y)| o + Vec2::new(x as f64, y as f64) * s)
        .collect();
    Ok(Polygon::closed(points))
}
