//! Reference implementations and builders shared by the integration tests.
//! The references are written from the definitions, not from the library
//! code, and trade speed for obviousness.

#![allow(dead_code, clippy::needless_range_loop)]

use gog_core::cloth::ClothState;
use gog_core::geom::{Line2, Vec2, Vec3};
use gog_core::gripper::{Finger, GripperState};
use gog_core::metrics::GrayImage;
use gog_core::percept::{BinaryMask, MaskFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_frame(w: usize, h: usize) -> MaskFrame {
    MaskFrame::new(w, h, 1.0, Vec2::zeros()).unwrap()
}

/// Intersection and union by visiting every pixel of the two grids.
pub fn iou_by_counting(a: &BinaryMask, b: &BinaryMask) -> f64 {
    assert_eq!(a.frame, b.frame);
    let mut inter = 0u64;
    let mut union = 0u64;
    for j in 0..a.height() {
        for i in 0..a.width() {
            let (x, y) = (a.get(i, j), b.get(i, j));
            if x && y {
                inter += 1;
            }
            if x || y {
                union += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Blobs of random rectangles and discs, so masks have structure rather
/// than salt-and-pepper noise.
pub fn random_blob_mask(r: &mut ChaCha8Rng, frame: MaskFrame) -> BinaryMask {
    let (w, h) = (frame.width_px as f64, frame.height_px as f64);
    let shapes: Vec<(u8, f64, f64, f64, f64)> = (0..r.random_range(1..5))
        .map(|_| {
            (
                r.random_range(0..2),
                r.random_range(0.0..w),
                r.random_range(0.0..h),
                r.random_range(2.0..w / 2.0),
                r.random_range(2.0..h / 2.0),
            )
        })
        .collect();
    BinaryMask::from_fn(frame, |i, j| {
        let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
        shapes.iter().any(|&(kind, cx, cy, a, b)| match kind {
            0 => (x - cx).abs() <= a && (y - cy).abs() <= b,
            _ => ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0,
        })
    })
}

/// Smooth blobs plus a little noise: the gradients are varied enough to
/// exercise every suppression direction and both thresholds.
pub fn random_blob_image(r: &mut ChaCha8Rng, frame: MaskFrame) -> GrayImage {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..r.random_range(2..6))
        .map(|_| {
            (
                r.random_range(0.0..frame.width_px as f64),
                r.random_range(0.0..frame.height_px as f64),
                r.random_range(2.0..8.0),
                r.random_range(-0.8..0.8),
            )
        })
        .collect();
    let noise: Vec<f64> = (0..frame.len())
        .map(|_| r.random_range(-0.05..0.05))
        .collect();
    let w = frame.width_px;
    GrayImage::from_fn(frame, |i, j| {
        let (x, y) = (i as f64, j as f64);
        let v = 0.5
            + blobs
                .iter()
                .map(|&(cx, cy, s, a)| {
                    a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
            + noise[j * w + i];
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Canny written straight from its definition: 5×5 Gaussian on an
/// edge-replicated copy, Sobel on another replicated copy, suppression with
/// the direction picked by slope comparisons, then hysteresis by repeated
/// sweeps until nothing changes.
pub fn canny_reference(img: &GrayImage, low: f64, high: f64, sigma: f64) -> Vec<bool> {
    let (w, h) = (img.width(), img.height());
    let pad = |src: &dyn Fn(usize, usize) -> f64, p: usize| -> Vec<Vec<f64>> {
        (0..h + 2 * p)
            .map(|jj| {
                (0..w + 2 * p)
                    .map(|ii| {
                        let i = (ii as i64 - p as i64).clamp(0, w as i64 - 1) as usize;
                        let j = (jj as i64 - p as i64).clamp(0, h as i64 - 1) as usize;
                        src(i, j)
                    })
                    .collect()
            })
            .collect()
    };

    let mut kernel = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for dy in 0..5 {
        for dx in 0..5 {
            let (x, y) = (dx as f64 - 2.0, dy as f64 - 2.0);
            kernel[dy][dx] = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            total += kernel[dy][dx];
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let padded = pad(&|i, j| img.get(i, j), 2);
    let mut smooth = vec![vec![0.0; w]; h];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for dy in 0..5 {
                for dx in 0..5 {
                    acc += kernel[dy][dx] * padded[j + dy][i + dx];
                }
            }
            smooth[j][i] = acc;
        }
    }

    let s = pad(&|i, j| smooth[j][i], 1);
    let mut gx = vec![vec![0.0; w]; h];
    let mut gy = vec![vec![0.0; w]; h];
    let mut mag = vec![vec![0.0; w]; h];
    for j in 0..h {
        for i in 0..w {
            // s[j + 1][i + 1] is pixel (i, j)
            let (r0, r1, r2) = (&s[j], &s[j + 1], &s[j + 2]);
            gx[j][i] = (r0[i + 2] + 2.0 * r1[i + 2] + r2[i + 2]) - (r0[i] + 2.0 * r1[i] + r2[i]);
            gy[j][i] =
                (r2[i] + 2.0 * r2[i + 1] + r2[i + 2]) - (r0[i] + 2.0 * r0[i + 1] + r0[i + 2]);
            mag[j][i] = gx[j][i].hypot(gy[j][i]);
        }
    }

    let tan_lo = (22.5f64).to_radians().tan();
    let tan_hi = (67.5f64).to_radians().tan();
    let m = |i: i64, j: i64| -> f64 {
        if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
            0.0
        } else {
            mag[j as usize][i as usize]
        }
    };
    let mut thin = vec![vec![0.0; w]; h];
    for j in 0..h {
        for i in 0..w {
            let (x, y) = (gx[j][i], gy[j][i]);
            // fold the gradient into the upper half plane
            let (x, y) = if y < 0.0 || (y == 0.0 && x < 0.0) {
                (-x, -y)
            } else {
                (x, y)
            };
            let step: (i64, i64) = if y < tan_lo * x.abs() {
                (1, 0)
            } else if y >= tan_hi * x.abs() {
                (0, 1)
            } else if x > 0.0 {
                (1, 1)
            } else {
                (-1, 1)
            };
            let (ii, jj) = (i as i64, j as i64);
            let here = mag[j][i];
            if here > m(ii - step.0, jj - step.1) && here >= m(ii + step.0, jj + step.1) {
                thin[j][i] = here;
            }
        }
    }

    let mut edge = vec![vec![false; w]; h];
    for j in 0..h {
        for i in 0..w {
            edge[j][i] = thin[j][i] > 0.0 && thin[j][i] >= high;
        }
    }
    loop {
        let mut changed = false;
        for j in 0..h {
            for i in 0..w {
                if edge[j][i] || !(thin[j][i] > 0.0 && thin[j][i] >= low) {
                    continue;
                }
                let touches = (-1i64..=1).any(|dj| {
                    (-1i64..=1).any(|di| {
                        let (x, y) = (i as i64 + di, j as i64 + dj);
                        x >= 0
                            && y >= 0
                            && x < w as i64
                            && y < h as i64
                            && edge[y as usize][x as usize]
                    })
                });
                if touches {
                    edge[j][i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    edge.into_iter().flatten().collect()
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .abs()
}

/// Sutherland-Hodgman clip of a convex polygon to the half-plane where the
/// line's signed distance is at most zero.
pub fn clip_to_stationary_side(poly: &[Vec2], line: &Line2) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::new();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        let (da, db) = (line.signed_distance(&a), line.signed_distance(&b));
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
    out
}

pub fn rect_corners(center: Vec2, w: f64, h: f64, yaw: f64) -> Vec<Vec2> {
    let (s, c) = yaw.sin_cos();
    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(u, v)| {
            let (x, y) = (u * w, v * h);
            center + Vec2::new(c * x - s * y, s * x + c * y)
        })
        .collect()
}

/// Jaw-frame coordinates computed by hand for a yawed tool with no roll or
/// pitch.
pub fn jaw_local(g: &GripperState, f: Finger, p: &Vec3) -> Vec3 {
    let yaw = g.tool_pose.yaw;
    let (s, c) = yaw.sin_cos();
    let t = g.tool_pose.position;
    let jaw = t + Vec3::new(c, s, 0.0) * (f.side() * 0.5 * g.width);
    let d = p - jaw;
    Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
}

/// Per-cell minimum over the capture box, by enumeration, minus anything
/// with a lower candidate within half a cell.
pub fn lowest_layer_oracle(g: &GripperState, f: Finger, cloth: &ClothState) -> Vec<usize> {
    let [bx, by, bz] = g.params.capture_box;
    let r = cloth.material.patch_radius;
    let cell = g.params.capture_cell;
    let cands: Vec<(usize, Vec3)> = (0..cloth.len())
        .map(|k| (k, jaw_local(g, f, &cloth.positions[k])))
        .filter(|(_, l)| {
            l.x.abs() <= 0.5 * bx + r && l.y.abs() <= 0.5 * by + r && l.z >= -1e-9 && l.z <= bz
        })
        .collect();
    let key = |l: &Vec3| ((l.x / cell).round() as i64, (l.y / cell).round() as i64);
    let mut out: Vec<usize> = cands
        .iter()
        .filter(|(_, l)| {
            let floor = cands
                .iter()
                .filter(|(_, q)| key(q) == key(l))
                .map(|(_, q)| q.z)
                .fold(f64::INFINITY, f64::min);
            let stacked = cands.iter().any(|(_, q)| {
                q.z < l.z - g.params.layer_epsilon && (q.x - l.x).hypot(q.y - l.y) < 0.5 * cell
            });
            l.z <= floor + g.params.layer_epsilon && !stacked
        })
        .map(|(k, _)| *k)
        .collect();
    if out.len() < g.params.min_grasp_particles {
        out.clear();
    }
    out.sort_unstable();
    out
}
