//! Canny edge detection: 5×5 Gaussian blur, Sobel gradients, non-maximum
//! suppression along the quantized gradient direction, and double-threshold
//! hysteresis over 8-connected pixels. Borders replicate the edge pixel.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percept::BinaryMask;

use super::image::GrayImage;
use super::BOUNDARY_MARGIN;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
    /// Erosion of the cloth mask before counting wrinkle pixels, pixels.
    pub boundary_margin: usize,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            low: 0.1,
            high: 0.2,
            sigma: 1.4,
            boundary_margin: BOUNDARY_MARGIN,
        }
    }
}

/// Normalized 5×5 Gaussian kernel, `k[dy + 2][dx + 2]`.
pub fn gaussian_kernel(sigma: f64) -> [[f64; 5]; 5] {
    let mut k = [[0.0; 5]; 5];
    let mut sum = 0.0;
    for (dy, row) in k.iter_mut().enumerate() {
        for (dx, w) in row.iter_mut().enumerate() {
            let (x, y) = (dx as f64 - 2.0, dy as f64 - 2.0);
            *w = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            sum += *w;
        }
    }
    for row in k.iter_mut() {
        for w in row.iter_mut() {
            *w /= sum;
        }
    }
    k
}

pub fn blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (dy, row) in k.iter().enumerate() {
                for (dx, kw) in row.iter().enumerate() {
                    acc += kw * img.get_clamped(i as i64 + dx as i64 - 2, j as i64 + dy as i64 - 2);
                }
            }
            out[j * w + i] = acc;
        }
    }
    out
}

/// Sobel gradients `(gx, gy)` of a row-major buffer.
pub fn sobel(buf: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: i64, j: i64| {
        let i = i.clamp(0, w as i64 - 1) as usize;
        let j = j.clamp(0, h as i64 - 1) as usize;
        buf[j * w + i]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for j in 0..h as i64 {
        for i in 0..w as i64 {
            let k = j as usize * w + i as usize;
            gx[k] = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
            gy[k] = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
        }
    }
    (gx, gy)
}

/// Neighbor offset along the gradient, one of four quantized directions.
fn direction(gx: f64, gy: f64) -> (i64, i64) {
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        (1, 0)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Edge map of `img`. Thresholds apply to the raw Sobel magnitude.
pub fn canny(img: &GrayImage, low: f64, high: f64) -> Result<BinaryMask> {
    canny_with(
        img,
        &CannyParams {
            low,
            high,
            ..CannyParams::default()
        },
    )
}

pub fn canny_with(img: &GrayImage, params: &CannyParams) -> Result<BinaryMask> {
    let (low, high) = (params.low, params.high);
    if !(low >= 0.0 && low <= high) {
        return Err(Error::validation(
            "canny thresholds",
            format!("need 0 <= low <= high, got {low}, {high}"),
        ));
    }
    let (w, h) = (img.width(), img.height());
    let smooth = blur(img, params.sigma);
    let (gx, gy) = sobel(&smooth, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let m_at = |i: i64, j: i64| {
        if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
            0.0
        } else {
            mag[j as usize * w + i as usize]
        }
    };

    let mut thin = vec![0.0; w * h];
    for j in 0..h as i64 {
        for i in 0..w as i64 {
            let k = j as usize * w + i as usize;
            let m = mag[k];
            let (di, dj) = direction(gx[k], gy[k]);
            let before = m_at(i - di, j - dj);
            let after = m_at(i + di, j + dj);
            // a plateau keeps only its first pixel
            if m > before && m >= after {
                thin[k] = m;
            }
        }
    }

    let mut edges = BinaryMask::empty(img.frame);
    let mut queue = VecDeque::new();
    for (k, &t) in thin.iter().enumerate() {
        if t >= high && t > 0.0 {
            edges.bits[k] = true;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (x, y) = (i + di, j + dj);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let q = y as usize * w + x as usize;
                if !edges.bits[q] && thin[q] >= low && thin[q] > 0.0 {
                    edges.bits[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::percept::MaskFrame;

    fn frame(n: usize) -> MaskFrame {
        MaskFrame::new(n, n, 1.0, Vec2::zeros()).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = GrayImage::new(frame(16), 0.7);
        assert!(canny(&img, 0.1, 0.2).unwrap().is_blank());
    }

    #[test]
    fn step_edge_is_one_pixel_wide() {
        let img = GrayImage::from_fn(frame(24), |i, _| if i < 12 { 0.1 } else { 0.9 }).unwrap();
        let e = canny(&img, 0.1, 0.2).unwrap();
        for j in 0..24 {
            let row: Vec<usize> = (0..24).filter(|&i| e.get(i, j)).collect();
            assert_eq!(row.len(), 1, "row {j}: {row:?}");
            assert!(row[0] == 11 || row[0] == 12);
        }
    }

    #[test]
    fn kernel_sums_to_one() {
        let s: f64 = gaussian_kernel(1.4).iter().flatten().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_thresholds() {
        let img = GrayImage::new(frame(4), 0.0);
        assert!(canny(&img, 0.3, 0.2).is_err());
        assert!(canny(&img, -0.1, 0.2).is_err());
    }
}
