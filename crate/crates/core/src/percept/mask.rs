use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Pixel grid placed in the world. Pixel (i, j) has its center at
/// `origin + (i + 0.5, j + 0.5) * scale`; column `i` runs along world x and
/// row `j` along world y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskFrame {
    pub width_px: usize,
    pub height_px: usize,
    /// meters per pixel
    pub scale: f64,
    pub origin: Vec2,
}

impl MaskFrame {
    pub fn new(width_px: usize, height_px: usize, scale: f64, origin: Vec2) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::validation(
                "mask frame",
                format!("scale must be positive, got {scale}"),
            ));
        }
        if width_px == 0 || height_px == 0 {
            return Err(Error::validation(
                "mask frame",
                "dimensions must be non-zero",
            ));
        }
        Ok(MaskFrame {
            width_px,
            height_px,
            scale,
            origin,
        })
    }

    /// Frame covering the box `[lo, hi]` padded by `pad` of its extent on
    /// every side.
    pub fn covering(lo: Vec2, hi: Vec2, pad: f64, scale: f64) -> Result<Self> {
        let extent = hi - lo;
        let margin = extent * pad;
        let lo = lo - margin;
        let hi = hi + margin;
        let w = ((hi.x - lo.x) / scale).ceil().max(1.0) as usize;
        let h = ((hi.y - lo.y) / scale).ceil().max(1.0) as usize;
        MaskFrame::new(w, h, scale, lo)
    }

    pub fn len(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.scale
    }

    /// Pixel containing a world point, if inside the frame.
    pub fn pixel_of(&self, p: &Vec2) -> Option<(usize, usize)> {
        let u = (p.x - self.origin.x) / self.scale;
        let v = (p.y - self.origin.y) / self.scale;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        (i < self.width_px && j < self.height_px).then_some((i, j))
    }

    pub fn max_corner(&self) -> Vec2 {
        self.origin + Vec2::new(self.width_px as f64, self.height_px as f64) * self.scale
    }

    /// This frame grown by whole pixels so it also covers `other`. Pixels of
    /// `self` keep their world positions.
    pub fn union(&self, other: &MaskFrame) -> MaskFrame {
        let s = self.scale;
        let lo = other.origin;
        let hi = other.max_corner();
        let grow_lo_x = ((self.origin.x - lo.x) / s).ceil().max(0.0) as usize;
        let grow_lo_y = ((self.origin.y - lo.y) / s).ceil().max(0.0) as usize;
        let self_hi = self.max_corner();
        let grow_hi_x = ((hi.x - self_hi.x) / s).ceil().max(0.0) as usize;
        let grow_hi_y = ((hi.y - self_hi.y) / s).ceil().max(0.0) as usize;
        MaskFrame {
            width_px: self.width_px + grow_lo_x + grow_hi_x,
            height_px: self.height_px + grow_lo_y + grow_hi_y,
            scale: s,
            origin: self.origin - Vec2::new(grow_lo_x as f64, grow_lo_y as f64) * s,
        }
    }
}

/// Row-major occupancy grid over a [`MaskFrame`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub frame: MaskFrame,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(frame: MaskFrame) -> Self {
        BinaryMask {
            bits: vec![false; frame.len()],
            frame,
        }
    }

    pub fn from_fn(frame: MaskFrame, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(frame.len());
        for j in 0..frame.height_px {
            for i in 0..frame.width_px {
                bits.push(f(i, j));
            }
        }
        BinaryMask { frame, bits }
    }

    pub fn width(&self) -> usize {
        self.frame.width_px
    }

    pub fn height(&self) -> usize {
        self.frame.height_px
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.frame.width_px + i]
    }

    /// Out-of-range coordinates read as unoccupied.
    pub fn get_signed(&self, i: i64, j: i64) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.frame.width_px
            && (j as usize) < self.frame.height_px
            && self.get(i as usize, j as usize)
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let w = self.frame.width_px;
        self.bits[j * w + i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Occupied area in m².
    pub fn area(&self) -> f64 {
        self.count() as f64 * self.frame.scale * self.frame.scale
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.frame.width_px;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(k, _)| (k % w, k / w))
    }

    /// Area centroid of the occupied pixels in world coordinates.
    pub fn centroid(&self) -> Option<Vec2> {
        let mut acc = Vec2::zeros();
        let mut n = 0usize;
        for (i, j) in self.occupied() {
            acc += self.frame.pixel_center(i, j);
            n += 1;
        }
        (n > 0).then(|| acc / n as f64)
    }

    /// World-space box spanned by the occupied pixels (outer pixel edges).
    pub fn occupied_bounds(&self) -> Option<(Vec2, Vec2)> {
        let mut lo = (usize::MAX, usize::MAX);
        let mut hi = (0usize, 0usize);
        let mut any = false;
        for (i, j) in self.occupied() {
            any = true;
            lo = (lo.0.min(i), lo.1.min(j));
            hi = (hi.0.max(i), hi.1.max(j));
        }
        any.then(|| {
            let s = self.frame.scale;
            (
                self.frame.origin + Vec2::new(lo.0 as f64, lo.1 as f64) * s,
                self.frame.origin + Vec2::new((hi.0 + 1) as f64, (hi.1 + 1) as f64) * s,
            )
        })
    }

    /// Nearest-neighbor resampling onto another frame; samples outside this
    /// mask read as unoccupied.
    pub fn resample(&self, frame: &MaskFrame) -> BinaryMask {
        BinaryMask::from_fn(*frame, |i, j| {
            let c = frame.pixel_center(i, j);
            self.frame.pixel_of(&c).is_some_and(|(a, b)| self.get(a, b))
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a && b)
    }

    fn zip(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        if self.frame.width_px != other.frame.width_px
            || self.frame.height_px != other.frame.height_px
        {
            return Err(Error::validation("mask pair", "dimensions differ"));
        }
        Ok(BinaryMask {
            frame: self.frame,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Keeps pixels whose whole `(2r+1)²` neighborhood is occupied; pixels
    /// beyond the border count as unoccupied.
    pub fn erode(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let (w, h) = (self.width() as i64, self.height() as i64);
        // separable: horizontal run check then vertical
        let mut horiz = vec![false; self.bits.len()];
        for j in 0..h {
            for i in 0..w {
                horiz[(j * w + i) as usize] = (i - r..=i + r).all(|x| self.get_signed(x, j));
            }
        }
        let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && horiz[(y * w + x) as usize];
        BinaryMask::from_fn(self.frame, |i, j| {
            let (i, j) = (i as i64, j as i64);
            (j - r..=j + r).all(|y| at(i, y))
        })
    }
}
