//! Boxes and binary instance masks.
//!
//! Boxes are inclusive on both ends: `(x_min, y_min, x_max, y_max)` with
//! `width = x_max - x_min + 1`.

use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox2D {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox2D {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, other: &BBox2D) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x_max < width && self.y_max < height
    }
}

/// Places a span of `len` pixels centered on `center` (a pixel coordinate
/// that may fall on a half pixel); returns its start, possibly negative.
fn centered_start(center_twice: i64, len: i64) -> i64 {
    // start = floor(center - (len - 1) / 2), computed in half-pixel units
    (center_twice - (len - 1)).div_euclid(2)
}

/// Scales `bbox` by `factor` about its center, rounds the side lengths to
/// whole pixels, then clamps to `width x height`.
pub fn expand_bbox(bbox: &BBox2D, factor: f64, width: u32, height: u32) -> BBox2D {
    assert!(factor >= 1.0, "expansion factor must be >= 1, got {factor}");
    let axis = |lo: u32, hi: u32, bound: u32| -> (u32, u32) {
        let len = (hi - lo + 1) as f64;
        let new_len = (len * factor).round() as i64;
        let start = centered_start(lo as i64 + hi as i64, new_len);
        let end = start + new_len - 1;
        (
            start.clamp(0, bound as i64 - 1) as u32,
            end.clamp(0, bound as i64 - 1) as u32,
        )
    };
    let (x_min, x_max) = axis(bbox.x_min, bbox.x_max, width);
    let (y_min, y_max) = axis(bbox.y_min, bbox.y_max, height);
    BBox2D::new(x_min, y_min, x_max, y_max)
}

/// Smallest square with side `max(width, height)` centered on `bbox`,
/// shifted to fit inside the image. An axis shorter than the side is
/// covered fully instead (the square is truncated on that axis).
pub fn square_bbox(bbox: &BBox2D, width: u32, height: u32) -> BBox2D {
    let side = bbox.width().max(bbox.height()) as i64;
    let axis = |lo: u32, hi: u32, bound: u32| -> (u32, u32) {
        let bound = bound as i64;
        if side >= bound {
            return (0, (bound - 1) as u32);
        }
        let start = centered_start(lo as i64 + hi as i64, side).clamp(0, bound - side);
        (start as u32, (start + side - 1) as u32)
    };
    let (x_min, x_max) = axis(bbox.x_min, bbox.x_max, width);
    let (y_min, y_max) = axis(bbox.y_min, bbox.y_max, height);
    BBox2D::new(x_min, y_min, x_max, y_max)
}

/// Binary per-instance raster with the resolution of its parent image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub instance_id: u32,
    pub class_name: String,
    data: Vec<bool>,
}

impl InstanceMask {
    pub fn empty(width: u32, height: u32, instance_id: u32, class_name: impl Into<String>) -> Self {
        Self {
            width,
            height,
            instance_id,
            class_name: class_name.into(),
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        instance_id: u32,
        class_name: impl Into<String>,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            instance_id,
            class_name: class_name.into(),
            data,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Number of pixels set in both masks.
    pub fn overlap(&self, other: &InstanceMask) -> usize {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn iou(&self, other: &InstanceMask) -> f64 {
        let inter = self.overlap(other);
        let union = self.count() + other.count() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// 8-bit raster, 0 = background, 255 = instance.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any nonzero pixel is treated as set.
    pub fn from_gray(gray: &GrayImage, instance_id: u32, class_name: impl Into<String>) -> Self {
        Self {
            width: gray.width(),
            height: gray.height(),
            instance_id,
            class_name: class_name.into(),
            data: gray.pixels().map(|p| p.0[0] != 0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), CoreError> {
        crate::io::save_gray(&self.to_gray(), path)
    }

    pub fn load_png(path: &Path, instance_id: u32, class_name: &str) -> Result<Self, CoreError> {
        let gray = crate::io::load_gray(path)?;
        Ok(Self::from_gray(&gray, instance_id, class_name))
    }
}

/// Tightest box around the set pixels of `mask`.
pub fn bbox_from_mask(mask: &InstanceMask) -> Result<BBox2D, CoreError> {
    let mut x_min = u32::MAX;
    let mut y_min = u32::MAX;
    let mut x_max = 0;
    let mut y_max = 0;
    let mut any = false;
    for y in 0..mask.height {
        let row = &mask.data[(y * mask.width) as usize..((y + 1) * mask.width) as usize];
        let first = row.iter().position(|&b| b);
        if let Some(first) = first {
            let last = row.iter().rposition(|&b| b).unwrap();
            any = true;
            x_min = x_min.min(first as u32);
            x_max = x_max.max(last as u32);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if any {
        Ok(BBox2D::new(x_min, y_min, x_max, y_max))
    } else {
        Err(CoreError::EmptyMask)
    }
}
