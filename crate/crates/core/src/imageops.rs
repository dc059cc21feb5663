//! Floating-point image buffers and bilinear resampling.
//!
//! Resampling uses half-pixel centers (`src = (dst + 0.5) * scale - 0.5`)
//! with edge clamping. At equal sizes every weight collapses to 1, so a
//! same-size resize is the identity bit-for-bit.

use image::{Rgb, RgbImage};

use crate::region::BBox2D;

/// Planar (channel-major) image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn new(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(3, width, height);
        for (c, v) in rgb.iter().enumerate() {
            img.plane_mut(c).fill(*v);
        }
        img
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::new(3, w, h);
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                out.data[c * w * h + i] = p.0[c] as f64 / 255.0;
            }
        }
        out
    }

    /// Quantizes to 8 bits with rounding and clamping.
    pub fn to_rgb(&self) -> RgbImage {
        assert_eq!(self.channels, 3);
        let plane = self.width * self.height;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            Rgb([0, 1, 2].map(|c| quantize(self.data[c * plane + i])))
        })
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn crop(&self, bbox: &BBox2D) -> FloatImage {
        self.crop_rect(
            bbox.x_min as usize,
            bbox.y_min as usize,
            bbox.width() as usize,
            bbox.height() as usize,
        )
    }

    pub fn crop_rect(&self, x0: usize, y0: usize, w: usize, h: usize) -> FloatImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside image");
        let mut out = FloatImage::new(self.channels, w, h);
        for c in 0..self.channels {
            for y in 0..h {
                let src = (c * self.height + y0 + y) * self.width + x0;
                let dst = (c * h + y) * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        out
    }

    /// Bilinear resize to `new_w x new_h`.
    pub fn resize(&self, new_w: usize, new_h: usize) -> FloatImage {
        self.resize_window(new_w, new_h, 0, 0, new_w, new_h)
    }

    /// The `win_w x win_h` window at `(x0, y0)` of this image resized to
    /// `new_w x new_h`, computed without materializing the full resize.
    /// Window coordinates past the resized extent replicate its edge.
    pub fn resize_window(
        &self,
        new_w: usize,
        new_h: usize,
        x0: isize,
        y0: isize,
        win_w: usize,
        win_h: usize,
    ) -> FloatImage {
        assert!(new_w > 0 && new_h > 0 && self.width > 0 && self.height > 0);
        let xs: Vec<(usize, usize, f64)> = (0..win_w)
            .map(|i| {
                let x = (x0 + i as isize).clamp(0, new_w as isize - 1) as usize;
                sample_coord(x, self.width, new_w)
            })
            .collect();
        let ys: Vec<(usize, usize, f64)> = (0..win_h)
            .map(|j| {
                let y = (y0 + j as isize).clamp(0, new_h as isize - 1) as usize;
                sample_coord(y, self.height, new_h)
            })
            .collect();
        let mut out = FloatImage::new(self.channels, win_w, win_h);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = &mut out.data[c * win_w * win_h..(c + 1) * win_w * win_h];
            for (j, &(y_lo, y_hi, fy)) in ys.iter().enumerate() {
                let row_lo = &src[y_lo * self.width..(y_lo + 1) * self.width];
                let row_hi = &src[y_hi * self.width..(y_hi + 1) * self.width];
                for (i, &(x_lo, x_hi, fx)) in xs.iter().enumerate() {
                    let top = lerp(row_lo[x_lo], row_lo[x_hi], fx);
                    let bottom = lerp(row_hi[x_lo], row_hi[x_hi], fx);
                    dst[j * win_w + i] = lerp(top, bottom, fy);
                }
            }
        }
        out
    }

    /// Edge-replicates the image up to at least `min_w x min_h`, centering
    /// the original. Returns the padded image and the offset of the original
    /// inside it.
    pub fn pad_edge_to(&self, min_w: usize, min_h: usize) -> (FloatImage, (usize, usize)) {
        let new_w = self.width.max(min_w);
        let new_h = self.height.max(min_h);
        let off_x = (new_w - self.width) / 2;
        let off_y = (new_h - self.height) / 2;
        let mut out = FloatImage::new(self.channels, new_w, new_h);
        for c in 0..self.channels {
            for y in 0..new_h {
                let sy = (y as isize - off_y as isize).clamp(0, self.height as isize - 1) as usize;
                for x in 0..new_w {
                    let sx = (x as isize - off_x as isize).clamp(0, self.width as isize - 1) as usize;
                    out.set(c, x, y, self.get(c, sx, sy));
                }
            }
        }
        (out, (off_x, off_y))
    }

    pub fn flip_horizontal(&self) -> FloatImage {
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, x, y, self.get(c, self.width - 1 - x, y));
                }
            }
        }
        out
    }

    pub fn mean_abs_diff(&self, other: &FloatImage) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        sum / self.data.len().max(1) as f64
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Source neighbors and blend weight for destination index `dst` when
/// resampling `src_len` pixels to `dst_len`.
#[inline]
fn sample_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (s.floor() as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    let frac = if hi == lo { 0.0 } else { s - lo as f64 };
    (lo, hi, frac)
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}
