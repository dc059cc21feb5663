//! Crop, scale and patch sampling for training batches.

use std::path::Path;

use instyle_core::{bbox_from_mask, expand_bbox, BBox2D, FloatImage, InstanceMask, PairSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::StylekitError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSpec {
    pub crop_factor: f64,
    /// Inclusive range for the longest side after scaling.
    pub scale_min: u32,
    pub scale_max: u32,
    pub patch_size: u32,
    /// Must stay `false`; present so configs can state it explicitly.
    pub hflip: bool,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            crop_factor: 1.2,
            scale_min: 170,
            scale_max: 512,
            patch_size: 64,
            hflip: false,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<(), StylekitError> {
        let bad = |m: String| Err(StylekitError::InvalidConfig(m));
        if !(self.crop_factor >= 1.0) {
            return bad(format!("crop_factor must be >= 1, got {}", self.crop_factor));
        }
        if self.scale_min == 0 || self.scale_min > self.scale_max {
            return bad(format!("empty scale range [{}, {}]", self.scale_min, self.scale_max));
        }
        if self.patch_size == 0 || self.patch_size % 2 != 0 {
            return bad(format!("patch_size must be even and positive, got {}", self.patch_size));
        }
        if self.patch_size > self.scale_max {
            return bad(format!(
                "patch_size {} exceeds the largest scale {}",
                self.patch_size, self.scale_max
            ));
        }
        if self.hflip {
            return bad("horizontal flipping is not supported".into());
        }
        Ok(())
    }
}

/// Crops `image` to the mask's box expanded by `factor`. Returns the crop
/// and the box so the same region can be cut from the paired image.
pub fn crop_instance_region(
    image: &FloatImage,
    mask: &InstanceMask,
    factor: f64,
) -> Result<(FloatImage, BBox2D), StylekitError> {
    if (mask.width as usize, mask.height as usize) != (image.width, image.height) {
        return Err(StylekitError::Shape(format!(
            "mask {}x{} vs image {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    let tight = bbox_from_mask(mask)
        .map_err(|_| StylekitError::EmptyMask(format!("{} #{}", mask.class_name, mask.instance_id)))?;
    let bbox = expand_bbox(&tight, factor, mask.width, mask.height);
    Ok((image.crop(&bbox), bbox))
}

/// Size after scaling the longest side to `s`, keeping the aspect ratio.
pub fn scaled_size(width: usize, height: usize, s: u32) -> (usize, usize) {
    let s = s as usize;
    if width >= height {
        (s, ((height as f64 * s as f64 / width as f64).round() as usize).max(1))
    } else {
        (((width as f64 * s as f64 / height as f64).round() as usize).max(1), s)
    }
}

/// Rescales so the longest side is uniform in `[scale_min, scale_max]`.
pub fn random_scale(crop: &FloatImage, rng: &mut impl Rng, spec: &PatchSpec) -> (FloatImage, u32) {
    let s = rng.random_range(spec.scale_min..=spec.scale_max);
    let (w, h) = scaled_size(crop.width, crop.height, s);
    (crop.resize(w, h), s)
}

/// Pads short sides to the patch size by edge replication, then cuts a
/// patch at a uniform position. Returns the patch and its top-left corner
/// in padded coordinates.
pub fn sample_patch(scaled: &FloatImage, rng: &mut impl Rng, spec: &PatchSpec) -> (FloatImage, (usize, usize)) {
    let p = spec.patch_size as usize;
    let (padded, _) = scaled.pad_edge_to(p, p);
    let x = rng.random_range(0..=padded.width - p);
    let y = rng.random_range(0..=padded.height - p);
    (padded.crop_rect(x, y, p, p), (x, y))
}

/// Every decision made while drawing one patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchProvenance {
    pub scale: u32,
    pub scaled_width: usize,
    pub scaled_height: usize,
    /// Offset of the scaled image inside its padded canvas.
    pub pad_x: usize,
    pub pad_y: usize,
    /// Top-left of the patch in padded coordinates.
    pub x: usize,
    pub y: usize,
    pub flipped: bool,
}

/// [`random_scale`] followed by [`sample_patch`], computing only the patch
/// window. Consumes the RNG identically to the two-step path.
pub fn draw_patch(crop: &FloatImage, rng: &mut impl Rng, spec: &PatchSpec) -> (FloatImage, PatchProvenance) {
    let p = spec.patch_size as usize;
    let s = rng.random_range(spec.scale_min..=spec.scale_max);
    let (sw, sh) = scaled_size(crop.width, crop.height, s);
    let (pw, ph) = (sw.max(p), sh.max(p));
    let (pad_x, pad_y) = ((pw - sw) / 2, (ph - sh) / 2);
    let x = rng.random_range(0..=pw - p);
    let y = rng.random_range(0..=ph - p);
    let patch = crop.resize_window(sw, sh, x as isize - pad_x as isize, y as isize - pad_y as isize, p, p);
    let prov = PatchProvenance {
        scale: s,
        scaled_width: sw,
        scaled_height: sh,
        pad_x,
        pad_y,
        x,
        y,
        flipped: false,
    };
    (patch, prov)
}

/// Synthetic and real crops of one instance, cut with the same box.
#[derive(Clone, Debug, PartialEq)]
pub struct CropPair {
    pub synthetic: FloatImage,
    pub real: FloatImage,
}

/// Loads every instance of `class_name` from a pair set. Paths inside the
/// set are resolved against `base`.
pub fn load_crop_pairs(
    set: &PairSet,
    base: &Path,
    class_name: &str,
    spec: &PatchSpec,
) -> Result<Vec<CropPair>, StylekitError> {
    let mut out = Vec::new();
    for pair in &set.pairs {
        let instances: Vec<_> = pair.instances.iter().filter(|i| i.class_name == class_name).collect();
        if instances.is_empty() {
            continue;
        }
        let real = FloatImage::from_rgb(&instyle_core::io::load_rgb(&base.join(&pair.real_image))?);
        let synthetic = FloatImage::from_rgb(&instyle_core::io::load_rgb(&base.join(&pair.synthetic_image))?);
        for inst in instances {
            let mask = InstanceMask::load_png(&base.join(&inst.mask), inst.instance_id, class_name)?;
            let (syn_crop, bbox) = crop_instance_region(&synthetic, &mask, spec.crop_factor)?;
            out.push(CropPair {
                synthetic: syn_crop,
                real: real.crop(&bbox),
            });
        }
    }
    Ok(out)
}
