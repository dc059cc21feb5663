//! A deliberately simple pose provider: exhaustive SSD template matching.
//!
//! Templates are instance crops cut from a labeled synthetic dataset. At
//! query time each template slides over the image; the best-scoring
//! position yields a detection whose translation is the template's depth
//! along the ray through the matched anchor pixel, and whose rotation is the
//! template's. It only works when query and template views share scale and
//! orientation, which is the point: its accuracy depends entirely on how
//! closely the template appearance matches the query appearance.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use instyle_core::io::load_rgb;
use instyle_core::{expand_bbox, CameraIntrinsics, Detection, FloatImage, Pose, SceneManifest, ViewRecord};
use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::PairgenError;
use crate::provider::PoseProvider;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateMatcherConfig {
    #[serde(default = "default_max_templates")]
    pub max_templates_per_class: usize,
    /// Expansion of the labeled box when cutting a template.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Coarse search stride, pixels; the best coarse hit is refined at 1.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_max_templates() -> usize {
    16
}

fn default_margin() -> f64 {
    1.2
}

fn default_stride() -> usize {
    2
}

impl Default for TemplateMatcherConfig {
    fn default() -> Self {
        Self {
            max_templates_per_class: default_max_templates(),
            margin: default_margin(),
            stride: default_stride(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Template {
    pub class_name: String,
    pub patch: FloatImage,
    /// Projection of the object origin relative to the patch's top-left.
    pub anchor: [f64; 2],
    /// Camera-frame depth of the object origin.
    pub depth: f64,
    pub rotation: UnitQuaternion<f64>,
}

#[derive(Clone, Debug)]
pub struct TemplateMatcher {
    pub config: TemplateMatcherConfig,
    pub templates: Vec<Template>,
}

impl TemplateMatcher {
    /// Cuts templates from the labeled views of `manifest` (paths relative to
    /// `base`). Instances whose box touches the image border are skipped;
    /// the remaining candidates are subsampled evenly per class.
    pub fn from_dataset(manifest: &SceneManifest, base: &Path, config: TemplateMatcherConfig) -> Result<Self, PairgenError> {
        if config.max_templates_per_class == 0 || config.stride == 0 || !(config.margin >= 1.0) {
            return Err(PairgenError::InvalidConfig("template matcher: bad configuration".into()));
        }
        let mut candidates: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (vi, view) in manifest.views.iter().enumerate() {
            let k = &view.intrinsics;
            for (li, label) in view.instances.iter().enumerate() {
                let Some(b) = label.bbox else { continue };
                let inside = b.x_min > 0 && b.y_min > 0 && b.x_max + 1 < k.width && b.y_max + 1 < k.height;
                if inside && label.pose.translation().z > 0.0 {
                    candidates.entry(label.class_name.as_str()).or_default().push((vi, li));
                }
            }
        }
        let mut templates = Vec::new();
        let mut images: BTreeMap<usize, FloatImage> = BTreeMap::new();
        for (class_name, list) in candidates {
            let n = list.len().min(config.max_templates_per_class);
            for j in 0..n {
                let (vi, li) = list[j * list.len() / n];
                let view = &manifest.views[vi];
                if let std::collections::btree_map::Entry::Vacant(e) = images.entry(vi) {
                    e.insert(FloatImage::from_rgb(&load_rgb(&base.join(&view.image))?));
                }
                let image = &images[&vi];
                let label = &view.instances[li];
                let k = &view.intrinsics;
                let region = expand_bbox(&label.bbox.expect("filtered above"), config.margin, k.width, k.height);
                let center = k.project(label.pose.translation());
                templates.push(Template {
                    class_name: class_name.to_string(),
                    patch: image.crop(&region),
                    anchor: [center.x - region.x_min as f64, center.y - region.y_min as f64],
                    depth: label.pose.translation().z,
                    rotation: *label.pose.rotation(),
                });
            }
        }
        Ok(Self { config, templates })
    }

    /// Best match per class in `image`.
    pub fn match_image(&self, image: &FloatImage, intrinsics: &CameraIntrinsics) -> Vec<Detection> {
        let mut best: BTreeMap<&str, (f64, &Template, usize, usize)> = BTreeMap::new();
        for t in &self.templates {
            let Some((mse, x, y)) = self.search(image, &t.patch) else { continue };
            let slot = best.entry(t.class_name.as_str()).or_insert((f64::INFINITY, t, 0, 0));
            if mse < slot.0 {
                *slot = (mse, t, x, y);
            }
        }
        best.into_iter()
            .filter(|(_, (mse, ..))| mse.is_finite())
            .map(|(class, (mse, t, x, y))| {
                let u = x as f64 + t.anchor[0];
                let v = y as f64 + t.anchor[1];
                let translation = intrinsics.ray(u, v) * t.depth;
                Detection::new(class, 1, Pose::new(t.rotation, translation), 1.0 / (1.0 + 100.0 * mse))
            })
            .collect()
    }

    /// Lowest mean squared error position of `patch` in `image`.
    fn search(&self, image: &FloatImage, patch: &FloatImage) -> Option<(f64, usize, usize)> {
        if patch.width > image.width || patch.height > image.height {
            return None;
        }
        let (mx, my) = (image.width - patch.width, image.height - patch.height);
        let s = self.config.stride;
        let mut best = (f64::INFINITY, 0, 0);
        for y in (0..=my).step_by(s) {
            for x in (0..=mx).step_by(s) {
                let e = ssd(image, patch, x, y, best.0);
                if e < best.0 {
                    best = (e, x, y);
                }
            }
        }
        let (_, cx, cy) = best;
        for y in cy.saturating_sub(s - 1)..=(cy + s - 1).min(my) {
            for x in cx.saturating_sub(s - 1)..=(cx + s - 1).min(mx) {
                let e = ssd(image, patch, x, y, best.0);
                if e < best.0 {
                    best = (e, x, y);
                }
            }
        }
        let n = (patch.width * patch.height * patch.channels) as f64;
        Some((best.0 / n, best.1, best.2))
    }
}

/// Sum of squared differences, abandoned once it exceeds `bound`.
fn ssd(image: &FloatImage, patch: &FloatImage, x0: usize, y0: usize, bound: f64) -> f64 {
    let mut sum = 0.0;
    for c in 0..patch.channels {
        let src = image.plane(c);
        let tpl = patch.plane(c);
        for ty in 0..patch.height {
            let row = &src[(y0 + ty) * image.width + x0..][..patch.width];
            let trow = &tpl[ty * patch.width..][..patch.width];
            sum += row.iter().zip(trow).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        if sum >= bound {
            return sum;
        }
    }
    sum
}

impl PoseProvider for TemplateMatcher {
    fn estimate(&self, view: &ViewRecord, image: Option<&RgbImage>) -> Result<Vec<Detection>, PairgenError> {
        let image = image.ok_or_else(|| PairgenError::View {
            view_id: view.view_id,
            reason: "template matching needs the image".into(),
        })?;
        Ok(self.match_image(&FloatImage::from_rgb(image), &view.intrinsics))
    }
}
