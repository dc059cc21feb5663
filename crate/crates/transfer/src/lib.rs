//! Instance-level inference on full images.
//!
//! Each labeled instance is cut out with a square box around its mask,
//! resized to the network resolution, translated by its class network,
//! resized back and pasted under its mask. Pixels outside every instance
//! mask are never written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use instyle_core::io::{load_rgb, save_rgb};
use instyle_core::par::par_map;
use instyle_core::{bbox_from_mask, square_bbox, BBox2D, CoreError, FloatImage, InstanceMask, Provenance, SceneManifest};
use instyle_stylekit::{Tensor, TransNet};

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error("instances {a} and {b} overlap in {pixels} pixels; masks must be disjoint")]
    OverlappingMasks { a: u32, b: u32, pixels: usize },
    #[error("instance {0} has an empty mask")]
    EmptyMask(u32),
    #[error("mask of instance {id} is {mask_w}x{mask_h} but the image is {img_w}x{img_h}")]
    MaskSize {
        id: u32,
        mask_w: u32,
        mask_h: u32,
        img_w: u32,
        img_h: u32,
    },
    #[error("inference resolution must be even and positive, got {0}")]
    Resolution(usize),
    #[error("{provenance} datasets are not adapted; only synthetic-DS input is accepted")]
    Provenance { provenance: Provenance },
    #[error("view {view_id} instance {instance_id} has no mask label")]
    MissingMask { view_id: u32, instance_id: u32 },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Maps a square crop at inference resolution to a translated crop of the
/// same size.
pub trait ImageTranslator: Send + Sync {
    fn translate(&self, crop: &FloatImage) -> FloatImage;
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl ImageTranslator for IdentityTranslator {
    fn translate(&self, crop: &FloatImage) -> FloatImage {
        crop.clone()
    }
}

impl ImageTranslator for TransNet {
    fn translate(&self, crop: &FloatImage) -> FloatImage {
        TransNet::translate(self, &Tensor::from_images(std::slice::from_ref(crop))).to_image(0)
    }
}

/// Class networks and the inference resolution.
#[derive(Clone)]
pub struct TransferPlan {
    pub translators: BTreeMap<String, Arc<dyn ImageTranslator>>,
    pub resolution: usize,
}

impl TransferPlan {
    pub fn new(resolution: usize) -> Result<Self, TransferError> {
        if resolution == 0 || resolution % 2 != 0 {
            return Err(TransferError::Resolution(resolution));
        }
        Ok(Self {
            translators: BTreeMap::new(),
            resolution,
        })
    }

    pub fn with(mut self, class_name: impl Into<String>, translator: Arc<dyn ImageTranslator>) -> Self {
        self.translators.insert(class_name.into(), translator);
        self
    }
}

impl std::fmt::Debug for TransferPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransferPlan")
            .field("classes", &self.translators.keys().collect::<Vec<_>>())
            .field("resolution", &self.resolution)
            .finish()
    }
}

/// An instance to translate. The mask's class selects the network.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRecord {
    pub mask: InstanceMask,
}

/// Translated pixels for the square box around one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslatedLayer {
    pub bbox: BBox2D,
    pub pixels: RgbImage,
}

fn check_mask(image: &RgbImage, mask: &InstanceMask) -> Result<(), TransferError> {
    if (mask.width, mask.height) != image.dimensions() {
        return Err(TransferError::MaskSize {
            id: mask.instance_id,
            mask_w: mask.width,
            mask_h: mask.height,
            img_w: image.width(),
            img_h: image.height(),
        });
    }
    Ok(())
}

/// Crops the square box around `mask`, runs `translator` at
/// `resolution x resolution` and resizes the result back to the box.
pub fn translate_instance(
    image: &RgbImage,
    mask: &InstanceMask,
    translator: &dyn ImageTranslator,
    resolution: usize,
) -> Result<TranslatedLayer, TransferError> {
    check_mask(image, mask)?;
    let tight = bbox_from_mask(mask).map_err(|_| TransferError::EmptyMask(mask.instance_id))?;
    let bbox = square_bbox(&tight, image.width(), image.height());
    let crop = FloatImage::from_rgb(image).crop(&bbox);
    let out = translator
        .translate(&crop.resize(resolution, resolution))
        .resize(crop.width, crop.height);
    Ok(TranslatedLayer {
        bbox,
        pixels: out.to_rgb(),
    })
}

/// Copies `layer` pixels into `background` wherever `mask` is set.
pub fn composite_instance(background: &RgbImage, layer: &TranslatedLayer, mask: &InstanceMask) -> RgbImage {
    let mut out = background.clone();
    let b = &layer.bbox;
    for y in b.y_min..=b.y_max {
        for x in b.x_min..=b.x_max {
            if mask.get(x, y) {
                out.put_pixel(x, y, *layer.pixels.get_pixel(x - b.x_min, y - b.y_min));
            }
        }
    }
    out
}

/// Translates every instance whose class has a network and composites the
/// results in input order. Masks must be pairwise disjoint, which makes the
/// result independent of that order.
pub fn transfer_image(
    image: &RgbImage,
    instances: &[InstanceRecord],
    plan: &TransferPlan,
    workers: usize,
) -> Result<RgbImage, TransferError> {
    for inst in instances {
        check_mask(image, &inst.mask)?;
    }
    for (i, a) in instances.iter().enumerate() {
        for b in &instances[i + 1..] {
            let pixels = a.mask.overlap(&b.mask);
            if pixels > 0 {
                return Err(TransferError::OverlappingMasks {
                    a: a.mask.instance_id,
                    b: b.mask.instance_id,
                    pixels,
                });
            }
        }
    }
    let jobs: Vec<&InstanceRecord> = instances
        .iter()
        .filter(|inst| {
            let known = plan.translators.contains_key(&inst.mask.class_name);
            if !known {
                log::debug!("no network for class {}; instance left as is", inst.mask.class_name);
            }
            known
        })
        .collect();
    let layers = par_map(&jobs, workers, |inst| {
        let translator = &plan.translators[&inst.mask.class_name];
        translate_instance(image, &inst.mask, translator.as_ref(), plan.resolution)
    })?;
    let mut out = image.clone();
    for (inst, layer) in jobs.iter().zip(&layers) {
        out = composite_instance(&out, layer, &inst.mask);
    }
    Ok(out)
}

/// Adapts every image of a synthetic-DS scene and writes the images, masks
/// and an `adapted` manifest under `out_dir`. Labels are copied verbatim.
pub fn transfer_dataset(
    manifest: &SceneManifest,
    manifest_dir: &Path,
    plan: &TransferPlan,
    out_dir: &Path,
    workers: usize,
) -> Result<SceneManifest, TransferError> {
    if manifest.provenance != Provenance::SyntheticDs {
        return Err(TransferError::Provenance {
            provenance: manifest.provenance,
        });
    }
    par_map(&manifest.views, workers, |view| {
        let image = load_rgb(&manifest_dir.join(&view.image))?;
        let mut records = Vec::with_capacity(view.instances.len());
        for label in &view.instances {
            let rel = label.mask.as_ref().ok_or(TransferError::MissingMask {
                view_id: view.view_id,
                instance_id: label.instance_id,
            })?;
            let src = manifest_dir.join(rel);
            let mask = InstanceMask::load_png(&src, label.instance_id, &label.class_name)?;
            copy_file(&src, &out_dir.join(rel))?;
            records.push(InstanceRecord { mask });
        }
        let adapted = transfer_image(&image, &records, plan, 1)?;
        save_rgb(&adapted, &out_dir.join(&view.image))?;
        Ok::<_, TransferError>(())
    })?;
    let mut out = manifest.clone();
    out.provenance = Provenance::Adapted;
    out.extra.insert(
        "adapted_classes".into(),
        serde_json::Value::from(plan.translators.keys().cloned().collect::<Vec<_>>()),
    );
    out.extra.insert("inference_resolution".into(), serde_json::Value::from(plan.resolution));
    Ok(out)
}

fn copy_file(src: &Path, dst: &Path) -> Result<(), CoreError> {
    if let Some(parent) = dst.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    std::fs::copy(src, dst).map_err(|e| CoreError::io(PathBuf::from(src), e))?;
    Ok(())
}
