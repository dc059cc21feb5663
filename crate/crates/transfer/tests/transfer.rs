use std::sync::Arc;

use image::{Rgb, RgbImage};
use instyle_core::{FloatImage, InstanceLabel, InstanceMask, Pose, Provenance, SceneManifest, ViewRecord};
use instyle_core::CameraIntrinsics;
use instyle_transfer::{
    composite_instance, transfer_dataset, transfer_image, translate_instance, IdentityTranslator, ImageTranslator,
    InstanceRecord, TransferError, TransferPlan,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

struct Invert;

impl ImageTranslator for Invert {
    fn translate(&self, crop: &FloatImage) -> FloatImage {
        let mut out = crop.clone();
        out.data.iter_mut().for_each(|v| *v = 1.0 - *v);
        out
    }
}

/// Adds a horizontal ramp so misplaced pixels show up.
struct Ramp;

impl ImageTranslator for Ramp {
    fn translate(&self, crop: &FloatImage) -> FloatImage {
        let mut out = crop.clone();
        for c in 0..3 {
            for y in 0..crop.height {
                for x in 0..crop.width {
                    out.set(c, x, y, 0.5 * crop.get(c, x, y) + 0.5 * x as f64 / crop.width as f64);
                }
            }
        }
        out
    }
}

fn noise_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

fn disk_mask(w: u32, h: u32, id: u32, class: &str, cx: f64, cy: f64, r: f64) -> InstanceMask {
    InstanceMask::from_fn(w, h, id, class, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
}

fn union_contains(instances: &[InstanceRecord], x: u32, y: u32) -> bool {
    instances.iter().any(|i| i.mask.get(x, y))
}

#[test]
fn identity_at_crop_resolution_is_bit_exact() {
    let img = noise_image(80, 60, 1);
    // A 32x32 square box around this mask.
    let mask = InstanceMask::from_fn(80, 60, 1, "puck", |x, y| (20..52).contains(&x) && (10..42).contains(&y));
    let layer = translate_instance(&img, &mask, &IdentityTranslator, 32).unwrap();
    assert_eq!(layer.pixels.dimensions(), (32, 32));
    let out = composite_instance(&img, &layer, &mask);
    assert_eq!(out, img);
}

#[test]
fn identity_at_other_resolution_stays_within_one_lsb_on_smooth_input() {
    let img = RgbImage::from_fn(80, 60, |x, y| Rgb([(x * 3) as u8, (y * 4) as u8, 128]));
    let mask = disk_mask(80, 60, 1, "puck", 40.0, 30.0, 12.0);
    let layer = translate_instance(&img, &mask, &IdentityTranslator, 64).unwrap();
    let out = composite_instance(&img, &layer, &mask);
    for (a, b) in out.pixels().zip(img.pixels()) {
        for c in 0..3 {
            assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1);
        }
    }
}

#[test]
fn zero_instances_return_input() {
    let img = noise_image(40, 30, 2);
    let plan = TransferPlan::new(32).unwrap().with("puck", Arc::new(Invert));
    assert_eq!(transfer_image(&img, &[], &plan, 1).unwrap(), img);
}

#[test]
fn overlapping_masks_are_rejected_with_area() {
    let img = noise_image(40, 30, 3);
    let a = InstanceMask::from_fn(40, 30, 1, "puck", |x, y| x < 20 && y < 10);
    let b = InstanceMask::from_fn(40, 30, 2, "puck", |x, y| (15..25).contains(&x) && y < 5);
    let plan = TransferPlan::new(32).unwrap().with("puck", Arc::new(Invert));
    let err = transfer_image(&img, &[InstanceRecord { mask: a }, InstanceRecord { mask: b }], &plan, 1).unwrap_err();
    assert!(matches!(err, TransferError::OverlappingMasks { a: 1, b: 2, pixels: 25 }));
}

#[test]
fn odd_resolution_is_rejected() {
    assert!(TransferPlan::new(31).is_err());
    assert!(TransferPlan::new(0).is_err());
}

#[test]
fn five_instances_match_single_instance_path() {
    let img = noise_image(160, 120, 4);
    let centers = [(25.0, 25.0), (80.0, 25.0), (135.0, 25.0), (50.0, 90.0), (110.0, 90.0)];
    let instances: Vec<InstanceRecord> = centers
        .iter()
        .enumerate()
        .map(|(i, &(cx, cy))| InstanceRecord {
            mask: disk_mask(160, 120, i as u32 + 1, "bottle", cx, cy, 15.0),
        })
        .collect();
    let plan = TransferPlan::new(64).unwrap().with("bottle", Arc::new(Ramp));
    let all = transfer_image(&img, &instances, &plan, 2).unwrap();
    for inst in &instances {
        let single = transfer_image(&img, std::slice::from_ref(inst), &plan, 1).unwrap();
        for (x, y, p) in all.enumerate_pixels() {
            if inst.mask.get(x, y) {
                assert_eq!(p, single.get_pixel(x, y));
            }
        }
    }
}

#[test]
fn classes_use_their_own_networks() {
    let img = RgbImage::from_pixel(60, 40, Rgb([200, 100, 50]));
    let a = disk_mask(60, 40, 1, "can", 15.0, 20.0, 8.0);
    let b = disk_mask(60, 40, 2, "box", 45.0, 20.0, 8.0);
    let plan = TransferPlan::new(32)
        .unwrap()
        .with("can", Arc::new(Invert))
        .with("box", Arc::new(IdentityTranslator));
    let out = transfer_image(&img, &[InstanceRecord { mask: a }, InstanceRecord { mask: b }], &plan, 1).unwrap();
    assert_eq!(out.get_pixel(15, 20), &Rgb([55, 155, 205]));
    assert_eq!(out.get_pixel(45, 20), &Rgb([200, 100, 50]));
}

#[test]
fn unknown_class_is_left_untouched() {
    let img = noise_image(40, 30, 5);
    let plan = TransferPlan::new(32).unwrap().with("puck", Arc::new(Invert));
    let inst = InstanceRecord {
        mask: disk_mask(40, 30, 1, "mug", 20.0, 15.0, 6.0),
    };
    assert_eq!(transfer_image(&img, &[inst], &plan, 1).unwrap(), img);
}

fn random_disjoint_instances(seed: u64, w: u32, h: u32) -> Vec<InstanceRecord> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let mut owner = vec![0u32; (w * h) as usize];
    let mut out = Vec::new();
    for id in 1..=n {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let r = rng.random_range(3.0..15.0);
        let class = if rng.random_bool(0.5) { "can" } else { "box" };
        let mask = InstanceMask::from_fn(w, h, id, class, |x, y| {
            let i = (y * w + x) as usize;
            let hit = owner[i] == 0 && (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
            if hit {
                owner[i] = id;
            }
            hit
        });
        if !mask.is_empty() {
            out.push(InstanceRecord { mask });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outside_masks_is_bit_identical_and_order_free(seed in any::<u64>()) {
        let img = noise_image(64, 48, seed);
        let instances = random_disjoint_instances(seed, 64, 48);
        let plan = TransferPlan::new(32).unwrap().with("can", Arc::new(Invert)).with("box", Arc::new(Ramp));
        let out = transfer_image(&img, &instances, &plan, 1).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            if !union_contains(&instances, x, y) {
                prop_assert_eq!(p, img.get_pixel(x, y));
            }
        }
        let mut reversed = instances.clone();
        reversed.reverse();
        prop_assert_eq!(&transfer_image(&img, &reversed, &plan, 2).unwrap(), &out);
    }
}

fn write_ds_scene(dir: &std::path::Path, provenance: Provenance, views: u32) -> SceneManifest {
    let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
    let mut m = SceneManifest::new("ds", provenance);
    m.classes = vec!["can".into()];
    for v in 0..views {
        let rel = format!("images/{v:05}.png");
        noise_image(64, 48, v as u64).save(dir.join(&rel)).unwrap();
        let mut view = ViewRecord::new("ds", v, rel, Pose::identity(), k);
        for inst in random_disjoint_instances(v as u64 + 50, 64, 48) {
            let mask_rel = format!("masks/{v:05}_{}.png", inst.mask.instance_id);
            inst.mask.save_png(&dir.join(&mask_rel)).unwrap();
            let mut label = InstanceLabel::new(inst.mask.class_name.clone(), inst.mask.instance_id, Pose::identity());
            label.mask = Some(mask_rel);
            label.bbox = Some(instyle_core::bbox_from_mask(&inst.mask).unwrap());
            view.instances.push(label);
        }
        m.views.push(view);
    }
    m
}

#[test]
fn dataset_transfer_keeps_labels_and_tags_provenance() {
    let src = tempfile::tempdir().unwrap();
    let dst = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(src.path().join("images")).unwrap();
    let manifest = write_ds_scene(src.path(), Provenance::SyntheticDs, 6);
    let plan = TransferPlan::new(32).unwrap().with("can", Arc::new(Invert)).with("box", Arc::new(Invert));
    let out = transfer_dataset(&manifest, src.path(), &plan, dst.path(), 2).unwrap();
    assert_eq!(out.provenance, Provenance::Adapted);
    assert_eq!(out.labels_json(), manifest.labels_json());
    out.save(&dst.path().join("manifest.json")).unwrap();
    let (_, warnings) = SceneManifest::load_checked(&dst.path().join("manifest.json")).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    let a = image::open(src.path().join(&manifest.views[0].image)).unwrap().to_rgb8();
    let b = image::open(dst.path().join(&out.views[0].image)).unwrap().to_rgb8();
    assert_ne!(a, b);
}

#[test]
fn domain_randomized_input_is_refused() {
    let src = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(src.path().join("images")).unwrap();
    let manifest = write_ds_scene(src.path(), Provenance::SyntheticDr, 1);
    let plan = TransferPlan::new(32).unwrap().with("can", Arc::new(Invert));
    let err = transfer_dataset(&manifest, src.path(), &plan, src.path(), 1).unwrap_err();
    assert!(matches!(err, TransferError::Provenance { provenance: Provenance::SyntheticDr }));
}
