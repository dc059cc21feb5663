use anyhow::{Context as _, Result};
use instyle_core::rng::substream;
use instyle_core::{Pose, Provenance};
use instyle_pairgen::synth::sample_ds_camera;
use instyle_pairgen::{generate_dr_scene, generate_ds_scene, write_synthetic_dataset, SyntheticSample};
use instyle_render::{Camera, Rasterizer};

use crate::context::Context;

/// Writes the domain-randomized and domain-specific datasets.
pub fn gen_synth(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let library = ctx.library()?;
    let intrinsics = cfg.camera.intrinsics()?;
    let classes = &cfg.objects.classes;

    let dr: Vec<SyntheticSample> = (0..cfg.synth.dr_images)
        .map(|i| {
            let class = &classes[i % classes.len()];
            let mut rng = substream(ctx.seed(), &["dr", &i.to_string()]);
            let scene = generate_dr_scene(&library, class, &intrinsics, &cfg.synth.dr, &mut rng)?;
            Ok(SyntheticSample {
                scene,
                camera: Camera::new(Pose::identity(), intrinsics),
            })
        })
        .collect::<Result<_>>()?;
    write_dataset(ctx, "dr", Provenance::SyntheticDr, &dr)?;

    let ds: Vec<SyntheticSample> = (0..cfg.synth.ds_images)
        .map(|i| {
            let class = &classes[i % classes.len()];
            let mut rng = substream(ctx.seed(), &["ds", &i.to_string()]);
            let scene = generate_ds_scene(&library, class, &cfg.table, &cfg.synth.ds, &mut rng)?;
            let pose = sample_ds_camera(&cfg.table, &cfg.synth.ds, &mut rng);
            Ok(SyntheticSample {
                scene,
                camera: Camera::new(pose, intrinsics),
            })
        })
        .collect::<Result<_>>()?;
    write_dataset(ctx, "ds", Provenance::SyntheticDs, &ds)?;
    Ok(())
}

fn write_dataset(ctx: &Context, kind: &str, provenance: Provenance, samples: &[SyntheticSample]) -> Result<()> {
    let dir = ctx.synth_dir(kind);
    let mut manifest = write_synthetic_dataset(kind, provenance, samples, &Rasterizer, &dir, ctx.workers)
        .with_context(|| format!("rendering the {kind} dataset"))?;
    manifest.config_hash = Some(ctx.hash.clone());
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    let labeled: usize = manifest.views.iter().map(|v| v.instances.len()).sum();
    println!(
        "gen-synth: {} {} images, {labeled} labeled instances -> {}",
        manifest.views.len(),
        provenance,
        path.display()
    );
    Ok(())
}
