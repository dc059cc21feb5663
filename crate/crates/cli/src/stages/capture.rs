use anyhow::{Context as _, Result};
use instyle_core::rng::{substream, subseed};
use instyle_core::{DatasetIndex, Provenance};
use instyle_pairgen::{capture_scene, gantry_trajectory, generate_ds_scene, DsConfig};
use instyle_render::StyledRenderer;

use crate::context::Context;

pub const SPLITS: [&str; 2] = ["train", "test"];

/// Renderer standing in for the physical camera.
pub fn real_renderer(ctx: &Context) -> StyledRenderer {
    StyledRenderer::new(ctx.config.real_style.clone(), subseed(ctx.seed(), &["real-style"]))
}

/// Simulates gantry captures of random tabletop scenes in real style.
pub fn capture(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let library = ctx.library()?;
    let intrinsics = cfg.camera.intrinsics()?;
    let renderer = real_renderer(ctx);
    let placement = DsConfig {
        max_instances: cfg.capture.max_objects,
        max_yaw: cfg.capture.max_yaw,
        ..cfg.synth.ds.clone()
    };
    let trajectory = gantry_trajectory(
        cfg.table.center,
        cfg.table.height + cfg.capture.height,
        cfg.capture.grid[0],
        cfg.capture.grid[1],
        cfg.capture.spacing,
    );
    for split in SPLITS {
        let count = if split == "train" {
            cfg.capture.train_scenes
        } else {
            cfg.capture.test_scenes
        };
        let dir = ctx.real_dir(split);
        let mut index = DatasetIndex::new(Provenance::Real);
        index.config_hash = Some(ctx.hash.clone());
        for s in 0..count {
            let scene_id = format!("{split}_{s:03}");
            let class = &cfg.objects.classes[s % cfg.objects.classes.len()];
            let mut rng = substream(ctx.seed(), &["capture", split, &s.to_string()]);
            let mut scene = generate_ds_scene(&library, class, &cfg.table, &placement, &mut rng)?;
            scene.background = ctx.environment().background;
            let scene_dir = dir.join(&scene_id);
            let mut manifest = capture_scene(&scene, &trajectory, &intrinsics, &renderer, &scene_id, &scene_dir, ctx.workers)
                .with_context(|| format!("capturing {scene_id}"))?;
            manifest.config_hash = Some(ctx.hash.clone());
            manifest.save(&scene_dir.join("manifest.json"))?;
            index.manifests.push(format!("{scene_id}/manifest.json"));
        }
        index.save(&dir.join("index.json"))?;
        println!(
            "capture: {count} {split} scenes x {} views -> {}",
            trajectory.len(),
            dir.join("index.json").display()
        );
    }
    Ok(())
}
