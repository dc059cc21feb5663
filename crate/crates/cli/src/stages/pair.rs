use anyhow::{Context as _, Result};
use instyle_core::rng::subseed;
use instyle_core::{DetectionLog, PairSet};
use instyle_pairgen::{build_weak_pairs, estimate_views, mismatch_filter, MockProvider, MockProviderConfig};
use instyle_render::Rasterizer;

use crate::context::{dir_of, Context};

/// Pose-provider inference, mismatch filtering and weak-pair rendering
/// over the training captures.
pub fn pair(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let scenes = ctx.load_scenes(&ctx.real_dir("train").join("index.json"), "capture")?;
    let library = ctx.library()?;
    let provider = MockProvider::new(MockProviderConfig {
        seed: subseed(ctx.seed(), &["provider"]),
        ..cfg.provider.clone()
    })?
    .with_classes(cfg.objects.classes.clone());
    let env = ctx.environment();
    let out = ctx.pairs_dir();
    let mut log = DetectionLog::new();
    let mut pairs = Vec::new();
    for (path, manifest) in &scenes {
        let base = dir_of(path);
        let detections = estimate_views(manifest, base, &provider, ctx.workers)?;
        let (report, filtered) = mismatch_filter(manifest, &detections, &manifest.classes, &cfg.capture.distance)?;
        let report_path = out.join("filter").join(format!("{}.json", manifest.scene_id));
        write_json(&report_path, &report.to_json())?;
        println!(
            "pair: {} retention {:.3} ({} of {} views)",
            manifest.scene_id,
            report.retention,
            report.retained_view_ids.len(),
            report.total_views
        );
        for w in &report.warnings {
            log::warn!("{w}");
        }
        let (scene_pairs, _) = build_weak_pairs(
            &filtered,
            base,
            &detections,
            &library,
            &env,
            &Rasterizer,
            cfg.transnet.patch.crop_factor,
            &out,
            ctx.workers,
        )
        .with_context(|| format!("building weak pairs for {}", manifest.scene_id))?;
        pairs.extend(scene_pairs);
        log.entries.extend(detections);
    }
    log.save(&out.join("detections.json"))?;
    let mut set = PairSet::new(cfg.transnet.patch.crop_factor, pairs);
    set.config_hash = Some(ctx.hash.clone());
    set.save(&out.join("pairs.json"))?;
    let instances: usize = set.pairs.iter().map(|p| p.instances.len()).sum();
    println!(
        "pair: {} weak pairs, {instances} instances -> {}",
        set.pairs.len(),
        out.join("pairs.json").display()
    );
    Ok(())
}

pub fn write_json(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
