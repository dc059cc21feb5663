use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use instyle_stylekit::load_weights;
use instyle_transfer::{transfer_dataset, TransferPlan};

use crate::context::{dir_of, require, Context};
use crate::error::ConfigError;

#[derive(Clone, Debug, Default)]
pub struct TransferArgs {
    pub manifest: Option<PathBuf>,
    pub weights: Vec<(String, PathBuf)>,
    pub out: Option<PathBuf>,
    pub resolution: Option<usize>,
}

/// Parses `class=path`.
pub fn parse_weights_arg(arg: &str) -> Result<(String, PathBuf), String> {
    match arg.split_once('=') {
        Some((class, path)) if !class.is_empty() && !path.is_empty() => Ok((class.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected CLASS=WEIGHTS, got `{arg}`")),
    }
}

pub fn load_plan(weights: &[(String, PathBuf)], resolution: usize) -> Result<TransferPlan> {
    let mut plan = TransferPlan::new(resolution).map_err(|e| ConfigError(e.to_string()))?;
    for (class, path) in weights {
        require(path, "train-transfer")?;
        let net = load_weights(path)?;
        if &net.class_name != class {
            bail!("{} holds weights for `{}`, not `{class}`", path.display(), net.class_name);
        }
        plan = plan.with(class.clone(), Arc::new(net));
    }
    Ok(plan)
}

pub fn default_weights(ctx: &Context) -> Vec<(String, PathBuf)> {
    ctx.config
        .objects
        .classes
        .iter()
        .map(|c| (c.clone(), ctx.weights_file(c)))
        .collect()
}

/// Adapts the DS dataset with the trained networks.
pub fn transfer(ctx: &Context, args: &TransferArgs) -> Result<()> {
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| ctx.synth_dir("ds").join("manifest.json"));
    let weights = if args.weights.is_empty() {
        default_weights(ctx)
    } else {
        args.weights.clone()
    };
    let out = args.out.clone().unwrap_or_else(|| ctx.adapted_dir());
    let plan = load_plan(&weights, args.resolution.unwrap_or(ctx.config.transfer.resolution))?;
    let scenes = ctx.load_scenes(&manifest_path, "gen-synth")?;
    for (path, manifest) in &scenes {
        // several scenes share relative image paths, so each gets its own directory
        let scene_out = if scenes.len() == 1 {
            out.clone()
        } else {
            out.join(&manifest.scene_id)
        };
        let mut adapted = transfer_dataset(manifest, dir_of(path), &plan, &scene_out, ctx.workers)
            .with_context(|| format!("adapting {}", path.display()))?;
        adapted.config_hash = Some(ctx.hash.clone());
        let target = scene_out.join("manifest.json");
        adapted.save(&target)?;
        println!("transfer: {} views -> {}", adapted.views.len(), target.display());
    }
    Ok(())
}
