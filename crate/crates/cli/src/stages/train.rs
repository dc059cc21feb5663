use anyhow::{bail, Context as _, Result};
use instyle_core::rng::subseed;
use instyle_core::PairSet;
use instyle_stylekit::train::write_history;
use instyle_stylekit::{load_crop_pairs, save_weights, train_transnet, TrainOptions, TransNetConfig};

use crate::context::{require, Context};

/// Trains one network per class from the weak pairs.
pub fn train_transfer(ctx: &Context, classes: &[String]) -> Result<()> {
    let pairs_path = ctx.pairs_dir().join("pairs.json");
    require(&pairs_path, "pair")?;
    let set = PairSet::load(&pairs_path)?;
    ctx.check_hash(&pairs_path, [set.config_hash.as_ref()]);
    let classes = if classes.is_empty() {
        ctx.config.objects.classes.clone()
    } else {
        classes.to_vec()
    };
    for class in &classes {
        let config = TransNetConfig {
            seed: subseed(ctx.seed(), &["transnet", class]),
            ..ctx.config.transnet.clone()
        };
        let crops = load_crop_pairs(&set, &ctx.pairs_dir(), class, &config.patch)?;
        if crops.is_empty() {
            bail!("no weak pairs contain `{class}`; check the capture and filter results");
        }
        let class_dir = ctx.weights_dir().join(class);
        let started = std::time::Instant::now();
        let (net, history) = train_transnet(
            class,
            &crops,
            &config,
            &TrainOptions {
                workers: ctx.workers,
                out_dir: Some(class_dir.clone()),
            },
        )
        .with_context(|| format!("training `{class}`"))?;
        let path = ctx.weights_file(class);
        save_weights(&net, &path)?;
        write_history(&history, &class_dir.join("history.csv"))?;
        println!(
            "train-transfer: {class}: {} crops, {} steps in {:.1}s -> {}",
            crops.len(),
            history.len(),
            started.elapsed().as_secs_f64(),
            path.display()
        );
    }
    Ok(())
}
