use std::path::PathBuf;

use anyhow::{Context as _, Result};
use instyle_evalkit::{read_curves, render_svg, Curves};

use crate::context::{require, Context};
use crate::stages::eval::VARIANTS;

#[derive(Clone, Debug, Default)]
pub struct PlotArgs {
    pub curves: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub auc_max: Option<f64>,
}

fn write_svg(path: &std::path::Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

/// Redraws accuracy-threshold curves from exported CSV. Without `--curves`,
/// overlays every pipeline variant in `eval/comparison.svg`.
pub fn plot(ctx: &Context, args: &PlotArgs) -> Result<()> {
    let report = &ctx.config.eval.report;
    let threshold = args.threshold.unwrap_or(report.threshold);
    let auc_max = args.auc_max.unwrap_or(report.auc_max);
    if let Some(csv) = &args.curves {
        require(csv, "eval")?;
        let curves = read_curves(csv)?;
        let out = args.out.clone().unwrap_or_else(|| csv.with_extension("svg"));
        write_svg(&out, &render_svg(&curves, threshold, auc_max))?;
        println!("plot: {}", out.display());
        return Ok(());
    }
    let mut combined = Curves::new();
    for (variant, _) in VARIANTS {
        let csv = ctx.eval_dir().join(variant).join("curves.csv");
        require(&csv, "eval")?;
        for (object, curve) in read_curves(&csv)? {
            combined.insert(format!("{object} ({variant})"), curve);
        }
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.eval_dir().join("comparison.svg"));
    write_svg(&out, &render_svg(&combined, threshold, auc_max))?;
    println!("plot: {}", out.display());
    Ok(())
}
