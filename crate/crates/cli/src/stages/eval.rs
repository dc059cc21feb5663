use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use instyle_core::io::load_rgb;
use instyle_core::manifest::load_dataset;
use instyle_core::{Detection, DetectionLog, InstanceMask, MeshModel, ViewDetections};
use instyle_evalkit::{evaluate_detections, make_report, write_report, EvalRecord, EvalReport, ReportSettings};
use instyle_pairgen::{build_weak_pairs, estimate_views, TemplateMatcher};
use instyle_render::Rasterizer;
use instyle_transfer::{transfer_image, InstanceRecord};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::context::{dir_of, require, Context};
use crate::stages::pair::write_json;
use crate::stages::transfer::{default_weights, load_plan};

pub type Models = BTreeMap<String, Vec<Vector3<f64>>>;

/// Training sets compared by the pipeline evaluation, with the stage that
/// produces each.
pub const VARIANTS: [(&str, &str); 2] = [("unadapted", "gen-synth"), ("adapted", "transfer")];

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    pub gt: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub threshold: Option<f64>,
    pub auc_max: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Mean absolute difference to the real captures over instance pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleGap {
    pub pixels: usize,
    pub l1_unadapted: f64,
    pub l1_adapted: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub style_gap: StyleGap,
    /// Pass rate at the report threshold, per variant and object.
    pub add_pass_rate: BTreeMap<String, BTreeMap<String, f64>>,
    pub auc: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Summary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }
}

fn settings(ctx: &Context, args: &EvalArgs) -> ReportSettings {
    let mut s = ctx.config.eval.report.clone();
    if let Some(t) = args.threshold {
        s.threshold = t;
    }
    if let Some(m) = args.auc_max {
        s.auc_max = m;
    }
    s
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    match &args.gt {
        Some(gt) => eval_files(ctx, gt, args),
        None => eval_pipeline(ctx, args),
    }
}

/// `eval --gt --pred --model`: scores a detection log against ground truth.
fn eval_files(ctx: &Context, gt: &Path, args: &EvalArgs) -> Result<()> {
    let Some(pred) = &args.pred else {
        bail!(crate::error::ConfigError("--gt requires --pred".into()));
    };
    if args.models.is_empty() {
        bail!(crate::error::ConfigError("--gt requires at least one --model".into()));
    }
    require(gt, "capture")?;
    require(pred, "pair")?;
    let mut models = Models::new();
    for path in &args.models {
        require(path, "gen-synth")?;
        let mesh = MeshModel::load(path)?;
        models.insert(mesh.class_name.clone(), mesh.points());
    }
    let (_, scenes) = load_dataset(gt)?;
    let log = DetectionLog::load(pred)?;
    let mut records = Vec::new();
    for (_, truth) in &scenes {
        records.extend(evaluate_detections(truth, &log, &models)?);
    }
    let out = args.out.clone().unwrap_or_else(|| ctx.eval_dir().join("report"));
    let report = score(&records, &settings(ctx, args), &out)?;
    print!("{}", instyle_evalkit::format_table(&report));
    Ok(())
}

fn score(records: &[EvalRecord], settings: &ReportSettings, out: &Path) -> Result<EvalReport> {
    let (report, curves) = make_report(records, settings)?;
    write_report(out, &report, &curves)?;
    Ok(report)
}

pub fn library_models(ctx: &Context) -> Result<Models> {
    let library = ctx.library()?;
    let mut models = Models::new();
    for class in library.classes() {
        models.insert(class.clone(), library.mesh(&class)?.points());
    }
    Ok(models)
}

/// Template matchers trained on unadapted and adapted synthetic data,
/// scored on the held-out captures, plus the style gap of both.
fn eval_pipeline(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let settings = settings(ctx, args);
    let out = args.out.clone().unwrap_or_else(|| ctx.eval_dir());
    let truth = ctx.load_scenes(&ctx.real_dir("test").join("index.json"), "capture")?;
    let models = library_models(ctx)?;
    let mut summary = Summary {
        style_gap: style_gap(ctx, &truth, &out.join("style_gap"))?,
        add_pass_rate: BTreeMap::new(),
        auc: BTreeMap::new(),
    };
    for (variant, stage) in VARIANTS {
        let dataset = match variant {
            "adapted" => ctx.adapted_dir().join("manifest.json"),
            _ => ctx.synth_dir("ds").join("manifest.json"),
        };
        let matcher = template_matcher(ctx, &dataset, stage)?;
        let mut log = DetectionLog::new();
        let mut records = Vec::new();
        for (path, scene) in &truth {
            let dets = estimate_views(scene, dir_of(path), &matcher, ctx.workers)?;
            let scene_log = DetectionLog {
                entries: dets,
                ..DetectionLog::new()
            };
            records.extend(evaluate_detections(scene, &scene_log, &models)?);
            log.entries.extend(scene_log.entries);
        }
        let dir = out.join(variant);
        log.save(&dir.join("detections.json"))?;
        let report = score(&records, &settings, &dir)?;
        println!("eval: {variant}");
        print!("{}", instyle_evalkit::format_table(&report));
        for row in &report.rows {
            summary
                .add_pass_rate
                .entry(variant.to_string())
                .or_default()
                .insert(row.object.clone(), row.add_pass_rate);
            summary.auc.entry(variant.to_string()).or_default().insert(row.object.clone(), row.auc);
        }
    }
    let gap = &summary.style_gap;
    println!(
        "eval: style gap L1 {:.4} -> {:.4} (ratio {:.3}) over {} pixels",
        gap.l1_unadapted, gap.l1_adapted, gap.ratio, gap.pixels
    );
    write_json(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn template_matcher(ctx: &Context, dataset: &Path, stage: &'static str) -> Result<TemplateMatcher> {
    let scenes = ctx.load_scenes(dataset, stage)?;
    let mut matcher: Option<TemplateMatcher> = None;
    for (path, manifest) in &scenes {
        let m = TemplateMatcher::from_dataset(manifest, dir_of(path), ctx.config.eval.template.clone())?;
        match &mut matcher {
            Some(acc) => acc.templates.extend(m.templates),
            None => matcher = Some(m),
        }
    }
    match matcher {
        Some(m) if !m.templates.is_empty() => Ok(m),
        _ => bail!("{} yields no templates", dataset.display()),
    }
}

/// Renders every held-out view at its ground-truth poses, adapts the
/// render, and compares both with the captured image inside the masks.
fn style_gap(ctx: &Context, truth: &[(PathBuf, instyle_core::SceneManifest)], out: &Path) -> Result<StyleGap> {
    let plan = load_plan(&default_weights(ctx), ctx.config.transfer.resolution)?;
    let library = ctx.library()?;
    let env = ctx.environment();
    let (mut pixels, mut before, mut after) = (0usize, 0.0, 0.0);
    for (path, scene) in truth {
        let gt: Vec<ViewDetections> = scene
            .views
            .iter()
            .map(|v| ViewDetections {
                scene_id: v.scene_id.clone(),
                view_id: v.view_id,
                detections: v
                    .instances
                    .iter()
                    .map(|l| Detection::new(l.class_name.clone(), l.instance_id, l.pose, 1.0))
                    .collect(),
            })
            .collect();
        let (pairs, _) = build_weak_pairs(scene, dir_of(path), &gt, &library, &env, &Rasterizer, 1.0, out, ctx.workers)?;
        for pair in &pairs {
            let real = load_rgb(&out.join(&pair.real_image))?;
            let synthetic = load_rgb(&out.join(&pair.synthetic_image))?;
            let records = pair
                .instances
                .iter()
                .map(|i| {
                    Ok(InstanceRecord {
                        mask: InstanceMask::load_png(&out.join(&i.mask), i.instance_id, &i.class_name)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let adapted = transfer_image(&synthetic, &records, &plan, 1)?;
            for r in &records {
                for (idx, &inside) in r.mask.as_slice().iter().enumerate() {
                    if !inside {
                        continue;
                    }
                    let (x, y) = ((idx as u32) % pair.width, (idx as u32) / pair.width);
                    let (a, s, t) = (adapted.get_pixel(x, y), synthetic.get_pixel(x, y), real.get_pixel(x, y));
                    for c in 0..3 {
                        before += (s[c] as f64 - t[c] as f64).abs() / 255.0;
                        after += (a[c] as f64 - t[c] as f64).abs() / 255.0;
                    }
                    pixels += 1;
                }
            }
        }
    }
    if pixels == 0 {
        bail!("held-out captures contain no visible instances");
    }
    let n = 3.0 * pixels as f64;
    Ok(StyleGap {
        pixels,
        l1_unadapted: before / n,
        l1_adapted: after / n,
        ratio: after / before,
    })
}
