use std::collections::BTreeMap;

use instyle_core::{DetectionLog, Pose, SceneManifest};
use nalgebra::Vector3;

use crate::EvalError;

/// Mean distance between model points under the two poses.
pub fn add_distance(gt: &Pose, est: &Pose, points: &[Vector3<f64>]) -> Result<f64, EvalError> {
    if points.is_empty() {
        return Err(EvalError::EmptyModel);
    }
    let sum: f64 = points
        .iter()
        .map(|p| (gt.transform_point(p) - est.transform_point(p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Fraction of distances `<= threshold`.
pub fn pass_rate(distances: &[f64], threshold: f64) -> Result<f64, EvalError> {
    if distances.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = distances.iter().filter(|&&d| d <= threshold).count();
    Ok(hits as f64 / distances.len() as f64)
}

/// Pass rate at `steps + 1` thresholds `max * i / steps`, `i = 0..=steps`.
pub fn threshold_curve(distances: &[f64], max_threshold: f64, steps: usize) -> Result<Vec<(f64, f64)>, EvalError> {
    if distances.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(max_threshold > 0.0) || steps == 0 {
        return Err(EvalError::InvalidSetting(format!(
            "curve needs max > 0 and steps > 0, got {max_threshold} and {steps}"
        )));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok((0..=steps)
        .map(|i| {
            let t = if i == steps { max_threshold } else { max_threshold * i as f64 / steps as f64 };
            let hits = sorted.partition_point(|&d| d <= t);
            (t, hits as f64 / n)
        })
        .collect())
}

/// Trapezoidal area under the curve over its threshold span, scaled to
/// `[0, 100]`. Computed relative to the first segment's height so that a
/// constant curve `c` gives exactly `100 c`.
pub fn auc(curve: &[(f64, f64)]) -> f64 {
    if curve.len() < 2 {
        return curve.first().map_or(0.0, |&(_, a)| 100.0 * a);
    }
    let span = curve[curve.len() - 1].0 - curve[0].0;
    let base = 0.5 * (curve[0].1 + curve[1].1);
    let mut excess = 0.0;
    for w in curve.windows(2) {
        let height = 0.5 * (w[0].1 + w[1].1);
        excess += (w[1].0 - w[0].0) / span * (height - base);
    }
    100.0 * (base + excess)
}

/// ADD of one ground-truth instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub class_name: String,
    pub scene_id: String,
    pub view_id: u32,
    pub instance_id: u32,
    /// Meters; infinite when no estimate was matched.
    pub distance: f64,
    pub gt_pose: Pose,
    pub est_pose: Option<Pose>,
}

/// Matches estimates to ground-truth instances of the same class, greedily
/// by smallest ADD, and records one entry per ground-truth instance.
/// Unmatched estimates are ignored.
pub fn evaluate_detections(
    truth: &SceneManifest,
    estimates: &DetectionLog,
    models: &BTreeMap<String, Vec<Vector3<f64>>>,
) -> Result<Vec<EvalRecord>, EvalError> {
    let mut records = Vec::new();
    for view in &truth.views {
        let dets = estimates.get(&view.scene_id, view.view_id).unwrap_or(&[]);
        let mut classes: Vec<&str> = view.instances.iter().map(|i| i.class_name.as_str()).collect();
        classes.sort();
        classes.dedup();
        for class in classes {
            let points = models.get(class).ok_or_else(|| EvalError::MissingModel(class.to_string()))?;
            let gts: Vec<_> = view.instances.iter().filter(|i| i.class_name == class).collect();
            let ests: Vec<_> = dets.iter().filter(|d| d.class_name == class).collect();
            let mut pairs = Vec::with_capacity(gts.len() * ests.len());
            for (gi, g) in gts.iter().enumerate() {
                for (ei, e) in ests.iter().enumerate() {
                    pairs.push((add_distance(&g.pose, &e.pose, points)?, gi, ei));
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut matched: Vec<Option<(f64, usize)>> = vec![None; gts.len()];
            let mut used = vec![false; ests.len()];
            for (d, gi, ei) in pairs {
                if matched[gi].is_none() && !used[ei] {
                    matched[gi] = Some((d, ei));
                    used[ei] = true;
                }
            }
            for (g, m) in gts.iter().zip(matched) {
                records.push(EvalRecord {
                    class_name: class.to_string(),
                    scene_id: view.scene_id.clone(),
                    view_id: view.view_id,
                    instance_id: g.instance_id,
                    distance: m.map_or(f64::INFINITY, |(d, _)| d),
                    gt_pose: g.pose,
                    est_pose: m.map(|(_, ei)| ests[ei].pose),
                });
            }
        }
    }
    Ok(records)
}
