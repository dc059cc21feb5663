//! Multi-view mismatch filter.
//!
//! A scene is captured from many viewpoints, so every view should see the
//! same number of instances of each class. Views whose in-range detection
//! count differs from the most frequent count are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use instyle_core::io::load_rgb;
use instyle_core::par::par_map;
use instyle_core::{Detection, SceneManifest, ViewDetections};
use serde::{Deserialize, Serialize};

use crate::error::PairgenError;
use crate::provider::PoseProvider;

/// Closed interval `[d_min, d_max]` on the detection's distance from the
/// camera, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRange {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DistanceRange {
    fn default() -> Self {
        Self { d_min: 0.3, d_max: 1.5 }
    }
}

impl DistanceRange {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self, PairgenError> {
        let r = Self { d_min, d_max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), PairgenError> {
        if self.d_min.is_finite() && self.d_max.is_finite() && self.d_min >= 0.0 && self.d_min < self.d_max {
            Ok(())
        } else {
            Err(PairgenError::InvalidRange {
                d_min: self.d_min,
                d_max: self.d_max,
            })
        }
    }

    pub fn contains(&self, d: f64) -> bool {
        self.d_min <= d && d <= self.d_max
    }
}

pub fn count_in_range(detections: &[Detection], range: &DistanceRange, class_name: &str) -> usize {
    detections
        .iter()
        .filter(|d| d.class_name == class_name && range.contains(d.distance()))
        .count()
}

/// Most frequent count; ties go to the smaller count.
pub fn consensus_count(counts: &[usize]) -> Result<usize, PairgenError> {
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts {
        *freq.entry(c).or_default() += 1;
    }
    // BTreeMap iterates ascending, and max_by_key keeps the last maximum,
    // so iterate in reverse to land on the smallest tied count.
    freq.iter()
        .rev()
        .max_by_key(|(_, &n)| n)
        .map(|(&c, _)| c)
        .ok_or(PairgenError::EmptyCounts)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewCount {
    pub view_id: u32,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFilter {
    pub class_name: String,
    pub counts: Vec<ViewCount>,
    pub consensus: usize,
    pub retained_view_ids: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub scene_id: String,
    pub range: DistanceRange,
    pub classes: Vec<ClassFilter>,
    /// Views retained for every class.
    pub retained_view_ids: Vec<u32>,
    pub total_views: usize,
    pub retention: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FilterReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Filters `manifest` given per-view detections. Views missing from
/// `detections` count as having none. With several classes, a view is kept
/// only if it matches the consensus of every class.
pub fn mismatch_filter(
    manifest: &SceneManifest,
    detections: &[ViewDetections],
    classes: &[String],
    range: &DistanceRange,
) -> Result<(FilterReport, SceneManifest), PairgenError> {
    range.validate()?;
    if manifest.views.is_empty() {
        return Err(PairgenError::InvalidConfig(format!(
            "scene {} has no views to filter",
            manifest.scene_id
        )));
    }
    let by_view: BTreeMap<u32, &[Detection]> = detections
        .iter()
        .filter(|d| d.scene_id == manifest.scene_id)
        .map(|d| (d.view_id, d.detections.as_slice()))
        .collect();
    let mut retained: BTreeSet<u32> = manifest.views.iter().map(|v| v.view_id).collect();
    let mut class_reports = Vec::new();
    for class_name in classes {
        let counts: Vec<ViewCount> = manifest
            .views
            .iter()
            .map(|v| ViewCount {
                view_id: v.view_id,
                count: count_in_range(by_view.get(&v.view_id).copied().unwrap_or(&[]), range, class_name),
            })
            .collect();
        let consensus = consensus_count(&counts.iter().map(|c| c.count).collect::<Vec<_>>())?;
        let keep: Vec<u32> = counts
            .iter()
            .filter(|c| c.count == consensus)
            .map(|c| c.view_id)
            .collect();
        let keep_set: BTreeSet<u32> = keep.iter().copied().collect();
        retained = retained.intersection(&keep_set).copied().collect();
        class_reports.push(ClassFilter {
            class_name: class_name.clone(),
            counts,
            consensus,
            retained_view_ids: keep,
        });
    }
    let mut filtered = manifest.clone();
    filtered.views.retain(|v| retained.contains(&v.view_id));
    let retained_view_ids: Vec<u32> = filtered.views.iter().map(|v| v.view_id).collect();
    let mut warnings = Vec::new();
    if retained_view_ids.is_empty() {
        warnings.push(format!("scene {}: no views retained", manifest.scene_id));
    }
    if class_reports.iter().any(|c| c.consensus == 0) {
        warnings.push(format!("scene {}: consensus count is zero for some class", manifest.scene_id));
    }
    let report = FilterReport {
        scene_id: manifest.scene_id.clone(),
        range: *range,
        classes: class_reports,
        retention: retained_view_ids.len() as f64 / manifest.views.len() as f64,
        total_views: manifest.views.len(),
        retained_view_ids,
        warnings,
    };
    Ok((report, filtered))
}

/// Runs `provider` on every view of `manifest`. Images are resolved against
/// `base` and only decoded when the provider needs pixels.
pub fn estimate_views(
    manifest: &SceneManifest,
    base: &Path,
    provider: &dyn PoseProvider,
    workers: usize,
) -> Result<Vec<ViewDetections>, PairgenError> {
    par_map(&manifest.views, workers, |view| {
        let image = if provider.needs_image() {
            Some(load_rgb(&base.join(&view.image))?)
        } else {
            None
        };
        let detections = provider.estimate(view, image.as_ref())?;
        if let Some(bad) = detections.iter().find(|d| !d.is_valid()) {
            return Err(PairgenError::View {
                view_id: view.view_id,
                reason: format!("provider returned an invalid detection for instance {}", bad.instance_id),
            });
        }
        Ok(ViewDetections {
            scene_id: view.scene_id.clone(),
            view_id: view.view_id,
            detections,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use instyle_core::Pose;
    use nalgebra::Vector3;

    fn det(class: &str, z: f64) -> Detection {
        Detection::new(class, 1, Pose::from_translation(Vector3::new(0.0, 0.0, z)), 0.9)
    }

    #[test]
    fn counts_in_closed_range() {
        let r = DistanceRange::default();
        assert_eq!(count_in_range(&[det("a", 0.5), det("a", 2.0)], &r, "a"), 1);
        assert_eq!(count_in_range(&[], &r, "a"), 0);
        assert_eq!(count_in_range(&[det("a", 1.5), det("a", 0.3)], &r, "a"), 2);
        assert_eq!(count_in_range(&[det("b", 0.5)], &r, "a"), 0);
    }

    #[test]
    fn consensus_examples() {
        let mut counts = vec![1; 90];
        counts.extend([2; 9]);
        counts.push(0);
        assert_eq!(consensus_count(&counts).unwrap(), 1);
        assert_eq!(consensus_count(&[3, 3, 3]).unwrap(), 3);
        let tie: Vec<usize> = [1; 5].into_iter().chain([2; 5]).collect();
        assert_eq!(consensus_count(&tie).unwrap(), 1);
        assert!(matches!(consensus_count(&[]), Err(PairgenError::EmptyCounts)));
    }

    #[test]
    fn invalid_range_rejected() {
        assert!(DistanceRange::new(1.0, 1.0).is_err());
        assert!(DistanceRange::new(1.5, 0.3).is_err());
    }
}
