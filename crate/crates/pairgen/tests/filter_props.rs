use instyle_core::{CameraIntrinsics, Detection, InstanceLabel, Pose, Provenance, SceneManifest, ViewDetections, ViewRecord};
use instyle_pairgen::{
    consensus_count, count_in_range, estimate_views, mismatch_filter, DistanceRange, MockProvider, MockProviderConfig,
    RecordedProvider,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(200.0, 200.0, 80.0, 60.0, 160, 120).unwrap()
}

/// Scene with `views` views, each labeled with `n` instances in range.
fn manifest(views: u32, n: u32) -> SceneManifest {
    let mut m = SceneManifest::new("scene", Provenance::Real);
    m.classes = vec!["puck".into()];
    for v in 0..views {
        let mut view = ViewRecord::new("scene", v, format!("images/{v:04}.png"), Pose::identity(), intrinsics());
        for i in 1..=n {
            let t = Vector3::new(0.02 * i as f64, -0.01 * v as f64 / views as f64, 0.5 + 0.01 * i as f64);
            view.instances.push(InstanceLabel::new("puck", i, Pose::from_translation(t)));
        }
        m.views.push(view);
    }
    m
}

fn det_at(z: f64) -> Detection {
    Detection::new("puck", 1, Pose::from_translation(Vector3::new(0.0, 0.0, z)), 0.9)
}

#[test]
fn ninety_nine_one_example_keeps_single_instance_views() {
    let m = manifest(100, 0);
    let dets: Vec<ViewDetections> = (0..100u32)
        .map(|v| {
            let n = if v < 90 { 1 } else if v < 99 { 2 } else { 0 };
            ViewDetections {
                scene_id: "scene".into(),
                view_id: v,
                detections: (0..n).map(|_| det_at(0.6)).collect(),
            }
        })
        .collect();
    let provider = RecordedProvider::new(instyle_core::DetectionLog {
        schema: 1,
        entries: dets,
    });
    let est = estimate_views(&m, std::path::Path::new("."), &provider, 1).unwrap();
    let (report, filtered) = mismatch_filter(&m, &est, &["puck".into()], &DistanceRange::default()).unwrap();
    assert_eq!(report.classes[0].consensus, 1);
    assert_eq!(report.retention, 0.90);
    assert_eq!(report.retained_view_ids, (0..90).collect::<Vec<u32>>());
    assert_eq!(filtered.views.len(), 90);
}

#[test]
fn perfect_provider_retains_everything() {
    let m = manifest(30, 2);
    let p = MockProvider::new(MockProviderConfig::default()).unwrap();
    let est = estimate_views(&m, std::path::Path::new("."), &p, 1).unwrap();
    let (report, _) = mismatch_filter(&m, &est, &["puck".into()], &DistanceRange::default()).unwrap();
    assert_eq!(report.retention, 1.0);
    assert_eq!(report.classes[0].consensus, 2);
}

#[test]
fn faulty_provider_retention_matches_recount() {
    let m = manifest(200, 2);
    let cfg = MockProviderConfig {
        p_dropout: 0.05,
        p_false_positive: 0.03,
        seed: 5,
        ..Default::default()
    };
    let p = MockProvider::new(cfg).unwrap();
    let range = DistanceRange::default();
    let est = estimate_views(&m, std::path::Path::new("."), &p, 1).unwrap();
    let (report, _) = mismatch_filter(&m, &est, &["puck".into()], &range).unwrap();
    // independent recount: histogram, mode with smaller-wins ties
    let counts: Vec<usize> = est
        .iter()
        .map(|v| {
            v.detections
                .iter()
                .filter(|d| d.class_name == "puck")
                .filter(|d| {
                    let t = d.pose.translation();
                    let n = (t.x * t.x + t.y * t.y + t.z * t.z).sqrt();
                    n >= 0.3 && n <= 1.5
                })
                .count()
        })
        .collect();
    let mut hist = [0usize; 16];
    counts.iter().for_each(|&c| hist[c] += 1);
    let mode = (0..16).fold(0, |best, c| if hist[c] > hist[best] { c } else { best });
    let expected = counts.iter().filter(|&&c| c == mode).count() as f64 / 200.0;
    assert_eq!(report.classes[0].consensus, mode);
    assert_eq!(report.retention, expected);
    assert!(report.retention < 1.0);
}

#[test]
fn multi_class_filter_intersects() {
    let m = manifest(4, 0);
    let mk = |v: u32, classes: &[&str]| ViewDetections {
        scene_id: "scene".into(),
        view_id: v,
        detections: classes
            .iter()
            .map(|c| Detection::new(*c, 1, Pose::from_translation(Vector3::new(0.0, 0.0, 0.5)), 0.9))
            .collect(),
    };
    let dets = vec![mk(0, &["a", "b"]), mk(1, &["a", "b"]), mk(2, &["a"]), mk(3, &["b"])];
    let (report, _) = mismatch_filter(&m, &dets, &["a".into(), "b".into()], &DistanceRange::default()).unwrap();
    assert_eq!(report.classes[0].retained_view_ids, vec![0, 1, 2]);
    assert_eq!(report.classes[1].retained_view_ids, vec![0, 1, 3]);
    assert_eq!(report.retained_view_ids, vec![0, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retained_views_match_consensus_and_filter_is_idempotent(
        p_d in 0.0f64..0.2,
        p_f in 0.0f64..0.2,
        seed in any::<u64>(),
        n in 1u32..4,
    ) {
        let m = manifest(60, n);
        let cfg = MockProviderConfig { p_dropout: p_d, p_false_positive: p_f, sigma_t: 0.005, seed, ..Default::default() };
        let p = MockProvider::new(cfg).unwrap();
        let range = DistanceRange::default();
        let classes = vec!["puck".to_string()];
        let est = estimate_views(&m, std::path::Path::new("."), &p, 1).unwrap();
        let (report, filtered) = mismatch_filter(&m, &est, &classes, &range).unwrap();
        let consensus = report.classes[0].consensus;
        for view in &filtered.views {
            let d = est.iter().find(|e| e.view_id == view.view_id).unwrap();
            prop_assert_eq!(count_in_range(&d.detections, &range, "puck"), consensus);
        }
        let est2 = estimate_views(&filtered, std::path::Path::new("."), &p, 1).unwrap();
        let (again, refiltered) = mismatch_filter(&filtered, &est2, &classes, &range).unwrap();
        prop_assert_eq!(refiltered, filtered);
        prop_assert_eq!(again.retention, 1.0);
    }

    #[test]
    fn consensus_is_a_smallest_mode(counts in proptest::collection::vec(0usize..6, 1..50)) {
        let c = consensus_count(&counts).unwrap();
        let freq = |v: usize| counts.iter().filter(|&&x| x == v).count();
        for other in 0..6 {
            prop_assert!(freq(other) < freq(c) || (freq(other) == freq(c) && other >= c));
        }
    }

    #[test]
    fn closed_interval_membership(z in 0.0f64..3.0) {
        let range = DistanceRange::default();
        let expected = usize::from(!(z < 0.3 || z > 1.5));
        prop_assert_eq!(count_in_range(&[det_at(z)], &range, "puck"), expected);
    }
}
