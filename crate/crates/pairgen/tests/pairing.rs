use instyle_core::{CameraIntrinsics, Detection, InstanceMask, Pose, ViewDetections};
use instyle_pairgen::{
    build_weak_pairs, capture_scene, estimate_views, gantry_trajectory, orbit_trajectory, MockProvider,
    MockProviderConfig, ModelLibrary, PairgenError, SupportPlane, SyntheticEnvironment,
};
use instyle_render::{mask_for_instance, render_view, Camera, ColorTransform, Rasterizer, SceneGraph, SceneInstance, StyleGap, StyledRenderer};
use nalgebra::Vector3;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(160.0, 160.0, 64.0, 48.0, 128, 96).unwrap()
}

fn table_scene(lib: &ModelLibrary) -> (SceneGraph, SupportPlane) {
    let plane = SupportPlane::default();
    let puck = lib.mesh("puck").unwrap();
    let can = lib.mesh("soup_can").unwrap();
    let scene = SceneGraph {
        instances: vec![
            SceneInstance { mesh: puck.clone(), pose: Pose::from_translation(Vector3::new(0.0, 0.0, 0.0)), instance_id: 1 },
            SceneInstance { mesh: puck, pose: Pose::from_translation(Vector3::new(0.07, 0.03, 0.0)), instance_id: 2 },
            SceneInstance { mesh: can, pose: Pose::from_translation(Vector3::new(-0.06, -0.04, 0.0)), instance_id: 3 },
        ],
        environment: vec![plane.piece()],
        background: [0.2, 0.2, 0.2],
        ..Default::default()
    };
    (scene, plane)
}

fn real_renderer() -> StyledRenderer {
    let mut gap = StyleGap { jitter: 0.05, noise_sigma: 0.03, ..Default::default() };
    gap.class_styles.insert("puck".into(), ColorTransform::recolor([0.85, 0.25, 0.2], [0.25, 0.35, 0.85]));
    StyledRenderer::new(gap, 3)
}

#[test]
fn capture_is_deterministic_and_sized() {
    let lib = ModelLibrary::builtin();
    let (scene, _) = table_scene(&lib);
    let traj = orbit_trajectory([0.0, 0.0, 0.0], 0.4, 0.35, 20, 0.0, 1.5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = capture_scene(&scene, &traj, &intrinsics(), &real_renderer(), "arc", a.path(), 1).unwrap();
    let mb = capture_scene(&scene, &traj, &intrinsics(), &real_renderer(), "arc", b.path(), 2).unwrap();
    assert_eq!(ma.views.len(), 20);
    assert!(ma.views.iter().all(|v| v.scene_id == "arc"));
    assert_eq!(ma.to_json().unwrap(), mb.to_json().unwrap());
    for v in &ma.views {
        let ia = std::fs::read(a.path().join(&v.image)).unwrap();
        let ib = std::fs::read(b.path().join(&v.image)).unwrap();
        assert_eq!(ia, ib);
    }
    let one = capture_scene(&scene, &traj[..1], &intrinsics(), &real_renderer(), "one", a.path(), 1).unwrap();
    assert_eq!(one.views.len(), 1);
}

#[test]
fn perfect_detections_reproduce_ground_truth_masks_exactly() {
    let lib = ModelLibrary::builtin();
    let (scene, plane) = table_scene(&lib);
    let k = intrinsics();
    let traj = gantry_trajectory([0.0, 0.0], 0.45, 3, 2, [0.04, 0.04]);
    let dir = tempfile::tempdir().unwrap();
    let real = capture_scene(&scene, &traj, &k, &real_renderer(), "g", &dir.path().join("real"), 1).unwrap();
    let provider = MockProvider::new(MockProviderConfig::default()).unwrap();
    let dets = estimate_views(&real, &dir.path().join("real"), &provider, 1).unwrap();
    let env = SyntheticEnvironment { environment: vec![plane.piece()], background: scene.background, light: scene.light };
    let out = dir.path().join("pairs");
    let (pairs, warnings) =
        build_weak_pairs(&real, &dir.path().join("real"), &dets, &lib, &env, &Rasterizer, 1.2, &out, 1).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(pairs.len(), traj.len());
    for (pair, pose) in pairs.iter().zip(&traj) {
        let gt = render_view(&scene, &Camera::new(*pose, k));
        for inst in &pair.instances {
            let mask = InstanceMask::load_png(&out.join(&inst.mask), inst.instance_id, &inst.class_name).unwrap();
            let truth = mask_for_instance(&gt, inst.instance_id).unwrap();
            assert_eq!(mask.as_slice(), truth.as_slice(), "view {} instance {}", pair.view_id, inst.instance_id);
            assert!(inst.crop_box.contains(&inst.bbox));
        }
        assert!(out.join(&pair.real_image).exists());
        assert!(out.join(&pair.synthetic_image).exists());
    }
}

#[test]
fn noisy_detections_keep_high_iou_and_bad_ones_are_dropped() {
    let lib = ModelLibrary::builtin();
    let (scene, plane) = table_scene(&lib);
    let k = intrinsics();
    let traj = gantry_trajectory([0.0, 0.0], 0.45, 1, 1, [0.0, 0.0]);
    let dir = tempfile::tempdir().unwrap();
    let real = capture_scene(&scene, &traj, &k, &real_renderer(), "g", dir.path(), 1).unwrap();
    let env = SyntheticEnvironment { environment: vec![plane.piece()], background: scene.background, light: scene.light };
    let view = &real.views[0];
    let mut dets: Vec<Detection> = view
        .instances
        .iter()
        .map(|l| {
            let t = l.pose.translation() + Vector3::new(0.0005, -0.0005, 0.0);
            Detection::new(l.class_name.clone(), l.instance_id, Pose::new(*l.pose.rotation(), t), 0.9)
        })
        .collect();
    dets.push(Detection::new("puck", 9, Pose::from_translation(Vector3::new(0.0, 0.0, -0.5)), 0.4));
    let vd = vec![ViewDetections { scene_id: "g".into(), view_id: 0, detections: dets }];
    let out = dir.path().join("pairs");
    let (pairs, warnings) = build_weak_pairs(&real, dir.path(), &vd, &lib, &env, &Rasterizer, 1.2, &out, 1).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].instances.len(), 3);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("instance 9"));
    let gt = render_view(&scene, &Camera::new(traj[0], k));
    for inst in &pairs[0].instances {
        let mask = InstanceMask::load_png(&out.join(&inst.mask), inst.instance_id, &inst.class_name).unwrap();
        let truth = mask_for_instance(&gt, inst.instance_id).unwrap();
        assert!(mask.iou(&truth) >= 0.9, "iou {}", mask.iou(&truth));
    }
}

#[test]
fn single_detection_gives_single_pair_and_missing_model_errors() {
    let lib = ModelLibrary::builtin();
    let (scene, _) = table_scene(&lib);
    let k = intrinsics();
    let traj = gantry_trajectory([0.0, 0.0], 0.45, 1, 1, [0.0, 0.0]);
    let dir = tempfile::tempdir().unwrap();
    let real = capture_scene(&scene, &traj, &k, &real_renderer(), "g", dir.path(), 1).unwrap();
    let env = SyntheticEnvironment::default();
    let label = &real.views[0].instances[0];
    let one = vec![ViewDetections {
        scene_id: "g".into(),
        view_id: 0,
        detections: vec![Detection::new(label.class_name.clone(), label.instance_id, label.pose, 0.9)],
    }];
    let (pairs, _) = build_weak_pairs(&real, dir.path(), &one, &lib, &env, &Rasterizer, 1.2, &dir.path().join("p"), 1).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].instances.len(), 1);

    let mut unknown = one.clone();
    unknown[0].detections[0].class_name = "teapot".into();
    let err = build_weak_pairs(&real, dir.path(), &unknown, &lib, &env, &Rasterizer, 1.2, &dir.path().join("p"), 1);
    assert!(matches!(err, Err(PairgenError::MissingModel(c)) if c == "teapot"));
}
