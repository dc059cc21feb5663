use instyle_core::rng::substream;
use instyle_core::CameraIntrinsics;
use instyle_pairgen::synth::{footprint_radius, generate_ds_scene};
use instyle_pairgen::{generate_dr_scene, DrConfig, DsConfig, ModelLibrary, SupportPlane};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn k() -> CameraIntrinsics {
    CameraIntrinsics::new(200.0, 200.0, 80.0, 60.0, 160, 120).unwrap()
}

#[test]
fn dr_instance_counts_are_uniform() {
    let lib = ModelLibrary::builtin();
    let cfg = DrConfig::default();
    let mut hist = [0f64; 5];
    for i in 0..1000u64 {
        let scene = generate_dr_scene(&lib, "soup_can", &k(), &cfg, &mut substream(42, &["dr", &i.to_string()])).unwrap();
        hist[scene.instances.len() - 1] += 1.0;
        for inst in &scene.instances {
            let d = inst.pose.translation().norm();
            assert!(d >= cfg.distance.d_min - 1e-12 && d <= cfg.distance.d_max + 1e-12);
        }
    }
    let expected = 200.0;
    let chi2: f64 = hist.iter().map(|o| (o - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} p {p} hist {hist:?}");
}

#[test]
fn ds_footprints_never_overlap_and_replay() {
    let lib = ModelLibrary::builtin();
    let plane = SupportPlane::default();
    let cfg = DsConfig::default();
    for i in 0..200u64 {
        let a = generate_ds_scene(&lib, "soup_can", &plane, &cfg, &mut substream(1, &["ds", &i.to_string()])).unwrap();
        let b = generate_ds_scene(&lib, "soup_can", &plane, &cfg, &mut substream(1, &["ds", &i.to_string()])).unwrap();
        assert_eq!(a.instances.len(), b.instances.len());
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.pose, y.pose);
        }
        for (m, p) in a.instances.iter().enumerate() {
            for q in &a.instances[m + 1..] {
                let rp = footprint_radius(&p.mesh, p.pose.rotation());
                let rq = footprint_radius(&q.mesh, q.pose.rotation());
                let d = (p.pose.translation() - q.pose.translation()).xy().norm();
                assert!(d >= rp + rq - 1e-12, "disks overlap: {d} < {}", rp + rq);
            }
        }
    }
}
