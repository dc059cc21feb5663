use instyle_core::FloatImage;
use instyle_stylekit::train::{make_batch, write_history};
use instyle_stylekit::weights::encode_weights;
use instyle_stylekit::{
    load_weights, save_weights, train_transnet, CropPair, PatchBatch, PatchSpec, Tensor, TrainOptions, TransNet,
    TransNetConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny network and patches so a few hundred steps run in seconds.
fn tiny_config() -> TransNetConfig {
    TransNetConfig {
        gen_width: 4,
        gen_depth: 1,
        disc_width: 4,
        disc_depth: 2,
        head_width: 8,
        nce_patches: 8,
        batch: 2,
        epochs: 2,
        steps_per_epoch: Some(3),
        patch: PatchSpec {
            scale_min: 20,
            scale_max: 32,
            patch_size: 16,
            ..PatchSpec::default()
        },
        seed: 9,
        ..TransNetConfig::toy()
    }
}

fn disk_crop(color: [f64; 3], noise: f64, seed: u64) -> FloatImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = FloatImage::filled(24, 20, [0.5, 0.5, 0.5]);
    for y in 0..20 {
        for x in 0..24 {
            let inside = (x as f64 - 11.5).powi(2) + (y as f64 - 9.5).powi(2) < 64.0;
            for c in 0..3 {
                let base = if inside { color[c] } else { 0.5 };
                img.set(c, x, y, (base + noise * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0));
            }
        }
    }
    img
}

fn disk_pairs(n: u64) -> Vec<CropPair> {
    (0..n)
        .map(|i| CropPair {
            synthetic: disk_crop([0.85, 0.25, 0.2], 0.0, i),
            real: disk_crop([0.25, 0.35, 0.85], 0.04, 100 + i),
        })
        .collect()
}

#[test]
fn one_step_is_bit_reproducible() {
    let crops = disk_pairs(3);
    let cfg = tiny_config();
    let run = || {
        let mut net = TransNet::new("puck", cfg.clone()).unwrap();
        let batch = make_batch(&crops, &cfg, 0, 1).unwrap();
        let losses = net.train_step(&batch).unwrap();
        (losses, encode_weights(&net).unwrap())
    };
    let (a, wa) = run();
    let (b, wb) = run();
    assert_eq!(a, b);
    assert_eq!(wa, wb);
}

#[test]
fn batches_do_not_depend_on_worker_count() {
    let crops = disk_pairs(4);
    let cfg = TransNetConfig {
        batch: 6,
        ..tiny_config()
    };
    assert_eq!(make_batch(&crops, &cfg, 7, 1).unwrap(), make_batch(&crops, &cfg, 7, 3).unwrap());
}

#[test]
fn generator_steps_drive_identity_l1_to_zero() {
    let cfg = TransNetConfig {
        r1_gamma: 0.0,
        tau: 1e6,
        lambda_l1: 100.0,
        lr_g: 1e-3,
        ..tiny_config()
    };
    let mut net = TransNet::new("puck", cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in net.gen.params_mut() {
        for v in p.value.iter_mut() {
            *v += 0.1 * rng.random_range(-1.0..1.0);
        }
    }
    let y = Tensor::from_vec([2, 3, 16, 16], (0..1536).map(|i| ((i * 37) % 17) as f64 / 16.0).collect());
    let batch = PatchBatch { x: y.clone(), y };
    let (_, _, _, first) = net.generator_step(&batch).unwrap();
    let mut last = first;
    for _ in 0..300 {
        last = net.generator_step(&batch).unwrap().3;
    }
    assert!(first > 0.05, "perturbed generator should start away from identity: {first}");
    assert!(last < 0.1 * first, "l1 went from {first} to {last}");
}

#[test]
fn two_hundred_step_run_keeps_losses_finite_and_nonnegative() {
    let crops = disk_pairs(4);
    let cfg = TransNetConfig {
        epochs: 10,
        steps_per_epoch: Some(20),
        r1_interval: 4,
        ..tiny_config()
    };
    let (net, history) = train_transnet("puck", &crops, &cfg, &TrainOptions::default()).unwrap();
    assert_eq!(history.len(), 200);
    assert_eq!(net.step, 200);
    for h in &history {
        for v in [h.nce_x, h.nce_y, h.g_adv, h.l1, h.d_adv] {
            assert!(v.is_finite() && v >= 0.0, "{h:?}");
        }
        assert_eq!(h.r1.is_some(), h.step % 4 == 0);
        if let Some(r1) = h.r1 {
            assert!(r1.is_finite() && r1 >= 0.0);
        }
    }
}

#[test]
fn training_is_deterministic_and_writes_artifacts() {
    let crops = disk_pairs(3);
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        workers: 1,
        out_dir: Some(dir.path().to_path_buf()),
    };
    let (a, ha) = train_transnet("puck", &crops, &cfg, &opts).unwrap();
    let (b, hb) = train_transnet("puck", &crops, &cfg, &TrainOptions { workers: 2, out_dir: None }).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(encode_weights(&a).unwrap(), encode_weights(&b).unwrap());
    assert!(dir.path().join("samples/epoch_001.png").exists());
    assert!(dir.path().join("samples/epoch_002.png").exists());

    let path = dir.path().join("puck.istw");
    save_weights(&a, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back.class_name, "puck");
    assert_eq!(back.step, a.step);
    assert_eq!(back.gen, a.gen);

    let csv_path = dir.path().join("history.csv");
    write_history(&ha, &csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("step,nce_x,nce_y,g_adv,l1,d_adv,r1\n"));
    assert_eq!(text.lines().count(), ha.len() + 1);
}

#[test]
fn empty_pair_list_is_rejected() {
    assert!(train_transnet("puck", &[], &tiny_config(), &TrainOptions::default()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TransNetConfig { tau: 0.0, ..TransNetConfig::default() },
        TransNetConfig { r1_gamma: -1.0, ..TransNetConfig::default() },
        TransNetConfig { gen_width: 0, ..TransNetConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
    assert!(TransNetConfig::default().validate().is_ok());
    assert!(TransNetConfig::toy().validate().is_ok());
}
