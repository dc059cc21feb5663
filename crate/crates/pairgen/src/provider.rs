//! Pose providers: anything that turns a view into camera-frame detections.

use image::RgbImage;
use instyle_core::rng::substream;
use instyle_core::{Detection, DetectionLog, Pose, ViewRecord};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::PairgenError;

/// Estimates object poses in one view. Returned poses are in the camera
/// frame and scores lie in `[0, 1]`.
pub trait PoseProvider: Send + Sync {
    fn estimate(&self, view: &ViewRecord, image: Option<&RgbImage>) -> Result<Vec<Detection>, PairgenError>;

    /// Whether [`estimate`](Self::estimate) looks at pixels. Providers that
    /// do not are spared the image decode.
    fn needs_image(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockProviderConfig {
    /// Per-axis translation noise, meters.
    #[serde(default)]
    pub sigma_t: f64,
    /// Per-axis rotation noise (axis-angle components), radians.
    #[serde(default)]
    pub sigma_r: f64,
    /// Probability that a visible instance is missed.
    #[serde(default)]
    pub p_dropout: f64,
    /// Probability that a view gets one spurious detection.
    #[serde(default)]
    pub p_false_positive: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MockProviderConfig {
    fn default() -> Self {
        Self {
            sigma_t: 0.0,
            sigma_r: 0.0,
            p_dropout: 0.0,
            p_false_positive: 0.0,
            seed: 0,
        }
    }
}

impl MockProviderConfig {
    pub fn validate(&self) -> Result<(), PairgenError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_dropout) || !prob(self.p_false_positive) {
            return Err(PairgenError::InvalidConfig("mock probabilities must lie in [0, 1]".into()));
        }
        if !(self.sigma_t >= 0.0 && self.sigma_r >= 0.0) || !self.sigma_t.is_finite() || !self.sigma_r.is_finite() {
            return Err(PairgenError::InvalidConfig("mock noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Perturbs the ground-truth labels stored with each view.
///
/// Each view draws from its own stream keyed by `(seed, scene_id, view_id)`,
/// so results do not depend on the order in which views are processed.
#[derive(Clone, Debug)]
pub struct MockProvider {
    pub config: MockProviderConfig,
    /// Classes used for false positives; defaults to the classes in the view.
    pub false_positive_classes: Vec<String>,
}

/// Instance ids given to false positives start here.
pub const FALSE_POSITIVE_ID_BASE: u32 = 10_000;

impl MockProvider {
    pub fn new(config: MockProviderConfig) -> Result<Self, PairgenError> {
        config.validate()?;
        Ok(Self {
            config,
            false_positive_classes: Vec::new(),
        })
    }

    pub fn with_classes(mut self, classes: Vec<String>) -> Self {
        self.false_positive_classes = classes;
        self
    }
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}

impl PoseProvider for MockProvider {
    fn estimate(&self, view: &ViewRecord, _image: Option<&RgbImage>) -> Result<Vec<Detection>, PairgenError> {
        let cfg = &self.config;
        let mut rng = substream(cfg.seed, &["mock", &view.scene_id, &view.view_id.to_string()]);
        let noise_t = Normal::new(0.0, cfg.sigma_t).expect("validated sigma");
        let noise_r = Normal::new(0.0, cfg.sigma_r).expect("validated sigma");
        let mut out = Vec::new();
        for label in &view.instances {
            if rng.random::<f64>() < cfg.p_dropout {
                continue;
            }
            let mut pose = label.pose;
            if cfg.sigma_t > 0.0 || cfg.sigma_r > 0.0 {
                let dt = Vector3::from_fn(|_, _| noise_t.sample(&mut rng));
                let dr = Vector3::from_fn(|_, _| noise_r.sample(&mut rng));
                pose = Pose::new(
                    UnitQuaternion::from_scaled_axis(dr) * pose.rotation(),
                    pose.translation() + dt,
                );
            }
            let score = rng.random_range(0.7..=1.0);
            out.push(Detection::new(label.class_name.clone(), label.instance_id, pose, score));
        }
        if rng.random::<f64>() < cfg.p_false_positive {
            let classes: Vec<&str> = if self.false_positive_classes.is_empty() {
                view.instances.iter().map(|l| l.class_name.as_str()).collect()
            } else {
                self.false_positive_classes.iter().map(String::as_str).collect()
            };
            if !classes.is_empty() {
                let class = classes[rng.random_range(0..classes.len())];
                let k = &view.intrinsics;
                let u = rng.random_range(0.0..k.width as f64);
                let v = rng.random_range(0.0..k.height as f64);
                let depth = rng.random_range(0.2..2.0);
                let t = k.ray(u, v) * depth;
                let pose = Pose::new(random_rotation(&mut rng), t);
                let score = rng.random_range(0.3..0.7);
                out.push(Detection::new(class, FALSE_POSITIVE_ID_BASE, pose, score));
            }
        }
        Ok(out)
    }

    fn needs_image(&self) -> bool {
        false
    }
}

/// Replays detections recorded earlier (or produced by an external
/// estimator). Views absent from the log yield no detections.
#[derive(Clone, Debug, Default)]
pub struct RecordedProvider {
    pub log: DetectionLog,
}

impl RecordedProvider {
    pub fn new(log: DetectionLog) -> Self {
        Self { log }
    }
}

impl PoseProvider for RecordedProvider {
    fn estimate(&self, view: &ViewRecord, _image: Option<&RgbImage>) -> Result<Vec<Detection>, PairgenError> {
        let dets = self.log.get(&view.scene_id, view.view_id).unwrap_or(&[]);
        if let Some(bad) = dets.iter().find(|d| !d.is_valid()) {
            return Err(PairgenError::View {
                view_id: view.view_id,
                reason: format!("recorded detection of instance {} is invalid", bad.instance_id),
            });
        }
        Ok(dets.to_vec())
    }

    fn needs_image(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use instyle_core::{CameraIntrinsics, InstanceLabel};

    fn view(n: u32) -> ViewRecord {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let mut v = ViewRecord::new("s", 3, "images/0003.png", Pose::identity(), k);
        for i in 1..=n {
            v.instances.push(InstanceLabel::new(
                "puck",
                i,
                Pose::from_translation(Vector3::new(0.01 * i as f64, 0.0, 0.5)),
            ));
        }
        v
    }

    #[test]
    fn perfect_mock_returns_ground_truth() {
        let p = MockProvider::new(MockProviderConfig::default()).unwrap();
        let v = view(3);
        let dets = p.estimate(&v, None).unwrap();
        assert_eq!(dets.len(), 3);
        for (d, l) in dets.iter().zip(&v.instances) {
            assert_eq!(d.pose, l.pose);
            assert_eq!(d.instance_id, l.instance_id);
            assert!((0.0..=1.0).contains(&d.score));
        }
    }

    #[test]
    fn faults_are_per_view_deterministic() {
        let cfg = MockProviderConfig {
            sigma_t: 0.01,
            sigma_r: 0.05,
            p_dropout: 0.3,
            p_false_positive: 0.5,
            seed: 9,
        };
        let p = MockProvider::new(cfg).unwrap();
        let v = view(4);
        assert_eq!(p.estimate(&v, None).unwrap(), p.estimate(&v, None).unwrap());
        assert!(p.estimate(&v, None).unwrap().iter().all(Detection::is_valid));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let cfg = MockProviderConfig {
            p_dropout: 1.5,
            ..Default::default()
        };
        assert!(MockProvider::new(cfg).is_err());
    }
}
