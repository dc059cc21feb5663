//! TransNet state, the generator and discriminator updates, and the
//! training loop.

use std::path::{Path, PathBuf};

use instyle_core::rng::substream;
use instyle_core::{config_hash, FloatImage};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::StylekitError;
use crate::layers::{Sequential, Trace};
use crate::losses::{
    gan_discriminator_grad, gan_generator_grad, gan_losses, l1_loss, l2_normalize, l2_normalize_backward,
    patchnce_loss, r1_backward,
};
use crate::nets::{gather, scatter, tap_channels, Discriminator, Generator, ProjectionHead};
use crate::optim::Adam;
use crate::pipeline::{draw_patch, CropPair, PatchSpec};
use crate::tensor::Tensor;

/// Operands of the L1 term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Mode {
    /// `|G(y) - y|`: the generator should leave real-style input unchanged.
    Identity,
    /// `|G(x) - y|` with both patches cut at the same scale and position.
    Paired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransNetConfig {
    pub gen_width: usize,
    pub gen_depth: usize,
    pub disc_width: usize,
    pub disc_depth: usize,
    pub head_width: usize,
    /// Locations sampled per feature layer for the contrastive loss.
    pub nce_patches: usize,
    pub tau: f64,
    pub r1_gamma: f64,
    pub r1_interval: u64,
    pub lambda_l1: f64,
    pub l1_mode: L1Mode,
    pub lr_g: f64,
    pub lr_d: f64,
    pub betas: (f64, f64),
    pub batch: usize,
    pub epochs: usize,
    /// Defaults to one pass over the crops per epoch.
    pub steps_per_epoch: Option<usize>,
    pub patch: PatchSpec,
    pub seed: u64,
}

impl Default for TransNetConfig {
    fn default() -> Self {
        Self {
            gen_width: 32,
            gen_depth: 2,
            disc_width: 32,
            disc_depth: 3,
            head_width: 64,
            nce_patches: 64,
            tau: 0.07,
            r1_gamma: 1.0,
            r1_interval: 16,
            lambda_l1: 1.0,
            l1_mode: L1Mode::Identity,
            lr_g: 2e-3,
            lr_d: 2e-3,
            betas: (0.0, 0.99),
            batch: 16,
            epochs: 16,
            steps_per_epoch: None,
            patch: PatchSpec::default(),
            seed: 0,
        }
    }
}

impl TransNetConfig {
    /// Small network and short schedule for CPU demos and tests.
    pub fn toy() -> Self {
        Self {
            gen_width: 16,
            gen_depth: 1,
            disc_width: 16,
            disc_depth: 3,
            head_width: 32,
            nce_patches: 32,
            batch: 8,
            steps_per_epoch: Some(16),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StylekitError> {
        let bad = |m: &str| Err(StylekitError::InvalidConfig(m.into()));
        if self.gen_width == 0 || self.disc_width == 0 || self.head_width == 0 {
            return bad("network widths must be >= 1");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be > 0");
        }
        if !(self.r1_gamma >= 0.0) {
            return bad("r1_gamma must be >= 0");
        }
        if self.r1_interval == 0 {
            return bad("r1_interval must be >= 1");
        }
        if !(self.lambda_l1 >= 0.0) {
            return bad("lambda_l1 must be >= 0");
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return bad("betas must lie in [0, 1)");
        }
        if self.batch == 0 || self.nce_patches < 2 {
            return bad("batch must be >= 1 and nce_patches >= 2");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be >= 1");
        }
        self.patch.validate()
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Loss components of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLosses {
    pub step: u64,
    pub nce_x: f64,
    pub nce_y: f64,
    pub g_adv: f64,
    pub l1: f64,
    pub d_adv: f64,
    /// Only present on steps where the lazy penalty ran.
    pub r1: Option<f64>,
}

impl StepLosses {
    fn first_bad(&self) -> Option<&'static str> {
        let terms = [
            ("nce_x", self.nce_x),
            ("nce_y", self.nce_y),
            ("g_adv", self.g_adv),
            ("l1", self.l1),
            ("d_adv", self.d_adv),
            ("r1", self.r1.unwrap_or(0.0)),
        ];
        terms.iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

/// Synthetic and real patch batches.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchBatch {
    pub x: Tensor,
    pub y: Tensor,
}

/// Generator, discriminator, projection head and their optimizers for one
/// object class.
#[derive(Clone, Debug, PartialEq)]
pub struct TransNet {
    pub class_name: String,
    pub config: TransNetConfig,
    pub gen: Generator,
    pub disc: Discriminator,
    pub head: ProjectionHead,
    pub step: u64,
    opt_g: Adam,
    opt_d: Adam,
    opt_h: Adam,
}

impl TransNet {
    pub fn new(class_name: &str, config: TransNetConfig) -> Result<Self, StylekitError> {
        config.validate()?;
        let seed = config.seed;
        let gen = Generator::new(config.gen_width, config.gen_depth, &mut substream(seed, &["init", "G"]));
        let disc = Discriminator::new(config.disc_width, config.disc_depth, &mut substream(seed, &["init", "D"]));
        let head = ProjectionHead::new(
            &tap_channels(&gen, config.gen_width),
            config.head_width,
            &mut substream(seed, &["init", "H"]),
        );
        Ok(Self {
            class_name: class_name.to_string(),
            opt_g: Adam::new(config.lr_g, config.betas),
            opt_d: Adam::new(config.lr_d, config.betas),
            opt_h: Adam::new(config.lr_g, config.betas),
            config,
            gen,
            disc,
            head,
            step: 0,
        })
    }

    pub fn translate(&self, x: &Tensor) -> Tensor {
        self.gen.translate(x)
    }

    /// Location indices per tap for the contrastive loss at this step.
    fn nce_locations(&self, trace: &Trace, domain: &str) -> Vec<Vec<usize>> {
        let step = self.step.to_string();
        self.gen
            .taps
            .iter()
            .enumerate()
            .map(|(l, &t)| {
                let hw = trace[t].h() * trace[t].w();
                let m = self.config.nce_patches.min(hw);
                let mut rng = substream(self.config.seed, &["nce", &step, domain, &l.to_string()]);
                sample_indices(&mut rng, hw, m).into_vec()
            })
            .collect()
    }

    /// Contrastive loss between key activations (source) and query
    /// activations (encoded translation). Accumulates projection-head
    /// gradients and returns the loss with injections for the query trace.
    fn patchnce_term(
        &mut self,
        key_head: &ProjectionHead,
        keys: &Trace,
        queries: &Trace,
        locations: &[Vec<usize>],
    ) -> Result<(f64, Vec<(usize, Tensor)>), StylekitError> {
        let taps = self.gen.taps.clone();
        let n = keys[0].n();
        let dim = self.config.head_width;
        let weight = 1.0 / (n * taps.len()) as f64;
        let mut total = 0.0;
        let mut inject = Vec::with_capacity(taps.len());
        for (l, &t) in taps.iter().enumerate() {
            let locs = &locations[l];
            let m = locs.len();
            let k_raw = key_head.mlps[l].forward(gather(&keys[t], locs), None).pop().expect("nonempty");
            let mlp: &mut Sequential = &mut self.head.mlps[l];
            let k = l2_normalize(&k_raw.data, dim);
            let q_trace = mlp.forward(gather(&queries[t], locs), None);
            let q_raw = q_trace.last().expect("nonempty");
            let q = l2_normalize(&q_raw.data, dim);
            let mut dq = vec![0.0; q.len()];
            for i in 0..n {
                let span = i * m * dim..(i + 1) * m * dim;
                let (loss, g, _) = patchnce_loss(&q[span.clone()], &k[span.clone()], m, dim, self.config.tau)?;
                total += weight * loss;
                for (d, gi) in dq[span].iter_mut().zip(g) {
                    *d = weight * gi;
                }
            }
            let dq_raw = Tensor::from_vec(q_raw.shape, l2_normalize_backward(&q_raw.data, &dq, dim));
            let dfeat = mlp.backward(&q_trace, Some(&dq_raw), &[], true).swap_remove(0);
            inject.push((t, scatter(&dfeat, locs, queries[t].shape)));
        }
        Ok((total, inject))
    }

    /// One generator update. Returns `(nce_x, nce_y, g_adv, l1)`.
    pub fn generator_step(&mut self, batch: &PatchBatch) -> Result<(f64, f64, f64, f64), StylekitError> {
        let terms = self.generator_gradients(batch)?;
        self.opt_g.step(self.gen.params_mut());
        self.opt_h.step(self.head.params_mut());
        Ok(terms)
    }

    /// Accumulates gradients of `nce_x + nce_y + g_adv + lambda_l1 * l1` into
    /// the generator and projection head without updating them.
    pub fn generator_gradients(&mut self, batch: &PatchBatch) -> Result<(f64, f64, f64, f64), StylekitError> {
        self.generator_gradients_keyed(batch, None)
    }

    /// As [`generator_gradients`](Self::generator_gradients) with the
    /// contrastive keys computed by `key_gen` and `key_head` instead of the
    /// current networks. Keys are constants either way; this makes that
    /// explicit for gradient checks.
    pub fn generator_gradients_with_keys(
        &mut self,
        batch: &PatchBatch,
        key_gen: &Generator,
        key_head: &ProjectionHead,
    ) -> Result<(f64, f64, f64, f64), StylekitError> {
        self.generator_gradients_keyed(batch, Some((key_gen, key_head)))
    }

    fn generator_gradients_keyed(
        &mut self,
        batch: &PatchBatch,
        keys: Option<(&Generator, &ProjectionHead)>,
    ) -> Result<(f64, f64, f64, f64), StylekitError> {
        let (tx, fx) = self.gen.forward(&batch.x);
        let (ty, fy) = self.gen.forward(&batch.y);
        let (kx, ky, key_head) = match keys {
            Some((g, h)) => (g.encode(&batch.x), g.encode(&batch.y), h.clone()),
            None => (tx.clone(), ty.clone(), self.head.clone()),
        };

        let d_trace = self.disc.forward(&fx);
        let logits = d_trace.last().expect("nonempty").data.clone();
        let (g_adv, _) = gan_losses(&[], &logits);
        let mut grad_fx = self.disc.backward(&d_trace, &gan_generator_grad(&logits), false);

        let qx = self.gen.encode(&fx);
        let locs = self.nce_locations(&tx, "x");
        let (nce_x, inj_x) = self.patchnce_term(&key_head, &kx, &qx, &locs)?;
        let inj: Vec<(usize, &Tensor)> = inj_x.iter().map(|(i, t)| (*i, t)).collect();
        grad_fx.add_assign(&self.gen.backward(&qx, None, &inj, true));

        let qy = self.gen.encode(&fy);
        let locs = self.nce_locations(&ty, "y");
        let (nce_y, inj_y) = self.patchnce_term(&key_head, &ky, &qy, &locs)?;
        let inj: Vec<(usize, &Tensor)> = inj_y.iter().map(|(i, t)| (*i, t)).collect();
        let mut grad_fy = self.gen.backward(&qy, None, &inj, true);

        let l1 = match self.config.l1_mode {
            L1Mode::Identity => {
                let (l1, mut g) = l1_loss(&fy, &batch.y);
                g.scale(self.config.lambda_l1);
                grad_fy.add_assign(&g);
                l1
            }
            L1Mode::Paired => {
                let (l1, mut g) = l1_loss(&fx, &batch.y);
                g.scale(self.config.lambda_l1);
                grad_fx.add_assign(&g);
                l1
            }
        };

        self.gen.backward(&tx, Some(&grad_fx), &[], true);
        self.gen.backward(&ty, Some(&grad_fy), &[], true);
        Ok((nce_x, nce_y, g_adv, l1))
    }

    /// One discriminator update. Returns `(d_adv, r1)`, with `r1` present on
    /// lazy-penalty steps.
    pub fn discriminator_step(&mut self, batch: &PatchBatch) -> (f64, Option<f64>) {
        let out = self.discriminator_gradients(batch);
        self.opt_d.step(self.disc.params_mut());
        out
    }

    /// Accumulates discriminator gradients for this step without updating.
    pub fn discriminator_gradients(&mut self, batch: &PatchBatch) -> (f64, Option<f64>) {
        let fake = self.gen.translate(&batch.x);
        let real_trace = self.disc.forward(&batch.y);
        let fake_trace = self.disc.forward(&fake);
        let real = real_trace.last().expect("nonempty").data.clone();
        let fake_logits = fake_trace.last().expect("nonempty").data.clone();
        let (_, d_adv) = gan_losses(&real, &fake_logits);
        let (dr, df) = gan_discriminator_grad(&real, &fake_logits);
        self.disc.backward(&real_trace, &dr, true);
        self.disc.backward(&fake_trace, &df, true);
        let r1 = if self.config.r1_gamma > 0.0 && self.step % self.config.r1_interval == 0 {
            let interval = self.config.r1_interval as f64;
            let scaled = r1_backward(&mut self.disc.net, &batch.y, self.config.r1_gamma * interval);
            Some(scaled / interval)
        } else {
            None
        };
        (d_adv, r1)
    }

    /// Discriminator then generator update on one batch.
    pub fn train_step(&mut self, batch: &PatchBatch) -> Result<StepLosses, StylekitError> {
        let (d_adv, r1) = self.discriminator_step(batch);
        let (nce_x, nce_y, g_adv, l1) = self.generator_step(batch)?;
        let losses = StepLosses {
            step: self.step,
            nce_x,
            nce_y,
            g_adv,
            l1,
            d_adv,
            r1,
        };
        self.step += 1;
        Ok(losses)
    }
}

/// Draws the batch for `step`. Each sample uses its own random stream, so
/// the result does not depend on how the work is split across threads.
pub fn make_batch(
    crops: &[CropPair],
    config: &TransNetConfig,
    step: u64,
    workers: usize,
) -> Result<PatchBatch, StylekitError> {
    let step_label = step.to_string();
    let indices: Vec<usize> = (0..config.batch).collect();
    let samples = instyle_core::par::par_map(&indices, workers, |&i| -> Result<_, StylekitError> {
        let mut rng = substream(config.seed, &["batch", &step_label, &i.to_string()]);
        let pair = &crops[rng.random_range(0..crops.len())];
        let (x, prov) = draw_patch(&pair.synthetic, &mut rng, &config.patch);
        let y = match config.l1_mode {
            L1Mode::Identity => draw_patch(&pair.real, &mut rng, &config.patch).0,
            L1Mode::Paired => {
                let p = config.patch.patch_size as usize;
                pair.real.resize_window(
                    prov.scaled_width,
                    prov.scaled_height,
                    prov.x as isize - prov.pad_x as isize,
                    prov.y as isize - prov.pad_y as isize,
                    p,
                    p,
                )
            }
        };
        Ok((x, y))
    })?;
    let (xs, ys): (Vec<FloatImage>, Vec<FloatImage>) = samples.into_iter().unzip();
    Ok(PatchBatch {
        x: Tensor::from_images(&xs),
        y: Tensor::from_images(&ys),
    })
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub workers: usize,
    /// Receives sample translations and the abort snapshot.
    pub out_dir: Option<PathBuf>,
}

/// Trains one class network on its instance crops.
pub fn train_transnet(
    class_name: &str,
    crops: &[CropPair],
    config: &TransNetConfig,
    options: &TrainOptions,
) -> Result<(TransNet, Vec<StepLosses>), StylekitError> {
    if crops.is_empty() {
        return Err(StylekitError::NoPairs(class_name.to_string()));
    }
    let mut net = TransNet::new(class_name, config.clone())?;
    let steps_per_epoch = config
        .steps_per_epoch
        .unwrap_or_else(|| crops.len().div_ceil(config.batch).max(1));
    let mut history = Vec::with_capacity(config.epochs * steps_per_epoch);
    for epoch in 0..config.epochs {
        for _ in 0..steps_per_epoch {
            let batch = make_batch(crops, config, net.step, options.workers)?;
            let losses = net.train_step(&batch)?;
            if let Some(term) = losses.first_bad() {
                let snapshot = match &options.out_dir {
                    Some(dir) => Some(write_snapshot(&net, &history, dir)?),
                    None => None,
                };
                return Err(StylekitError::NonFinite {
                    term,
                    step: losses.step,
                    snapshot,
                });
            }
            history.push(losses);
        }
        if let Some(l) = history.last() {
            log::info!(
                "{class_name}: epoch {}/{} step {} nce {:.3}/{:.3} g_adv {:.3} l1 {:.4} d_adv {:.3}",
                epoch + 1,
                config.epochs,
                net.step,
                l.nce_x,
                l.nce_y,
                l.g_adv,
                l.l1,
                l.d_adv
            );
        }
        if let Some(dir) = &options.out_dir {
            write_samples(&net, crops, &dir.join("samples").join(format!("epoch_{:03}.png", epoch + 1)))?;
        }
    }
    Ok((net, history))
}

fn write_snapshot(net: &TransNet, history: &[StepLosses], dir: &Path) -> Result<PathBuf, StylekitError> {
    let snap = dir.join("snapshot");
    crate::weights::save_weights(net, &snap.join("weights.istw"))?;
    write_history(history, &snap.join("history.csv"))?;
    Ok(snap)
}

/// Grid with the first few synthetic crops on top and their translations
/// below, each resized to the patch size.
pub fn write_samples(net: &TransNet, crops: &[CropPair], path: &Path) -> Result<(), StylekitError> {
    let p = net.config.patch.patch_size as usize;
    let count = crops.len().min(4);
    let inputs: Vec<FloatImage> = crops[..count].iter().map(|c| c.synthetic.resize(p, p)).collect();
    let outputs = net.translate(&Tensor::from_images(&inputs));
    let mut grid = FloatImage::new(3, p * count, 2 * p);
    for (i, img) in inputs.iter().enumerate() {
        let out = outputs.to_image(i);
        for c in 0..3 {
            for y in 0..p {
                for x in 0..p {
                    grid.set(c, i * p + x, y, img.get(c, x, y));
                    grid.set(c, i * p + x, p + y, out.get(c, x, y));
                }
            }
        }
    }
    instyle_core::io::save_rgb(&grid.to_rgb(), path)?;
    Ok(())
}

pub fn write_history(history: &[StepLosses], path: &Path) -> Result<(), StylekitError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StylekitError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "nce_x", "nce_y", "g_adv", "l1", "d_adv", "r1"])?;
    for h in history {
        w.write_record([
            h.step.to_string(),
            h.nce_x.to_string(),
            h.nce_y.to_string(),
            h.g_adv.to_string(),
            h.l1.to_string(),
            h.d_adv.to_string(),
            h.r1.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| StylekitError::io(path, e))?;
    Ok(())
}
