//! Generator, discriminator and projection head.

use rand::Rng;

use crate::layers::{Conv2d, Layer, Linear, Param, Sequential, Trace};
use crate::tensor::Tensor;

pub const LEAK: f64 = 0.2;

/// Residual encoder/decoder: `G(x) = x + body(x)`. The last convolution
/// starts at zero, so a fresh generator is the identity map. Inputs must
/// have even height and width.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub body: Sequential,
    /// Activation indices used as PatchNCE feature layers.
    pub taps: Vec<usize>,
}

impl Generator {
    pub fn new(width: usize, depth: usize, rng: &mut impl Rng) -> Self {
        let gain = (2.0f64 / (1.0 + LEAK * LEAK)).sqrt();
        let mut layers = vec![
            Layer::Conv(Conv2d::new(3, width, 3, 1, gain, rng)),
            Layer::LeakyRelu(LEAK),
            Layer::Conv(Conv2d::new(width, width, 3, 2, gain, rng)),
            Layer::LeakyRelu(LEAK),
        ];
        for _ in 0..depth {
            layers.push(Layer::Conv(Conv2d::new(width, width, 3, 1, gain, rng)));
            layers.push(Layer::LeakyRelu(LEAK));
        }
        layers.push(Layer::Upsample2x);
        layers.push(Layer::Conv(Conv2d::new(width, width, 3, 1, gain, rng)));
        layers.push(Layer::LeakyRelu(LEAK));
        layers.push(Layer::Conv(Conv2d::new(width, 3, 3, 1, 0.0, rng)));
        let mut taps = vec![0, 2, 4];
        if depth > 0 {
            taps.push(4 + 2 * depth);
        }
        Self {
            body: Sequential::new(layers),
            taps,
        }
    }

    pub fn last_tap(&self) -> usize {
        *self.taps.last().expect("taps nonempty")
    }

    /// Full forward pass; returns the body trace and `x + body(x)`.
    pub fn forward(&self, x: &Tensor) -> (Trace, Tensor) {
        assert!(x.h() % 2 == 0 && x.w() % 2 == 0, "generator input needs even size");
        let trace = self.body.forward(x.clone(), None);
        let out = x.add(trace.last().expect("nonempty"));
        (trace, out)
    }

    pub fn translate(&self, x: &Tensor) -> Tensor {
        self.forward(x).1
    }

    /// Encoder activations up to the last tap.
    pub fn encode(&self, x: &Tensor) -> Trace {
        self.body.forward(x.clone(), Some(self.last_tap()))
    }

    /// Backward through `x + body(x)`. `grad_out` is the gradient at the
    /// output; `inject` adds gradients at body activations. Returns the
    /// input gradient.
    pub fn backward(
        &mut self,
        trace: &Trace,
        grad_out: Option<&Tensor>,
        inject: &[(usize, &Tensor)],
        param_grads: bool,
    ) -> Tensor {
        let grads = self.body.backward(trace, grad_out, inject, param_grads);
        let mut dx = grads.into_iter().next().expect("input grad");
        if let Some(g) = grad_out {
            if trace.len() == self.body.len() + 1 {
                dx.add_assign(g);
            }
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        self.body.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.body.params_mut()
    }
}

/// Strided convolutional critic ending in global pooling and a scalar logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Sequential,
}

impl Discriminator {
    pub fn new(width: usize, depth: usize, rng: &mut impl Rng) -> Self {
        let gain = (2.0f64 / (1.0 + LEAK * LEAK)).sqrt();
        let mut layers = vec![
            Layer::Conv(Conv2d::new(3, width, 3, 1, gain, rng)),
            Layer::LeakyRelu(LEAK),
        ];
        for _ in 0..depth {
            layers.push(Layer::Conv(Conv2d::new(width, width, 3, 2, gain, rng)));
            layers.push(Layer::LeakyRelu(LEAK));
        }
        layers.push(Layer::AvgPool);
        layers.push(Layer::Linear(Linear::new(width, 1, 1.0, rng)));
        Self {
            net: Sequential::new(layers),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self {
            net: Sequential::new(layers),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Trace {
        self.net.forward(x.clone(), None)
    }

    pub fn logits(&self, x: &Tensor) -> Vec<f64> {
        self.forward(x).pop().expect("nonempty").data
    }

    /// Backward from per-sample logit gradients; returns the input gradient.
    pub fn backward(&mut self, trace: &Trace, dlogits: &[f64], param_grads: bool) -> Tensor {
        let g = Tensor::from_vec([dlogits.len(), 1, 1, 1], dlogits.to_vec());
        self.net
            .backward(trace, Some(&g), &[], param_grads)
            .into_iter()
            .next()
            .expect("input grad")
    }

    pub fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}

/// One two-layer perceptron per feature tap, applied to each sampled
/// location independently.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub mlps: Vec<Sequential>,
}

impl ProjectionHead {
    pub fn new(in_channels: &[usize], width: usize, rng: &mut impl Rng) -> Self {
        let mlps = in_channels
            .iter()
            .map(|&c| {
                Sequential::new(vec![
                    Layer::Linear(Linear::new(c, width, 2f64.sqrt(), rng)),
                    Layer::Relu,
                    Layer::Linear(Linear::new(width, width, 1.0, rng)),
                ])
            })
            .collect();
        Self { mlps }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.mlps.iter().flat_map(|m| m.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.mlps.iter_mut().flat_map(|m| m.params_mut()).collect()
    }
}

/// Channels at each generator tap, in tap order.
pub fn tap_channels(gen: &Generator, width: usize) -> Vec<usize> {
    gen.taps.iter().map(|&t| if t == 0 { 3 } else { width }).collect()
}

/// Gathers features at flat spatial `locations` (shared across the batch)
/// into `[n * m, c, 1, 1]`, sample-major.
pub fn gather(features: &Tensor, locations: &[usize]) -> Tensor {
    let (n, c, hw) = (features.n(), features.c(), features.h() * features.w());
    let m = locations.len();
    let mut out = Tensor::zeros([n * m, c, 1, 1]);
    for i in 0..n {
        let s = features.sample(i);
        for (j, &loc) in locations.iter().enumerate() {
            let row = out.sample_mut(i * m + j);
            for (ch, r) in row.iter_mut().enumerate() {
                *r = s[ch * hw + loc];
            }
        }
    }
    out
}

/// Adjoint of [`gather`].
pub fn scatter(grad: &Tensor, locations: &[usize], shape: [usize; 4]) -> Tensor {
    let mut out = Tensor::zeros(shape);
    let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
    let m = locations.len();
    for i in 0..n {
        let dst = out.sample_mut(i);
        for (j, &loc) in locations.iter().enumerate() {
            let row = grad.sample(i * m + j);
            for ch in 0..c {
                dst[ch * hw + loc] += row[ch];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fresh_generator_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = Generator::new(8, 1, &mut rng);
        let x = Tensor::from_vec([2, 3, 8, 6], (0..288).map(|i| (i as f64 * 0.37).sin()).collect());
        assert_eq!(g.translate(&x), x);
        assert_eq!(g.taps, vec![0, 2, 4, 6]);
        let enc = g.encode(&x);
        assert_eq!(enc.len(), 7);
        assert_eq!(enc[4].shape, [2, 8, 4, 3]);
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut g = Generator::new(4, 1, &mut rng);
        // Give the zero-initialized output layer some weight so the body matters.
        for p in g.params_mut() {
            for (i, v) in p.value.iter_mut().enumerate() {
                if *v == 0.0 {
                    *v = 0.05 * ((i as f64) * 1.3).cos();
                }
            }
        }
        let x = Tensor::from_vec([1, 3, 4, 4], (0..48).map(|i| (i as f64 * 0.71).sin()).collect());
        let w: Vec<f64> = (0..48).map(|i| (i as f64 * 0.23).cos()).collect();
        let f = |g: &Generator, x: &Tensor| -> f64 { g.translate(x).data.iter().zip(&w).map(|(a, b)| a * b).sum() };
        let (trace, _) = g.forward(&x);
        let dx = g.backward(&trace, Some(&Tensor::from_vec(x.shape, w.clone())), &[], true);
        let h = 1e-6;
        for i in 0..48 {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fd = (f(&g, &xp) - f(&g, &xm)) / (2.0 * h);
            assert!((fd - dx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        let x = Tensor::from_vec([2, 3, 2, 2], (0..24).map(|i| i as f64).collect());
        let locs = [3, 0];
        let g = gather(&x, &locs);
        assert_eq!(g.shape, [4, 3, 1, 1]);
        assert_eq!(g.sample(1), &[0.0, 4.0, 8.0]);
        let y = Tensor::from_vec(g.shape, (0..12).map(|i| (i as f64).sqrt()).collect());
        let lhs: f64 = g.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let back = scatter(&y, &locs, x.shape);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
