//! Layers with explicit forward, backward and tangent passes.
//!
//! `backward` maps an output gradient to an input gradient and optionally
//! accumulates parameter gradients. `tangent` applies the layer's linear
//! part (no bias, activation slopes frozen at the cached input) to a
//! perturbation; together with `tangent_param_grad` this gives exact
//! second-order terms for piecewise-linear networks, which is what the R1
//! penalty needs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{gemm, Tensor};

/// Trainable parameter with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_c, in_c * kernel * kernel]`
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    /// He-style normal init scaled by `gain`.
    pub fn new(in_c: usize, out_c: usize, kernel: usize, stride: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let fan_in = (in_c * kernel * kernel) as f64;
        let std = gain / fan_in.sqrt();
        let weight = if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..out_c * in_c * kernel * kernel).map(|_| normal.sample(rng)).collect()
        } else {
            vec![0.0; out_c * in_c * kernel * kernel]
        };
        Self {
            in_c,
            out_c,
            kernel,
            stride,
            pad: kernel / 2,
            weight: Param::new(weight),
            bias: Param::new(vec![0.0; out_c]),
        }
    }

    fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let (oh, ow) = self.out_size(h, w);
        let p = oh * ow;
        let k = self.kernel;
        for c in 0..self.in_c {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, dx: &mut [f64]) {
        let (oh, ow) = self.out_size(h, w);
        let p = oh * ow;
        let k = self.kernel;
        for c in 0..self.in_c {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn apply(&self, x: &Tensor, with_bias: bool) -> Tensor {
        assert_eq!(x.c(), self.in_c, "conv input channels");
        let (h, w) = (x.h(), x.w());
        let (oh, ow) = self.out_size(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.kernel * self.kernel;
        let mut cols = vec![0.0; kk * p];
        let mut y = Tensor::zeros([x.n(), self.out_c, oh, ow]);
        for i in 0..x.n() {
            self.im2col(x.sample(i), h, w, &mut cols);
            let out = y.sample_mut(i);
            if with_bias {
                for (o, chunk) in out.chunks_mut(p).enumerate() {
                    chunk.fill(self.bias.value[o]);
                }
            }
            gemm(self.out_c, kk, p, &self.weight.value, false, &cols, false, 1.0, out);
        }
        y
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool) -> Tensor {
        let (h, w) = (x.h(), x.w());
        let (oh, ow) = self.out_size(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.kernel * self.kernel;
        let mut cols = vec![0.0; kk * p];
        let mut dcols = vec![0.0; kk * p];
        let mut dx = Tensor::zeros(x.shape);
        for i in 0..x.n() {
            let g = dy.sample(i);
            if param_grads {
                self.im2col(x.sample(i), h, w, &mut cols);
                gemm(self.out_c, p, kk, g, false, &cols, true, 1.0, &mut self.weight.grad);
                for (o, chunk) in g.chunks(p).enumerate() {
                    self.bias.grad[o] += chunk.iter().sum::<f64>();
                }
            }
            gemm(kk, self.out_c, p, &self.weight.value, true, g, false, 0.0, &mut dcols);
            self.col2im(&dcols, h, w, dx.sample_mut(i));
        }
        dx
    }

    fn weight_grad_only(&mut self, x: &Tensor, dy: &Tensor) {
        let (h, w) = (x.h(), x.w());
        let (oh, ow) = self.out_size(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.kernel * self.kernel;
        let mut cols = vec![0.0; kk * p];
        for i in 0..x.n() {
            self.im2col(x.sample(i), h, w, &mut cols);
            gemm(self.out_c, p, kk, dy.sample(i), false, &cols, true, 1.0, &mut self.weight.grad);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// `[out_f, in_f]`
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(in_f: usize, out_f: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let std = gain / (in_f as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            in_f,
            out_f,
            weight: Param::new((0..in_f * out_f).map(|_| normal.sample(rng)).collect()),
            bias: Param::new(vec![0.0; out_f]),
        }
    }

    fn apply(&self, x: &Tensor, with_bias: bool) -> Tensor {
        assert_eq!(x.sample_len(), self.in_f, "linear input features");
        let n = x.n();
        let mut y = Tensor::zeros([n, self.out_f, 1, 1]);
        if with_bias {
            for i in 0..n {
                y.sample_mut(i).copy_from_slice(&self.bias.value);
            }
        }
        // y[n, out] = x[n, in] * W^T
        gemm(n, self.in_f, self.out_f, &x.data, false, &self.weight.value, true, 1.0, &mut y.data);
        y
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool) -> Tensor {
        let n = x.n();
        if param_grads {
            // dW[out, in] += dy^T[out, n] * x[n, in]
            gemm(self.out_f, n, self.in_f, &dy.data, true, &x.data, false, 1.0, &mut self.weight.grad);
            for i in 0..n {
                for (b, g) in self.bias.grad.iter_mut().zip(dy.sample(i)) {
                    *b += g;
                }
            }
        }
        let mut dx = Tensor::zeros(x.shape);
        gemm(n, self.out_f, self.in_f, &dy.data, false, &self.weight.value, false, 0.0, &mut dx.data);
        dx
    }

    fn weight_grad_only(&mut self, x: &Tensor, dy: &Tensor) {
        gemm(self.out_f, x.n(), self.in_f, &dy.data, true, &x.data, false, 1.0, &mut self.weight.grad);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Linear(Linear),
    /// Negative slope.
    LeakyRelu(f64),
    Relu,
    /// Nearest-neighbor 2x upsampling.
    Upsample2x,
    /// Global average pool to `[n, c, 1, 1]`.
    AvgPool,
}

fn slope_mask(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv(c) => c.apply(x, true),
            Layer::Linear(l) => l.apply(x, true),
            Layer::LeakyRelu(s) => Tensor::from_vec(x.shape, x.data.iter().map(|&v| v * slope_mask(v, *s)).collect()),
            Layer::Relu => Tensor::from_vec(x.shape, x.data.iter().map(|&v| v.max(0.0)).collect()),
            Layer::Upsample2x => upsample(x),
            Layer::AvgPool => avg_pool(x),
        }
    }

    /// Input gradient for output gradient `dy` at cached input `x`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool) -> Tensor {
        match self {
            Layer::Conv(c) => c.backward(x, dy, param_grads),
            Layer::Linear(l) => l.backward(x, dy, param_grads),
            Layer::LeakyRelu(s) => {
                let s = *s;
                Tensor::from_vec(
                    x.shape,
                    x.data.iter().zip(&dy.data).map(|(&v, &g)| g * slope_mask(v, s)).collect(),
                )
            }
            Layer::Relu => Tensor::from_vec(
                x.shape,
                x.data.iter().zip(&dy.data).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
            ),
            Layer::Upsample2x => {
                let mut dx = Tensor::zeros(x.shape);
                let (h, w) = (x.h(), x.w());
                for nc in 0..x.n() * x.c() {
                    let src = &dy.data[nc * 4 * h * w..(nc + 1) * 4 * h * w];
                    let dst = &mut dx.data[nc * h * w..(nc + 1) * h * w];
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
                        }
                    }
                }
                dx
            }
            Layer::AvgPool => {
                let hw = x.h() * x.w();
                let mut dx = Tensor::zeros(x.shape);
                for (nc, chunk) in dx.data.chunks_mut(hw).enumerate() {
                    chunk.fill(dy.data[nc] / hw as f64);
                }
                dx
            }
        }
    }

    /// Linear part of the layer applied to `eps`, with activation slopes
    /// taken from the cached input `x`.
    pub fn tangent(&self, x: &Tensor, eps: &Tensor) -> Tensor {
        match self {
            Layer::Conv(c) => c.apply(eps, false),
            Layer::Linear(l) => l.apply(eps, false),
            Layer::LeakyRelu(s) => Tensor::from_vec(
                eps.shape,
                x.data.iter().zip(&eps.data).map(|(&v, &e)| e * slope_mask(v, *s)).collect(),
            ),
            Layer::Relu => Tensor::from_vec(
                eps.shape,
                x.data.iter().zip(&eps.data).map(|(&v, &e)| if v > 0.0 { e } else { 0.0 }).collect(),
            ),
            Layer::Upsample2x => upsample(eps),
            Layer::AvgPool => avg_pool(eps),
        }
    }

    /// Accumulates the weight gradient of `<dy, W * eps>` (bias excluded).
    pub fn tangent_param_grad(&mut self, eps: &Tensor, dy: &Tensor) {
        match self {
            Layer::Conv(c) => c.weight_grad_only(eps, dy),
            Layer::Linear(l) => l.weight_grad_only(eps, dy),
            _ => {}
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }
}

fn upsample(x: &Tensor) -> Tensor {
    let (h, w) = (x.h(), x.w());
    let mut y = Tensor::zeros([x.n(), x.c(), 2 * h, 2 * w]);
    for nc in 0..x.n() * x.c() {
        let src = &x.data[nc * h * w..(nc + 1) * h * w];
        let dst = &mut y.data[nc * 4 * h * w..(nc + 1) * 4 * h * w];
        for yy in 0..2 * h {
            for xx in 0..2 * w {
                dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
            }
        }
    }
    y
}

fn avg_pool(x: &Tensor) -> Tensor {
    let hw = x.h() * x.w();
    Tensor::from_vec(
        [x.n(), x.c(), 1, 1],
        x.data.chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect(),
    )
}

/// Ordered stack of layers. A forward pass returns every intermediate
/// activation so that backward passes can start anywhere and accept
/// gradients injected at intermediate points.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

/// `acts[i]` is the input of layer `i`; the last entry is the output of
/// the last layer run.
pub type Trace = Vec<Tensor>;

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Runs the first `upto` layers (all when `None`).
    pub fn forward(&self, x: Tensor, upto: Option<usize>) -> Trace {
        let upto = upto.unwrap_or(self.layers.len()).min(self.layers.len());
        let mut acts = Vec::with_capacity(upto + 1);
        acts.push(x);
        for layer in &self.layers[..upto] {
            let y = layer.forward(acts.last().expect("nonempty"));
            acts.push(y);
        }
        acts
    }

    /// Backpropagates from the end of `trace`. `grad_out` is the gradient at
    /// the last activation (zero when `None`); `inject` adds gradients at
    /// intermediate activations. Returns the gradient at every activation.
    pub fn backward(
        &mut self,
        trace: &Trace,
        grad_out: Option<&Tensor>,
        inject: &[(usize, &Tensor)],
        param_grads: bool,
    ) -> Vec<Tensor> {
        let last = trace.len() - 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; trace.len()];
        grads[last] = Some(grad_out.cloned().unwrap_or_else(|| Tensor::zeros(trace[last].shape)));
        for &(i, g) in inject.iter().filter(|(i, _)| *i == last) {
            debug_assert_eq!(i, last);
            grads[last].as_mut().expect("set above").add_assign(g);
        }
        for i in (0..last).rev() {
            let dy = grads[i + 1].as_ref().expect("filled in order");
            let mut dx = self.layers[i].backward(&trace[i], dy, param_grads);
            for (_, g) in inject.iter().filter(|(j, _)| *j == i) {
                dx.add_assign(g);
            }
            grads[i] = Some(dx);
        }
        grads.into_iter().map(|g| g.expect("all filled")).collect()
    }

    /// Parameter gradient of `<eps0, d(out)/d(in)^T * 1>` style terms: pushes
    /// `eps0` forward through the linear parts along `trace` and, for each
    /// weighted layer, accumulates the weight gradient pairing the pushed
    /// perturbation with `grads[i + 1]` from a previous [`backward`](Self::backward).
    pub fn tangent_backward(&mut self, trace: &Trace, grads: &[Tensor], eps0: Tensor) {
        let mut eps = eps0;
        let last = trace.len() - 1;
        for i in 0..last {
            self.layers[i].tangent_param_grad(&eps, &grads[i + 1]);
            if i + 1 < last {
                eps = self.layers[i].tangent(&trace[i], &eps);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }
}
