//! Loss terms and their gradients.

use crate::error::StylekitError;
use crate::layers::Sequential;
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-7;

/// Rows of `x` (`rows x dim`) scaled to unit length.
pub fn l2_normalize(x: &[f64], dim: usize) -> Vec<f64> {
    x.chunks(dim)
        .flat_map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
            r.iter().map(move |v| v / n)
        })
        .collect()
}

/// Gradient through [`l2_normalize`] given the output gradient `dy`.
pub fn l2_normalize_backward(x: &[f64], dy: &[f64], dim: usize) -> Vec<f64> {
    let mut dx = Vec::with_capacity(x.len());
    for (r, g) in x.chunks(dim).zip(dy.chunks(dim)) {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = norm + NORM_EPS;
        let dot: f64 = r.iter().zip(g).map(|(a, b)| a * b).sum();
        let coef = if norm > 0.0 { dot / (d * d * norm) } else { 0.0 };
        dx.extend(r.iter().zip(g).map(|(v, gi)| gi / d - coef * v));
    }
    dx
}

/// PatchNCE for one image: `m` query and key rows of length `dim`. Row `i`
/// of `keys` is the positive for query `i`; all other rows are negatives.
/// Returns the mean loss with gradients for queries and keys.
pub fn patchnce_loss(
    queries: &[f64],
    keys: &[f64],
    m: usize,
    dim: usize,
    tau: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), StylekitError> {
    if m < 2 {
        return Err(StylekitError::TooFewLocations(m));
    }
    if queries.len() != m * dim || keys.len() != m * dim {
        return Err(StylekitError::Shape(format!(
            "patchnce expects {m}x{dim} features, got {} and {}",
            queries.len(),
            keys.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(StylekitError::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let mut loss = 0.0;
    let mut dq = vec![0.0; m * dim];
    let mut dk = vec![0.0; m * dim];
    let scale = 1.0 / (m as f64 * tau);
    let mut p = vec![0.0; m];
    for i in 0..m {
        let q = &queries[i * dim..(i + 1) * dim];
        for (j, pj) in p.iter_mut().enumerate() {
            let k = &keys[j * dim..(j + 1) * dim];
            *pj = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / tau;
        }
        let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = p.iter().map(|l| (l - max).exp()).sum();
        loss += max + sum.ln() - p[i];
        for pj in p.iter_mut() {
            *pj = (*pj - max).exp() / sum;
        }
        p[i] -= 1.0;
        for (j, &w) in p.iter().enumerate() {
            let k = &keys[j * dim..(j + 1) * dim];
            for d in 0..dim {
                dq[i * dim + d] += scale * w * k[d];
                dk[j * dim + d] += scale * w * q[d];
            }
        }
    }
    Ok((loss / m as f64, dq, dk))
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Non-saturating GAN losses, averaged over the batch:
/// `(mean softplus(-fake), mean softplus(-real) + mean softplus(fake))`.
pub fn gan_losses(real: &[f64], fake: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len().max(1) as f64;
    let g = mean(fake, &|x| softplus(-x));
    let d = mean(real, &|x| softplus(-x)) + mean(fake, &softplus);
    (g, d)
}

/// Gradient of the generator loss with respect to the fake logits.
pub fn gan_generator_grad(fake: &[f64]) -> Vec<f64> {
    let n = fake.len() as f64;
    fake.iter().map(|&x| -sigmoid(-x) / n).collect()
}

/// Gradients of the discriminator loss with respect to real and fake logits.
pub fn gan_discriminator_grad(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nr = real.len() as f64;
    let nf = fake.len() as f64;
    (
        real.iter().map(|&x| -sigmoid(-x) / nr).collect(),
        fake.iter().map(|&x| sigmoid(x) / nf).collect(),
    )
}

/// Mean absolute difference with its gradient with respect to `out`.
pub fn l1_loss(out: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(out.shape, target.shape);
    let n = out.data.len().max(1) as f64;
    let mut grad = Tensor::zeros(out.shape);
    let mut sum = 0.0;
    for ((g, a), b) in grad.data.iter_mut().zip(&out.data).zip(&target.data) {
        let d = a - b;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    (sum / n, grad)
}

/// Per-sample input gradients of a scalar-output network, with the trace
/// and activation gradients needed for second-order terms.
pub struct InputGradient {
    pub trace: Vec<Tensor>,
    pub act_grads: Vec<Tensor>,
}

impl InputGradient {
    pub fn compute(net: &mut Sequential, real: &Tensor) -> Self {
        let trace = net.forward(real.clone(), None);
        let out_shape = trace.last().expect("nonempty").shape;
        assert_eq!(out_shape[1..], [1, 1, 1], "scalar-output network expected");
        let ones = Tensor::filled(out_shape, 1.0);
        let act_grads = net.backward(&trace, Some(&ones), &[], false);
        Self { trace, act_grads }
    }

    pub fn input(&self) -> &Tensor {
        &self.act_grads[0]
    }
}

/// `(gamma / 2) * mean_n ||grad_y D(y_n)||^2`.
pub fn r1_penalty(net: &mut Sequential, real: &Tensor, gamma: f64) -> f64 {
    let ig = InputGradient::compute(net, real);
    r1_value(ig.input(), gamma)
}

fn r1_value(g: &Tensor, gamma: f64) -> f64 {
    let n = g.n().max(1) as f64;
    gamma / 2.0 * g.data.iter().map(|v| v * v).sum::<f64>() / n
}

/// Evaluates the R1 penalty with weight `gamma` and accumulates its exact
/// parameter gradient into `net`. Exact for networks whose nonlinearities
/// are piecewise linear (zero second derivative almost everywhere).
pub fn r1_backward(net: &mut Sequential, real: &Tensor, gamma: f64) -> f64 {
    let ig = InputGradient::compute(net, real);
    let value = r1_value(ig.input(), gamma);
    let mut eps = ig.input().clone();
    eps.scale(gamma / real.n().max(1) as f64);
    net.tangent_backward(&ig.trace, &ig.act_grads, eps);
    value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }

    #[test]
    fn normalize_gradient_matches_finite_differences() {
        let x = [0.3, -1.2, 0.5, 2.0, 0.1, -0.4];
        let w = [0.7, 0.2, -0.9, 0.4, 1.1, -0.3];
        let dx = l2_normalize_backward(&x, &w, 3);
        let f = |x: &[f64]| -> f64 { l2_normalize(x, 3).iter().zip(&w).map(|(a, b)| a * b).sum() };
        for i in 0..6 {
            let mut xp = x;
            xp[i] += 1e-6;
            let mut xm = x;
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn l1_of_shifted_output() {
        let y = Tensor::from_vec([1, 3, 2, 2], (0..12).map(|i| i as f64 / 12.0).collect());
        let mut gy = y.clone();
        gy.data.iter_mut().for_each(|v| *v += 0.1);
        assert!((l1_loss(&gy, &y).0 - 0.1).abs() < 1e-12);
        assert_eq!(l1_loss(&y, &y).0, 0.0);
    }
}
