//! Reference implementations shared by the integration tests. Nothing here
//! calls into the library's numerics beyond reading plain accessors.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Dyn, LU};
use seqbq::gp::GpPosterior;
use seqbq::kernel::RbfKernel;
use seqbq::mixture::GaussianMixture;

pub fn rbf(k: &RbfKernel, a: &[f64], b: &[f64]) -> f64 {
    let q: f64 = a.iter().zip(b).zip(k.lengthscales()).map(|((x, y), l)| (x - y).powi(2) / l).sum();
    k.amplitude_sq() * (-0.5 * q).exp()
}

/// GP posterior through LU solves of the Gram matrix, refined once.
pub struct DenseGp {
    pub kernel: RbfKernel,
    pub inputs: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    pub alpha: DVector<f64>,
}

impl DenseGp {
    pub fn new(kernel: &RbfKernel, inputs: &[Vec<f64>], outputs: &[f64], noise: f64) -> Self {
        let n = inputs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| rbf(kernel, &inputs[i], &inputs[j]) + if i == j { noise } else { 0.0 });
        let lu = gram.clone().lu();
        let mut gp = Self { kernel: kernel.clone(), inputs: inputs.to_vec(), gram, lu, alpha: DVector::zeros(n) };
        gp.alpha = gp.solve(&DVector::from_column_slice(outputs));
        gp
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut z = self.lu.solve(rhs).expect("invertible Gram matrix");
        let residual = rhs - &self.gram * &z;
        z += self.lu.solve(&residual).expect("invertible Gram matrix");
        z
    }

    pub fn from_posterior(gp: &GpPosterior) -> Self {
        Self::new(gp.kernel(), gp.data().inputs(), gp.data().outputs(), gp.noise().variance() + gp.jitter())
    }

    fn kvec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|p| rbf(&self.kernel, x, p)))
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.kvec(x).dot(&self.alpha)
    }

    pub fn cov(&self, a: &[f64], b: &[f64]) -> f64 {
        rbf(&self.kernel, a, b) - self.kvec(a).dot(&self.solve(&self.kvec(b)))
    }
}

/// Composite Simpson rule on `[lo, hi]` with `panels` (even) subintervals.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Density of a 1-d mixture from its raw parameters.
pub fn mixture_pdf_1d(mix: &GaussianMixture, x: f64) -> f64 {
    mix.components().iter().map(|c| c.weight() * normal_pdf(x, c.mean()[0], c.cov()[(0, 0)])).sum()
}

/// Range covering a 1-d mixture to `n_std` standard deviations.
pub fn range_1d(mix: &GaussianMixture, n_std: f64) -> (f64, f64) {
    let lo = mix.components().iter().map(|c| c.mean()[0] - n_std * c.cov()[(0, 0)].sqrt()).fold(f64::INFINITY, f64::min);
    let hi = mix.components().iter().map(|c| c.mean()[0] + n_std * c.cov()[(0, 0)].sqrt()).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            p[j] = x[j] + step;
            let up = f(&p);
            p[j] = x[j] - step;
            let down = f(&p);
            p[j] = x[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs()).max(floor)
    }
}

/// Sample mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn kl_normal(mu_a: f64, var_a: f64, mu_b: f64, var_b: f64) -> f64 {
    0.5 * (var_b / var_a).ln() + (var_a + (mu_a - mu_b).powi(2)) / (2.0 * var_b) - 0.5
}
