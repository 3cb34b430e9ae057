//! Brute-force reference integrators used to cross-check the closed forms.
//!
//! Nothing in here calls into the closed-form kernel integrals: every
//! quantity is recomputed from point evaluations of the kernel, the GP
//! posterior and the mixture density, by quadrature (d ≤ 2) or Monte Carlo.

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};

use crate::acquisition::{kl_gaussian, AcquisitionContext};
use crate::error::Result;
use crate::gp::GpPosterior;
use crate::kernel::RbfKernel;
use crate::mixture::GaussianMixture;
use crate::rng;

/// Adaptive quadrature outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    /// False when the subdivision limit was hit before reaching `tol`.
    pub converged: bool,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on `[lo, hi]`.
pub fn quad_integral_1d<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> QuadResult {
    let mut intervals = vec![{
        let (v, e) = gauss_kronrod_15(&mut f, lo, hi);
        (lo, hi, v, e)
    }];
    loop {
        let value: f64 = intervals.iter().map(|i| i.2).sum();
        let error: f64 = intervals.iter().map(|i| i.3).sum();
        if error <= tol {
            return QuadResult { value, error_estimate: error, converged: true };
        }
        if intervals.len() >= MAX_INTERVALS {
            return QuadResult { value, error_estimate: error, converged: false };
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = intervals.swap_remove(worst);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            let (v, e) = gauss_kronrod_15(&mut f, a, b);
            intervals.push((a, b, v, e));
            let value: f64 = intervals.iter().map(|i| i.2).sum();
            let error: f64 = intervals.iter().map(|i| i.3).sum();
            return QuadResult { value, error_estimate: error, converged: false };
        }
        let (v1, e1) = gauss_kronrod_15(&mut f, a, m);
        let (v2, e2) = gauss_kronrod_15(&mut f, m, b);
        intervals.push((a, m, v1, e1));
        intervals.push((m, b, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Composite tensor-product Gauss–Legendre rule on a box.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    /// `panels` equal sub-intervals per axis, `order` nodes per panel.
    pub fn new(lower: &[f64], upper: &[f64], panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let axes: Vec<(Vec<f64>, Vec<f64>)> = lower
            .iter()
            .zip(upper)
            .map(|(lo, hi)| {
                let width = (hi - lo) / panels as f64;
                let mut xs = Vec::with_capacity(panels * order);
                let mut ws = Vec::with_capacity(panels * order);
                for p in 0..panels {
                    let c = lo + (p as f64 + 0.5) * width;
                    for (x, w) in gx.iter().zip(&gw) {
                        xs.push(c + 0.5 * width * x);
                        ws.push(0.5 * width * w);
                    }
                }
                (xs, ws)
            })
            .collect();
        let per_axis = panels * order;
        let total = per_axis.pow(lower.len() as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut node = Vec::with_capacity(lower.len());
            let mut w = 1.0;
            for (xs, ws) in &axes {
                let i = idx % per_axis;
                idx /= per_axis;
                node.push(xs[i]);
                w *= ws[i];
            }
            nodes.push(node);
            weights.push(w);
        }
        Self { nodes, weights }
    }

    /// Rule over the box spanned by every mixture component's mean ± 8
    /// standard deviations.
    pub fn for_mixture(mix: &GaussianMixture, panels: usize, order: usize) -> Self {
        let b = mix.support_box(8.0);
        Self::new(b.lower(), b.upper(), panels, order)
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Tensor Gauss–Legendre integral over `[lo₀,hi₀]×[lo₁,hi₁]`.
pub fn quad_integral_2d<F: FnMut(&[f64]) -> f64>(f: F, lower: [f64; 2], upper: [f64; 2], per_axis: usize) -> f64 {
    assert!(per_axis <= 2048, "per_axis is limited to 2048");
    TensorRule::new(&lower, &upper, 1, per_axis).integrate(f)
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n as f64).sqrt() }
    }

    /// Deviation of `value` from the estimate, in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (value - self.mean).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// `E_p[f(X)]` from `n_samples` mixture draws.
pub fn mc_expectation<F: FnMut(&[f64]) -> f64>(mut f: F, mix: &GaussianMixture, n_samples: usize, seed: u64) -> McEstimate {
    assert!(n_samples >= 2, "need at least two samples");
    let draws = mix.sample(n_samples, seed);
    McEstimate::from_values(draws.iter().map(|x| f(x)))
}

/// `E[g(X, X')]` over independent pairs from the mixture.
fn mc_pairs<F: FnMut(&[f64], &[f64]) -> f64>(mut g: F, mix: &GaussianMixture, n: usize, seed: u64) -> McEstimate {
    let a = mix.sample(n, rng::derive_seed(seed, 1));
    let b = mix.sample(n, rng::derive_seed(seed, 2));
    McEstimate::from_values(a.iter().zip(&b).map(|(x, y)| g(x, y)))
}

pub fn quad_kernel_mean(kernel: &RbfKernel, mix: &GaussianMixture, x: &[f64], rule: &TensorRule) -> f64 {
    rule.integrate(|z| kernel.eval_unchecked(x, z) * mix.pdf(z))
}

pub fn mc_kernel_mean(kernel: &RbfKernel, mix: &GaussianMixture, x: &[f64], n: usize, seed: u64) -> McEstimate {
    mc_expectation(|z| kernel.eval_unchecked(x, z), mix, n, seed)
}

/// `Σ_ab W_a W_b k(a, b)` with `W = rule weight × density`.
pub fn quad_double_kernel_mean(kernel: &RbfKernel, mix: &GaussianMixture, rule: &TensorRule) -> f64 {
    let w: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * mix.pdf(x)).collect();
    let mut total = 0.0;
    for (a, wa) in rule.nodes.iter().zip(&w) {
        if *wa == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (b, wb) in rule.nodes.iter().zip(&w) {
            row += wb * kernel.eval_unchecked(a, b);
        }
        total += wa * row;
    }
    total
}

pub fn mc_double_kernel_mean(kernel: &RbfKernel, mix: &GaussianMixture, n: usize, seed: u64) -> McEstimate {
    mc_pairs(|a, b| kernel.eval_unchecked(a, b), mix, n, seed)
}

/// `∫ mₙ(x) p(x) dx`.
pub fn quad_mu1(gp: &GpPosterior, mix: &GaussianMixture, rule: &TensorRule) -> f64 {
    rule.integrate(|x| gp.posterior_mean(x) * mix.pdf(x))
}

pub fn mc_mu1(gp: &GpPosterior, mix: &GaussianMixture, n: usize, seed: u64) -> McEstimate {
    mc_expectation(|x| gp.posterior_mean(x), mix, n, seed)
}

/// `∬ kₙ(x, x') p(x) p(x') dx dx'` on the tensor rule, using linearity of
/// `kₙ = k − k(·,X)(K+σ²I)⁻¹k(X,·)` to keep the cost at O(M²) kernel calls.
pub fn quad_sigma1_sq(gp: &GpPosterior, mix: &GaussianMixture, rule: &TensorRule) -> f64 {
    let prior = quad_double_kernel_mean(gp.kernel(), mix, rule);
    if gp.data().is_empty() {
        return prior;
    }
    let n = gp.data().len();
    let mut acc = DVector::zeros(n);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let wp = w * mix.pdf(x);
        if wp == 0.0 {
            continue;
        }
        acc += gp.kernel().vector_unchecked(x, gp.data().inputs()) * wp;
    }
    prior - gp.whiten(acc).norm_squared()
}

pub fn mc_sigma1_sq(gp: &GpPosterior, mix: &GaussianMixture, n: usize, seed: u64) -> McEstimate {
    mc_pairs(|a, b| gp.posterior_cov(a, b), mix, n, seed)
}

/// Expected KL divergence of the hypothetical next-step estimate from the
/// current one, averaged over `ỹ ~ N(mₙ(x̃), kₙ(x̃,x̃)+σ²)`.
///
/// The next-step estimate is obtained by refitting the GP on the augmented
/// data (μ₂ is affine in ỹ, so two refits determine it), not from the
/// rank-1 update formulas.
pub fn mc_info_gain(gp: &GpPosterior, mix: &GaussianMixture, xt: &[f64], n_samples: usize, seed: u64) -> Result<McEstimate> {
    let current = AcquisitionContext::new(gp.clone(), mix.clone())?.estimate();
    let refit = |y: f64| -> Result<(f64, f64)> {
        let mut data = gp.data().clone();
        data.push(xt.to_vec(), y)?;
        let g = GpPosterior::fit(data, gp.kernel().clone(), gp.noise())?;
        let e = AcquisitionContext::new(g, mix.clone())?.estimate();
        Ok((e.mean, e.variance))
    };
    let (mu2_at_0, var2) = refit(0.0)?;
    let (mu2_at_1, _) = refit(1.0)?;
    let slope = mu2_at_1 - mu2_at_0;

    let pred_mean = gp.posterior_mean(xt);
    let pred_sd = (gp.posterior_var(xt) + gp.noise().variance()).max(0.0).sqrt();
    let normal = Normal::new(pred_mean, pred_sd).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let y = normal.sample(&mut rng);
        let mu2 = mu2_at_0 + slope * y;
        values.push(kl_gaussian(mu2, var2, current.mean, current.variance)?);
    }
    Ok(McEstimate::from_values(values.into_iter()))
}

/// `∫ ρ_y(x̃, x) (kₙ(x,x)+σ²)^{½} p(x) dx`, with `ρ_y` the correlation of
/// noisy observations at `x̃` and `x`.
pub fn mc_correlation_form(gp: &GpPosterior, mix: &GaussianMixture, xt: &[f64], n: usize, seed: u64) -> McEstimate {
    let noise = gp.noise().variance();
    let var_t = gp.posterior_var(xt) + noise;
    mc_expectation(
        |x| {
            let var_x = gp.posterior_var(x) + noise;
            let rho = gp.posterior_cov(xt, x) / (var_t * var_x).sqrt();
            rho * var_x.sqrt()
        },
        mix,
        n,
        seed,
    )
}
