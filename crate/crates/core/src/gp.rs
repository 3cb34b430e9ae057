//! Zero-mean Gaussian-process regression with an RBF kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::RbfKernel;
use crate::optimize::{maximize_from, BoxBounds, OptimizerConfig};

/// Observed pairs `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn empty(dim: usize) -> Self {
        Self { dim, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn new(dim: usize, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        check_dim(inputs.len(), outputs.len())?;
        let mut data = Self::empty(dim);
        for (x, y) in inputs.into_iter().zip(outputs) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset entries must be finite".into()));
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Same inputs with `offset` subtracted from every output.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            dim: self.dim,
            inputs: self.inputs.clone(),
            outputs: self.outputs.iter().map(|y| y - offset).collect(),
        }
    }

    pub fn output_mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.outputs.iter().sum::<f64>() / self.len() as f64
    }

    /// Population variance of the outputs.
    pub fn output_variance(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let m = self.output_mean();
        self.outputs.iter().map(|y| (y - m).powi(2)).sum::<f64>() / self.len() as f64
    }
}

/// Observation noise `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

impl TryFrom<f64> for NoiseModel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        NoiseModel::new(v)
    }
}

impl From<NoiseModel> for f64 {
    fn from(n: NoiseModel) -> f64 {
        n.variance
    }
}

/// One setting of the GP hyperparameters θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterSample {
    pub kernel: RbfKernel,
    #[serde(rename = "noise_variance")]
    pub noise: NoiseModel,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Posterior of `f` given a dataset.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: RbfKernel,
    data: Dataset,
    noise: NoiseModel,
    factor: DMatrix<f64>,
    weights: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// Conditions the prior on `data`. An empty dataset yields the prior.
    pub fn fit(data: Dataset, kernel: RbfKernel, noise: NoiseModel) -> Result<Self> {
        check_dim(kernel.dim(), data.dim())?;
        let mut gram = kernel.matrix(data.inputs())?;
        for i in 0..data.len() {
            gram[(i, i)] += noise.variance();
        }
        let (chol, jitter) = factorize(gram, kernel.amplitude_sq())?;
        let weights = chol.solve(&DVector::from_column_slice(data.outputs()));
        Ok(Self { factor: chol.unpack(), kernel, data, noise, weights, jitter })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Lower Cholesky factor of `K + σ²I + jitter·I`.
    pub fn gram_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `(K + σ²I)⁻¹ Y`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Diagonal inflation that was needed to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `(K + σ²I)⁻¹ rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut v = self.whiten(rhs.clone());
        self.factor.tr_solve_lower_triangular_mut(&mut v);
        v
    }

    /// `L⁻¹ v` for the Gram factor `L`.
    pub(crate) fn whiten(&self, mut v: DVector<f64>) -> DVector<f64> {
        self.factor.solve_lower_triangular_mut(&mut v);
        v
    }

    fn assert_dim(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "query point dimension does not match the GP");
    }

    pub fn posterior_mean(&self, x: &[f64]) -> f64 {
        self.assert_dim(x);
        self.kernel.vector_unchecked(x, self.data.inputs()).dot(&self.weights)
    }

    pub fn posterior_cov(&self, a: &[f64], b: &[f64]) -> f64 {
        self.assert_dim(a);
        self.assert_dim(b);
        let prior = self.kernel.eval_unchecked(a, b);
        if self.data.is_empty() {
            return prior;
        }
        let wa = self.whiten(self.kernel.vector_unchecked(a, self.data.inputs()));
        let wb = self.whiten(self.kernel.vector_unchecked(b, self.data.inputs()));
        prior - wa.dot(&wb)
    }

    pub fn posterior_var(&self, x: &[f64]) -> f64 {
        self.posterior_cov(x, x)
    }

    /// Denominator `k_n(x̃,x̃) + σ²` of the rank-1 update, or `None` when it is
    /// numerically zero (duplicate point with no noise).
    fn update_denominator(&self, xt: &[f64]) -> Option<f64> {
        let den = self.posterior_var(xt) + self.noise.variance();
        (den >= 1e-12 * self.kernel.amplitude_sq()).then_some(den)
    }

    /// `m_{n+1}(x)` after a hypothetical observation `(xt, yt)`.
    pub fn rank1_update_mean(&self, xt: &[f64], yt: f64, x: &[f64]) -> f64 {
        let m = self.posterior_mean(x);
        match self.update_denominator(xt) {
            Some(den) => m + self.posterior_cov(xt, x) * (yt - self.posterior_mean(xt)) / den,
            None => m,
        }
    }

    /// `k_{n+1}(a, b)` after a hypothetical observation at `xt`.
    pub fn rank1_update_cov(&self, xt: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let c = self.posterior_cov(a, b);
        match self.update_denominator(xt) {
            Some(den) => c - self.posterior_cov(xt, a) * self.posterior_cov(b, xt) / den,
            None => c,
        }
    }

    /// Log evidence of the conditioning data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.data.len();
        let y = DVector::from_column_slice(self.data.outputs());
        let log_det: f64 = (0..n).map(|i| self.factor[(i, i)].ln()).sum::<f64>() * 2.0;
        -0.5 * y.dot(&self.weights) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Cholesky with escalating diagonal jitter.
fn factorize(gram: DMatrix<f64>, amplitude_sq: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(gram.clone()) {
        return Ok((c, 0.0));
    }
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * amplitude_sq;
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::Conditioning { jitter });
        }
        rel *= 10.0;
    }
}

/// `log p(Y | X, θ)` under the zero-mean GP prior.
pub fn log_marginal_likelihood(data: &Dataset, kernel: &RbfKernel, noise: NoiseModel) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    Ok(GpPosterior::fit(data.clone(), kernel.clone(), noise)?.log_marginal_likelihood())
}

/// Search box for maximum-likelihood hyperparameters. Ranges are
/// multiplicative factors applied to data-derived scales: squared input
/// range per dimension for the lengthscales, output variance for amplitude
/// and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSearchConfig {
    pub starts: usize,
    pub seed: u64,
    pub lengthscale_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub noise_range: (f64, f64),
    /// Pins σ² instead of estimating it.
    pub fixed_noise: Option<f64>,
    pub max_iterations: usize,
}

impl Default for HyperSearchConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            lengthscale_range: (1e-2, 1e2),
            amplitude_range: (1e-3, 1e3),
            noise_range: (1e-8, 1.0),
            fixed_noise: None,
            max_iterations: 100,
        }
    }
}

/// Result of a hyperparameter search with its evaluation trace.
#[derive(Debug, Clone)]
pub struct HyperSearchOutcome {
    pub sample: HyperparameterSample,
    pub log_likelihood: f64,
    /// Every finite log-likelihood value evaluated during the search.
    pub evaluated: Vec<f64>,
    pub bounds: BoxBounds,
}

/// Multi-start maximization of the log marginal likelihood over
/// `(log s², log Λ_jj, log σ²)`.
pub fn select_hyperparameters(data: &Dataset, search: &HyperSearchConfig) -> Result<HyperparameterSample> {
    Ok(search_hyperparameters(data, search)?.sample)
}

pub fn search_hyperparameters(data: &Dataset, search: &HyperSearchConfig) -> Result<HyperSearchOutcome> {
    if data.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, found: data.len() });
    }
    let d = data.dim();
    let y_scale = output_scale(data);
    let mut lower = Vec::with_capacity(d + 2);
    let mut upper = Vec::with_capacity(d + 2);
    lower.push((search.amplitude_range.0 * y_scale).ln());
    upper.push((search.amplitude_range.1 * y_scale).ln());
    for j in 0..d {
        let (lo, hi) = data
            .inputs()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
        let range = hi - lo;
        let range_sq = if range > 0.0 { range * range } else { 1.0 };
        lower.push((search.lengthscale_range.0 * range_sq).ln());
        upper.push((search.lengthscale_range.1 * range_sq).ln());
    }
    let fixed_noise = match search.fixed_noise {
        Some(v) => Some(NoiseModel::new(v)?),
        None => {
            lower.push((search.noise_range.0 * y_scale).ln());
            upper.push((search.noise_range.1 * y_scale).ln());
            None
        }
    };
    let bounds = BoxBounds::new(lower, upper)?;

    let unpack = |p: &[f64]| -> Result<HyperparameterSample> {
        let kernel = RbfKernel::new(p[0].exp(), p[1..=d].iter().map(|v| v.exp()).collect())?;
        let noise = match fixed_noise {
            Some(n) => n,
            None => NoiseModel::new(p[d + 1].exp())?,
        };
        Ok(HyperparameterSample { kernel, noise })
    };

    let evaluated = std::cell::RefCell::new(Vec::new());
    let value = |p: &[f64]| -> f64 {
        let v = unpack(p)
            .and_then(|h| log_marginal_likelihood(data, &h.kernel, h.noise))
            .unwrap_or(f64::NAN);
        if v.is_finite() {
            evaluated.borrow_mut().push(v);
        }
        v
    };
    let gradient = |p: &[f64]| -> Vec<f64> {
        unpack(p)
            .and_then(|h| lml_log_gradient(data, &h, fixed_noise.is_none()))
            .unwrap_or_else(|_| vec![f64::NAN; p.len()])
    };
    let cfg = OptimizerConfig {
        starts: search.starts.max(1),
        max_iterations: search.max_iterations,
        gradient_tolerance: 1e-6,
        step_shrink: 0.5,
        seed: search.seed,
    };
    let opt = maximize_from(value, gradient, &bounds, &cfg, &[bounds.center()])?;
    Ok(HyperSearchOutcome {
        sample: unpack(&opt.x)?,
        log_likelihood: opt.value,
        evaluated: evaluated.into_inner(),
        bounds,
    })
}

/// Output variance, falling back to the squared mean (or 1) for flat data.
fn output_scale(data: &Dataset) -> f64 {
    let var = data.output_variance();
    let mean_sq = data.output_mean().powi(2);
    if var > 1e-12 * mean_sq.max(1.0) {
        var
    } else {
        mean_sq.max(1.0)
    }
}

/// Gradient of the log evidence with respect to the log hyperparameters.
fn lml_log_gradient(data: &Dataset, h: &HyperparameterSample, with_noise: bool) -> Result<Vec<f64>> {
    let gp = GpPosterior::fit(data.clone(), h.kernel.clone(), h.noise)?;
    let n = data.len();
    let d = data.dim();
    let kf = h.kernel.matrix(data.inputs())?;
    let inv = {
        let mut eye = DMatrix::<f64>::identity(n, n);
        gp.factor.solve_lower_triangular_mut(&mut eye);
        gp.factor.tr_solve_lower_triangular_mut(&mut eye);
        eye
    };
    let alpha = &gp.weights;
    let w = alpha * alpha.transpose() - inv;
    let mut grad = Vec::with_capacity(d + 2);
    grad.push(0.5 * w.component_mul(&kf).sum());
    let xs = data.inputs();
    for j in 0..d {
        let lj = h.kernel.lengthscales()[j];
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                let diff = xs[a][j] - xs[b][j];
                s += w[(a, b)] * kf[(a, b)] * diff * diff / (2.0 * lj);
            }
        }
        grad.push(0.5 * s);
    }
    if with_noise {
        grad.push(0.5 * h.noise.variance() * w.trace());
    }
    Ok(grad)
}
