//! Estimate of `q = ∫ f(x) p(x) dx` under the GP posterior and the
//! variance-reduction acquisition used to pick the next sample.
//!
//! With `p` a Gaussian mixture and an RBF kernel, every integral reduces to
//! closed form:
//!
//! * kernel mean `𝒦(x) = Σ αᵢ s² |I + Λ⁻¹Σᵢ|^{-½} exp(-½ (x-wᵢ)ᵀ(Σᵢ+Λ)⁻¹(x-wᵢ))`,
//! * `μ₁ = 𝒦(Xₙ)ᵀ (K+σ²I)⁻¹ Yₙ`,
//! * `σ₁² = ∬ k p p − 𝒦(Xₙ)ᵀ (K+σ²I)⁻¹ 𝒦(Xₙ)`,
//! * `S(x̃) = v(x̃) / √(kₙ(x̃,x̃)+σ²)` with `v(x̃) = 𝒦(x̃) − k(x̃,Xₙ)(K+σ²I)⁻¹𝒦(Xₙ)`,
//! * `σ₂²(x̃) = σ₁² − S(x̃)²`, and the expected information gain about `q`
//!   is `½ log(σ₁²/σ₂²)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gp::GpPosterior;
use crate::kernel::{RbfKernel, ScaledKernel};
use crate::mixture::GaussianMixture;

/// Finite stand-in for `+∞` information gain when `σ₂²` underflows to zero.
pub const GAIN_SENTINEL: f64 = 700.0;

/// Determinant exponent of the closed-form Gaussian convolution.
const DET_EXPONENT: f64 = -0.5;

/// Posterior `N(μ₁, σ₁²)` of the integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub mean: f64,
    pub variance: f64,
}

impl QEstimate {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Clone)]
struct EmbeddingPart {
    coef: f64,
    mean: Vec<f64>,
    scaled: ScaledKernel,
}

/// Precomputed closed-form kernel mean `𝒦` of an RBF kernel under a
/// Gaussian mixture.
#[derive(Clone)]
pub struct KernelMeanEmbedding {
    kernel: RbfKernel,
    parts: Vec<EmbeddingPart>,
    double_mean: f64,
}

impl std::fmt::Debug for KernelMeanEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelMeanEmbedding")
            .field("kernel", &self.kernel)
            .field("components", &self.parts.len())
            .field("double_mean", &self.double_mean)
            .finish()
    }
}

impl KernelMeanEmbedding {
    pub fn new(kernel: &RbfKernel, mix: &GaussianMixture) -> Result<Self> {
        Self::with_determinant_exponent(kernel, mix, DET_EXPONENT)
    }

    /// Test hook: builds the embedding with a perturbed determinant exponent
    /// so that validation can demonstrate it detects a wrong closed form.
    #[doc(hidden)]
    pub fn with_determinant_exponent(kernel: &RbfKernel, mix: &GaussianMixture, exponent: f64) -> Result<Self> {
        check_dim(kernel.dim(), mix.dim())?;
        let lambda = kernel.scale_matrix();
        let log_det_lambda: f64 = kernel.lengthscales().iter().map(|l| l.ln()).sum();
        let s2 = kernel.amplitude_sq();
        let mut parts = Vec::with_capacity(mix.len());
        for c in mix.components() {
            let scaled = ScaledKernel::new(1.0, c.cov() + &lambda)?;
            // |I + Λ⁻¹Σ| = |Σ + Λ| / |Λ|
            let log_det_ratio = scaled.log_det() - log_det_lambda;
            parts.push(EmbeddingPart {
                coef: c.weight() * s2 * (exponent * log_det_ratio).exp(),
                mean: c.mean().iter().copied().collect(),
                scaled,
            });
        }
        let comps = mix.components();
        let mut double_mean = 0.0;
        for (i, ci) in comps.iter().enumerate() {
            for (j, cj) in comps.iter().enumerate().skip(i) {
                let scaled = ScaledKernel::new(1.0, &lambda + ci.cov() + cj.cov())?;
                let factor = (exponent * (scaled.log_det() - log_det_lambda)).exp();
                let term = ci.weight()
                    * cj.weight()
                    * s2
                    * factor
                    * scaled.eval_unchecked(ci.mean().as_slice(), cj.mean().as_slice());
                double_mean += if i == j { term } else { 2.0 * term };
            }
        }
        Ok(Self { kernel: kernel.clone(), parts, double_mean })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    /// `𝒦(x) = ∫ k(x, x') p(x') dx'`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.coef * p.scaled.eval_unchecked(x, &p.mean)).sum()
    }

    /// Returns `𝒦(x)` and `∇𝒦(x) = −Σ (Σᵢ+Λ)⁻¹(x−wᵢ) 𝒦ᵢ(x)`.
    pub fn eval_with_gradient(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let mut value = 0.0;
        let mut grad = DVector::zeros(x.len());
        for p in &self.parts {
            let (k, solved) = p.scaled.eval_with_solve(x, &p.mean);
            let term = p.coef * k;
            value += term;
            grad.axpy(-term, &solved, 1.0);
        }
        (value, grad)
    }

    /// `∬ k(x, x') p(x) p(x') dx dx'`.
    pub fn double_mean(&self) -> f64 {
        self.double_mean
    }
}

/// `∫ k(x, x') N(x'; mean, cov) dx'` for a single Gaussian.
pub fn kernel_mean_component(x: &[f64], kernel: &RbfKernel, mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    check_dim(kernel.dim(), x.len())?;
    let mix = GaussianMixture::single(mean.to_vec(), cov.clone())?;
    Ok(KernelMeanEmbedding::new(kernel, &mix)?.eval(x))
}

pub fn kernel_mean(x: &[f64], kernel: &RbfKernel, mix: &GaussianMixture) -> Result<f64> {
    check_dim(kernel.dim(), x.len())?;
    Ok(KernelMeanEmbedding::new(kernel, mix)?.eval(x))
}

pub fn kernel_mean_gradient(x: &[f64], kernel: &RbfKernel, mix: &GaussianMixture) -> Result<Vec<f64>> {
    check_dim(kernel.dim(), x.len())?;
    Ok(KernelMeanEmbedding::new(kernel, mix)?.eval_with_gradient(x).1.iter().copied().collect())
}

pub fn double_kernel_mean(kernel: &RbfKernel, mix: &GaussianMixture) -> Result<f64> {
    Ok(KernelMeanEmbedding::new(kernel, mix)?.double_mean())
}

/// Precomputes the kernel-mean vector and solved systems for `gp` under `mix`.
pub fn build_context(gp: GpPosterior, mix: GaussianMixture) -> Result<AcquisitionContext> {
    AcquisitionContext::new(gp, mix)
}

/// Effect of one hypothetical observation at `x̃` on the estimate of `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypotheticalUpdate {
    /// `c(x̃) = v(x̃) / (kₙ(x̃,x̃) + σ²)`.
    pub innovation_coeff: f64,
    /// `mₙ(x̃)`.
    pub pred_mean: f64,
    pub sigma2_sq: f64,
    mu1: f64,
}

impl HypotheticalUpdate {
    /// `μ₂(ỹ) = μ₁ + c(x̃)(ỹ − mₙ(x̃))`.
    pub fn mu2(&self, y: f64) -> f64 {
        self.mu1 + self.innovation_coeff * (y - self.pred_mean)
    }
}

/// The four summands of the information gain before simplification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourTermGain {
    pub total: f64,
    /// `[log(σ₁/σ₂), σ₂²/2σ₁², −½, v²/(2σ₁²(σₙ²+σ²))]`
    pub terms: [f64; 4],
}

impl FourTermGain {
    /// Sum of the last three terms (identically zero in exact arithmetic).
    pub fn residual(&self) -> f64 {
        self.terms[1] + self.terms[2] + self.terms[3]
    }
}

struct Probe {
    kvec: DVector<f64>,
    /// `v(x̃)`
    numerator: f64,
    /// `kₙ(x̃,x̃)`
    pred_var: f64,
    /// `kₙ(x̃,x̃) + σ²`, or `None` when numerically zero.
    denom: Option<f64>,
}

/// Everything needed for O(n) evaluation of the acquisition at a probe.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    gp: GpPosterior,
    mix: GaussianMixture,
    embedding: KernelMeanEmbedding,
    kmean_train: DVector<f64>,
    solved_kmean: DVector<f64>,
    estimate: QEstimate,
    offset: f64,
}

impl AcquisitionContext {
    pub fn new(gp: GpPosterior, mix: GaussianMixture) -> Result<Self> {
        let embedding = KernelMeanEmbedding::new(gp.kernel(), &mix)?;
        Self::with_embedding(gp, mix, embedding)
    }

    pub fn with_embedding(gp: GpPosterior, mix: GaussianMixture, embedding: KernelMeanEmbedding) -> Result<Self> {
        check_dim(gp.dim(), mix.dim())?;
        check_dim(gp.dim(), embedding.kernel().dim())?;
        let kmean_train = DVector::from_iterator(gp.data().len(), gp.data().inputs().iter().map(|x| embedding.eval(x)));
        let solved_kmean = gp.solve(&kmean_train);
        let mean = kmean_train.dot(gp.weights());
        let variance = (embedding.double_mean() - gp.whiten(kmean_train.clone()).norm_squared()).max(0.0);
        Ok(Self { gp, mix, embedding, kmean_train, solved_kmean, estimate: QEstimate { mean, variance }, offset: 0.0 })
    }

    /// Adds a constant to `μ₁`, for GPs fitted on mean-centred outputs.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.estimate.mean += offset - self.offset;
        self.offset = offset;
        self
    }

    pub fn gp(&self) -> &GpPosterior {
        &self.gp
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mix
    }

    pub fn embedding(&self) -> &KernelMeanEmbedding {
        &self.embedding
    }

    /// `𝒦(xᵢ)` for every training input.
    pub fn kmean_train(&self) -> &DVector<f64> {
        &self.kmean_train
    }

    /// `(K+σ²I)⁻¹ 𝒦(Xₙ)`.
    pub fn solved_kmean(&self) -> &DVector<f64> {
        &self.solved_kmean
    }

    pub fn estimate(&self) -> QEstimate {
        self.estimate
    }

    pub fn mu1(&self) -> f64 {
        self.estimate.mean
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.estimate.variance
    }

    fn probe(&self, x: &[f64]) -> Probe {
        assert_eq!(x.len(), self.gp.dim(), "probe dimension does not match the context");
        let kernel = self.gp.kernel();
        let kvec = kernel.vector_unchecked(x, self.gp.data().inputs());
        let numerator = self.embedding.eval(x) - kvec.dot(&self.solved_kmean);
        let pred_var = if kvec.is_empty() {
            kernel.amplitude_sq()
        } else {
            kernel.amplitude_sq() - self.gp.whiten(kvec.clone()).norm_squared()
        };
        let den = pred_var + self.gp.noise().variance();
        let denom = (den >= 1e-14 * kernel.amplitude_sq()).then_some(den);
        Probe { kvec, numerator, pred_var, denom }
    }

    /// `v(x̃) = ∫ kₙ(x̃, x) p(x) dx`.
    pub fn reduction_numerator(&self, x: &[f64]) -> f64 {
        self.probe(x).numerator
    }

    /// `S(x̃)`; zero where `kₙ(x̃,x̃)+σ²` vanishes.
    pub fn variance_reduction_s(&self, x: &[f64]) -> f64 {
        let p = self.probe(x);
        match p.denom {
            Some(d) => p.numerator / d.sqrt(),
            None => 0.0,
        }
    }

    /// `S(x̃)²`, the reduction in the variance of `q`.
    pub fn acquisition_value(&self, x: &[f64]) -> f64 {
        self.variance_reduction_s(x).powi(2)
    }

    /// `∇S(x̃)²`.
    pub fn acquisition_gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.probe(x);
        let Some(den) = p.denom else {
            return vec![0.0; x.len()];
        };
        let kernel = self.gp.kernel();
        let (_, grad_kmean) = self.embedding.eval_with_gradient(x);
        let mut grad_v = grad_kmean;
        let mut grad_den = DVector::<f64>::zeros(x.len());
        if !p.kvec.is_empty() {
            let solved_k = self.gp.solve(&p.kvec);
            let mut gk = vec![0.0; x.len()];
            for (i, xi) in self.gp.data().inputs().iter().enumerate() {
                kernel.gradient_into(x, xi, &mut gk);
                for j in 0..x.len() {
                    grad_v[j] -= gk[j] * self.solved_kmean[i];
                    grad_den[j] -= 2.0 * gk[j] * solved_k[i];
                }
            }
        }
        let v = p.numerator;
        (0..x.len()).map(|j| 2.0 * v * grad_v[j] / den - v * v * grad_den[j] / (den * den)).collect()
    }

    /// `σ₂²(x̃) = σ₁² − S(x̃)²`, clamped at zero.
    pub fn sigma2_sq(&self, x: &[f64]) -> f64 {
        (self.estimate.variance - self.acquisition_value(x)).max(0.0)
    }

    pub fn hypothetical_update(&self, x: &[f64]) -> HypotheticalUpdate {
        let p = self.probe(x);
        let (coeff, s_sq) = match p.denom {
            Some(d) => (p.numerator / d, p.numerator * p.numerator / d),
            None => (0.0, 0.0),
        };
        HypotheticalUpdate {
            innovation_coeff: coeff,
            pred_mean: self.gp.posterior_mean(x) + self.offset,
            sigma2_sq: (self.estimate.variance - s_sq).max(0.0),
            mu1: self.estimate.mean,
        }
    }

    fn require_spread(&self) -> Result<f64> {
        let s1 = self.estimate.variance;
        if s1 <= 0.0 {
            return Err(Error::DegenerateEstimate);
        }
        Ok(s1)
    }

    /// Information gain as the sum of four terms, without using the identity
    /// that makes the last three cancel.
    pub fn info_gain_four_term(&self, x: &[f64]) -> Result<FourTermGain> {
        let s1 = self.require_spread()?;
        let p = self.probe(x);
        let (s_sq, t4) = match p.denom {
            Some(d) => {
                let v2 = p.numerator * p.numerator;
                (v2 / d, v2 / (2.0 * s1 * (p.pred_var + self.gp.noise().variance())))
            }
            None => (0.0, 0.0),
        };
        let s2 = (s1 - s_sq).max(0.0);
        let t1 = log_ratio(s1, s2);
        let terms = [t1, s2 / (2.0 * s1), -0.5, t4];
        Ok(FourTermGain { total: terms.iter().sum(), terms })
    }

    /// `G(x̃) = log(σ₁/σ₂(x̃))`.
    pub fn info_gain_simplified(&self, x: &[f64]) -> Result<f64> {
        let s1 = self.require_spread()?;
        Ok(log_ratio(s1, self.sigma2_sq(x)))
    }

    /// `∇G(x̃) = ∇S² / (2σ₂²)`.
    pub fn info_gain_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_spread()?;
        let s2 = self.sigma2_sq(x);
        if s2 <= 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        Ok(self.acquisition_gradient(x).into_iter().map(|g| g / (2.0 * s2)).collect())
    }
}

/// `½ log(σ₁²/σ₂²)` with the finite sentinel for `σ₂² = 0`.
fn log_ratio(s1: f64, s2: f64) -> f64 {
    if s2 <= 0.0 {
        return GAIN_SENTINEL;
    }
    (0.5 * (s1 / s2).ln()).min(GAIN_SENTINEL)
}

/// `KL(N(μ_a, var_a) ‖ N(μ_b, var_b))`.
pub fn kl_gaussian(mu_a: f64, var_a: f64, mu_b: f64, var_b: f64) -> Result<f64> {
    if !(var_a > 0.0 && var_b > 0.0) {
        return Err(Error::InvalidArgument(format!("variances must be positive, got {var_a} and {var_b}")));
    }
    Ok(0.5 * (var_b / var_a).ln() + (var_a + (mu_a - mu_b).powi(2)) / (2.0 * var_b) - 0.5)
}

fn check_contexts(contexts: &[AcquisitionContext]) -> Result<()> {
    let Some(first) = contexts.first() else {
        return Err(Error::InvalidArgument("at least one hyperparameter context is required".into()));
    };
    if contexts.iter().any(|c| c.gp.data() != first.gp.data() || c.mix.len() != first.mix.len()) {
        return Err(Error::InvalidArgument("contexts must share data and mixture".into()));
    }
    Ok(())
}

/// Mean of per-θ simplified gains, `(1/s) Σ log(σ₁(θᵢ)/σ₂(x̃, θᵢ))`.
pub fn multi_theta_acquisition(contexts: &[AcquisitionContext], x: &[f64]) -> Result<f64> {
    check_contexts(contexts)?;
    let mut total = 0.0;
    for c in contexts {
        total += c.info_gain_simplified(x)?;
    }
    Ok(total / contexts.len() as f64)
}

pub fn multi_theta_gradient(contexts: &[AcquisitionContext], x: &[f64]) -> Result<Vec<f64>> {
    check_contexts(contexts)?;
    let mut total = vec![0.0; x.len()];
    for c in contexts {
        for (t, g) in total.iter_mut().zip(c.info_gain_gradient(x)?) {
            *t += g;
        }
    }
    let n = contexts.len() as f64;
    Ok(total.into_iter().map(|t| t / n).collect())
}
