//! Cross-check matrix: closed forms against refits, quadrature, Monte Carlo
//! and finite differences on seeded random instances.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{AcquisitionContext, KernelMeanEmbedding};
use crate::error::Result;
use crate::gp::{Dataset, GpPosterior, NoiseModel};
use crate::kernel::RbfKernel;
use crate::mixture::GaussianMixture;
use crate::oracle::{self, McEstimate, TensorRule};
use crate::rng;

const MASTER_SEED: u64 = 0x5eed_b0a7;

/// A GP on random data, an input mixture and a probe location.
#[derive(Debug, Clone)]
pub struct Instance {
    pub gp: GpPosterior,
    pub mix: GaussianMixture,
    pub probe: Vec<f64>,
}

fn random_spd(r: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
    (&a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.1) * scale
}

/// Random instance with `n` training points in `[-2, 2]^d` and an
/// `n_gmm`-component mixture centred in `[-1.5, 1.5]^d`.
pub fn random_instance(seed: u64, dim: usize, n: usize, n_gmm: usize) -> Result<Instance> {
    let mut r = rng::seeded(seed);
    let amp = r.random_range(0.5..2.0);
    let ls = (0..dim).map(|_| r.random_range(0.3..3.0)).collect();
    let kernel = RbfKernel::new(amp, ls)?;
    let noise = NoiseModel::new(amp * 10f64.powf(r.random_range(-4.0..-1.0)))?;
    let mut data = Dataset::empty(dim);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let y = x.iter().map(|v| v.sin()).sum::<f64>() + 0.1 * r.random_range(-1.0..1.0);
        data.push(x, y)?;
    }
    let raw: Vec<f64> = (0..n_gmm).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..n_gmm).map(|_| (0..dim).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let covs = (0..n_gmm)
        .map(|_| {
            let scale = r.random_range(0.2..1.0);
            random_spd(&mut r, dim, scale)
        })
        .collect();
    let mix = GaussianMixture::new(weights, means, covs)?;
    let probe = (0..dim).map(|_| r.random_range(-2.5..2.5)).collect();
    Ok(Instance { gp: GpPosterior::fit(data, kernel, noise)?, mix, probe })
}

/// Instance shape cycling through `d ∈ {1,2,3}`, `n ∈ 0..=8`, `n_gmm ∈ 1..=3`.
pub fn instance_shape(index: usize) -> (usize, usize, usize) {
    (1 + index % 3, (index / 3) % 9, 1 + (index / 27) % 3)
}

/// Seeded instance `index` of a named family.
pub fn family_instance(family: u64, index: usize) -> Result<Instance> {
    let (d, n, g) = instance_shape(index);
    random_instance(rng::derive_seed(rng::derive_seed(MASTER_SEED, family), index as u64), d, n, g)
}

/// How a check's deviation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Relative,
    StandardErrors,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Relative => "rel",
            Metric::StandardErrors => "z",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub description: &'static str,
    pub metric: Metric,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub instances: usize,
    pub elapsed_ms: u64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<30} {:<4} max_dev={:<11.3e} tol={:<9.1e} n={:<4} {}  ({})",
            self.name,
            self.metric,
            self.max_deviation,
            self.tolerance,
            self.instances,
            if self.passed() { "PASS" } else { "FAIL" },
            self.description,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Multiplies every tolerance.
    pub tolerance_scale: f64,
    /// Exponent applied to the determinant factor of the closed-form kernel
    /// mean; anything other than `-0.5` is a deliberate fault.
    pub determinant_exponent: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { tolerance_scale: 1.0, determinant_exponent: -0.5 }
    }
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_dev(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(floor)
}

/// Central finite-difference gradient.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
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

struct Check {
    name: &'static str,
    description: &'static str,
    metric: Metric,
    tolerance: f64,
    run: fn(&ValidateOptions) -> Result<(f64, usize)>,
}

fn context(inst: &Instance, opts: &ValidateOptions) -> Result<AcquisitionContext> {
    let emb = KernelMeanEmbedding::with_determinant_exponent(inst.gp.kernel(), &inst.mix, opts.determinant_exponent)?;
    AcquisitionContext::with_embedding(inst.gp.clone(), inst.mix.clone(), emb)
}

fn refit_with(gp: &GpPosterior, x: &[f64], y: f64) -> Result<GpPosterior> {
    let mut data = gp.data().clone();
    data.push(x.to_vec(), y)?;
    GpPosterior::fit(data, gp.kernel().clone(), gp.noise())
}

fn fold_max(acc: f64, v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        acc.max(v)
    }
}

fn four_term_collapse(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..200 {
        let inst = family_instance(1, i)?;
        let ctx = context(&inst, opts)?;
        if ctx.sigma1_sq() <= 0.0 {
            continue;
        }
        let g = ctx.info_gain_four_term(&inst.probe)?;
        worst = fold_max(worst, g.residual().abs() / g.terms[0].abs().max(1.0));
        count += 1;
    }
    Ok((worst, count))
}

fn pythagorean_identity(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let inst = family_instance(1, i)?;
        let ctx = context(&inst, opts)?;
        let s = ctx.variance_reduction_s(&inst.probe);
        let refit = context(&Instance { gp: refit_with(&inst.gp, &inst.probe, 0.0)?, ..inst.clone() }, opts)?;
        let lhs = ctx.sigma1_sq() - refit.sigma1_sq();
        // σ₁² = D − ‖L⁻¹𝒦‖² carries an absolute rounding error of order eps·D
        let scale = ctx.embedding().double_mean().max(ctx.sigma1_sq());
        worst = fold_max(worst, (lhs - s * s).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok((worst, 200))
}

fn info_gain_mc(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..20 {
        // n ≥ 1 keeps the probe informative
        let inst = family_instance(2, 3 + i)?;
        let ctx = context(&inst, opts)?;
        let g = ctx.info_gain_simplified(&inst.probe)?;
        let mc = oracle::mc_info_gain(&inst.gp, &inst.mix, &inst.probe, 100_000, rng::derive_seed(MASTER_SEED, 100 + i as u64))?;
        worst = fold_max(worst, mc.z_score(g));
        count += 1;
    }
    Ok((worst, count))
}

fn low_dim(family: u64, count: usize) -> impl Iterator<Item = Result<Instance>> {
    (0..).filter(|i| instance_shape(*i).0 <= 2).take(count).map(move |i| family_instance(family, i))
}

fn quadrature_rule(mix: &GaussianMixture) -> TensorRule {
    if mix.dim() == 1 {
        TensorRule::for_mixture(mix, 40, 20)
    } else {
        TensorRule::for_mixture(mix, 12, 8)
    }
}

fn kernel_mean_quadrature(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in low_dim(3, 24) {
        let inst = inst?;
        let ctx = context(&inst, opts)?;
        let rule = TensorRule::for_mixture(&inst.mix, 40, 10);
        let s2 = inst.gp.kernel().amplitude_sq();
        for x in [inst.mix.mean(), inst.probe.clone()] {
            let q = oracle::quad_kernel_mean(inst.gp.kernel(), &inst.mix, &x, &rule);
            worst = fold_max(worst, rel_dev(ctx.embedding().eval(&x), q, 1e-6 * s2));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn double_kernel_mean_quadrature(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in low_dim(4, 8) {
        let inst = inst?;
        let ctx = context(&inst, opts)?;
        let q = oracle::quad_double_kernel_mean(inst.gp.kernel(), &inst.mix, &quadrature_rule(&inst.mix));
        worst = fold_max(worst, rel_dev(ctx.embedding().double_mean(), q, 0.0));
        count += 1;
    }
    Ok((worst, count))
}

fn mu1_quadrature(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in low_dim(5, 16) {
        let inst = inst?;
        let ctx = context(&inst, opts)?;
        let q = oracle::quad_mu1(&inst.gp, &inst.mix, &quadrature_rule(&inst.mix));
        let scale = inst.gp.data().outputs().iter().fold(0.0f64, |m, y| m.max(y.abs()));
        worst = fold_max(worst, rel_dev(ctx.mu1(), q, 1e-3 * scale));
        count += 1;
    }
    Ok((worst, count))
}

fn sigma1_quadrature(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in low_dim(6, 8) {
        let inst = inst?;
        let ctx = context(&inst, opts)?;
        let q = oracle::quad_sigma1_sq(&inst.gp, &inst.mix, &quadrature_rule(&inst.mix));
        worst = fold_max(worst, rel_dev(ctx.sigma1_sq(), q, 0.0));
        count += 1;
    }
    Ok((worst, count))
}

fn mc_family(family: u64, count: usize) -> impl Iterator<Item = (usize, Result<Instance>)> {
    (0..count).map(move |i| {
        let dim = 1 + i % 5;
        let n = (i * 3) % 9;
        let g = 1 + i % 3;
        (i, random_instance(rng::derive_seed(rng::derive_seed(MASTER_SEED, family), i as u64), dim, n, g))
    })
}

const MC_DRAWS: usize = 1_000_000;

fn mc_check<F>(family: u64, count: usize, opts: &ValidateOptions, mut f: F) -> Result<(f64, usize)>
where
    F: FnMut(&Instance, &AcquisitionContext, u64) -> Result<(f64, McEstimate)>,
{
    let mut worst: f64 = 0.0;
    for (i, inst) in mc_family(family, count) {
        let inst = inst?;
        let ctx = context(&inst, opts)?;
        let (closed, est) = f(&inst, &ctx, rng::derive_seed(MASTER_SEED, 1000 * family + i as u64))?;
        worst = fold_max(worst, est.z_score(closed));
    }
    Ok((worst, count))
}

fn kernel_mean_mc(opts: &ValidateOptions) -> Result<(f64, usize)> {
    mc_check(7, 10, opts, |inst, ctx, seed| {
        let x = &inst.probe;
        Ok((ctx.embedding().eval(x), oracle::mc_kernel_mean(inst.gp.kernel(), &inst.mix, x, MC_DRAWS, seed)))
    })
}

fn double_kernel_mean_mc(opts: &ValidateOptions) -> Result<(f64, usize)> {
    mc_check(8, 10, opts, |inst, ctx, seed| {
        Ok((ctx.embedding().double_mean(), oracle::mc_double_kernel_mean(inst.gp.kernel(), &inst.mix, MC_DRAWS, seed)))
    })
}

fn mu1_mc(opts: &ValidateOptions) -> Result<(f64, usize)> {
    mc_check(9, 10, opts, |inst, ctx, seed| Ok((ctx.mu1(), oracle::mc_mu1(&inst.gp, &inst.mix, MC_DRAWS, seed))))
}

fn sigma1_mc(opts: &ValidateOptions) -> Result<(f64, usize)> {
    mc_check(10, 10, opts, |inst, ctx, seed| {
        Ok((ctx.sigma1_sq(), oracle::mc_sigma1_sq(&inst.gp, &inst.mix, MC_DRAWS, seed)))
    })
}

fn rank1_update_refit(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let inst = family_instance(11, i)?;
        let mut r = rng::stream(MASTER_SEED, 11_000 + i as u64);
        let xt = &inst.probe;
        let yt = r.random_range(-2.0..2.0);
        let refit = refit_with(&inst.gp, xt, yt)?;
        let s2 = inst.gp.kernel().amplitude_sq();
        let d = xt.len();
        let a: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        worst = fold_max(worst, rel_dev(inst.gp.rank1_update_mean(xt, yt, &a), refit.posterior_mean(&a), 1e-6 * s2.sqrt()));
        worst = fold_max(worst, rel_dev(inst.gp.rank1_update_cov(xt, &a, &b), refit.posterior_cov(&a, &b), 1e-6 * s2));
        worst = fold_max(worst, rel_dev(inst.gp.rank1_update_cov(xt, &a, &a), refit.posterior_var(&a), 1e-6 * s2));

        let ctx = context(&inst, opts)?;
        let next = context(&Instance { gp: refit, ..inst.clone() }, opts)?;
        let h = ctx.hypothetical_update(xt);
        worst = fold_max(worst, rel_dev(h.mu2(yt), next.mu1(), 1e-6 * s2.sqrt()));
        worst = fold_max(worst, rel_dev(h.sigma2_sq, next.sigma1_sq(), 1e-6 * ctx.sigma1_sq()));
    }
    Ok((worst, 100))
}

fn acquisition_gradient_fd(opts: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let inst = family_instance(12, i)?;
        let ctx = context(&inst, opts)?;
        let x = &inst.probe;
        let g = ctx.acquisition_gradient(x);
        let fd = fd_gradient(|p| ctx.acquisition_value(p), x, 1e-5);
        let scale = ctx.sigma1_sq().max(1e-300);
        for (a, b) in g.iter().zip(&fd) {
            worst = fold_max(worst, rel_dev(*a, *b, 1e-4 * scale));
        }
    }
    Ok((worst, 100))
}

fn kernel_gradient_fd(_: &ValidateOptions) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let inst = family_instance(13, i)?;
        let k = inst.gp.kernel();
        let a = &inst.probe;
        let b = inst.mix.mean();
        let g = k.gradient(a, &b)?;
        let fd = fd_gradient(|p| k.eval(p, &b).unwrap_or(f64::NAN), a, 1e-5);
        for (x, y) in g.iter().zip(&fd) {
            worst = fold_max(worst, rel_dev(*x, *y, 1e-4 * k.amplitude_sq()));
        }
    }
    Ok((worst, 100))
}

fn checks() -> Vec<Check> {
    use Metric::*;
    vec![
        Check { name: "four_term_collapse", description: "last three information-gain terms sum to zero", metric: Relative, tolerance: 1e-10, run: four_term_collapse },
        Check { name: "pythagorean_identity", description: "sigma1^2 - sigma2^2 (refit) = S^2, relative to the prior variance of q", metric: Relative, tolerance: 1e-12, run: pythagorean_identity },
        Check { name: "info_gain_mc", description: "expected KL over y~ vs log(sigma1/sigma2)", metric: StandardErrors, tolerance: 4.0, run: info_gain_mc },
        Check { name: "kernel_mean_quadrature", description: "closed-form kernel mean vs tensor quadrature", metric: Relative, tolerance: 1e-6, run: kernel_mean_quadrature },
        Check { name: "double_kernel_mean_quadrature", description: "closed-form double kernel mean vs quadrature", metric: Relative, tolerance: 1e-6, run: double_kernel_mean_quadrature },
        Check { name: "mu1_quadrature", description: "mu1 vs quadrature of the posterior mean", metric: Relative, tolerance: 1e-6, run: mu1_quadrature },
        Check { name: "sigma1_quadrature", description: "sigma1^2 vs quadrature of the posterior covariance", metric: Relative, tolerance: 1e-6, run: sigma1_quadrature },
        Check { name: "kernel_mean_mc", description: "closed-form kernel mean vs Monte Carlo, d <= 5", metric: StandardErrors, tolerance: 4.0, run: kernel_mean_mc },
        Check { name: "double_kernel_mean_mc", description: "double kernel mean vs Monte Carlo pairs", metric: StandardErrors, tolerance: 4.0, run: double_kernel_mean_mc },
        Check { name: "mu1_mc", description: "mu1 vs Monte Carlo of the posterior mean", metric: StandardErrors, tolerance: 4.0, run: mu1_mc },
        Check { name: "sigma1_mc", description: "sigma1^2 vs Monte Carlo pairs of the posterior covariance", metric: StandardErrors, tolerance: 4.0, run: sigma1_mc },
        Check { name: "rank1_update_refit", description: "rank-1 updates vs full refit", metric: Relative, tolerance: 1e-8, run: rank1_update_refit },
        Check { name: "acquisition_gradient_fd", description: "grad S^2 vs central differences", metric: Relative, tolerance: 1e-5, run: acquisition_gradient_fd },
        Check { name: "kernel_gradient_fd", description: "kernel gradient vs central differences", metric: Relative, tolerance: 1e-6, run: kernel_gradient_fd },
    ]
}

/// Names of every check in run order.
pub fn check_names() -> Vec<&'static str> {
    checks().iter().map(|c| c.name).collect()
}

/// Runs the checks whose names pass `filter`, reporting each as it finishes.
pub fn validate_filtered<F, R>(opts: &ValidateOptions, mut filter: F, mut on_result: R) -> Result<ValidationReport>
where
    F: FnMut(&str) -> bool,
    R: FnMut(&CheckResult),
{
    let mut out = Vec::new();
    for c in checks().into_iter().filter(|c| filter(c.name)) {
        let start = Instant::now();
        let (max_deviation, instances) = (c.run)(opts)?;
        let result = CheckResult {
            name: c.name,
            description: c.description,
            metric: c.metric,
            max_deviation,
            tolerance: c.tolerance * opts.tolerance_scale,
            instances,
            elapsed_ms: start.elapsed().as_millis() as u64,
        };
        on_result(&result);
        out.push(result);
    }
    Ok(ValidationReport { checks: out })
}

/// The full matrix.
pub fn validate(opts: &ValidateOptions) -> Result<ValidationReport> {
    validate_filtered(opts, |_| true, |_| {})
}
