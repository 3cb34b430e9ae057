//! Sequential design loop: initial design, hyperparameter refresh,
//! acquisition maximization, evaluation and estimate history.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use rand_distr::{Distribution, Normal};

use crate::acquisition::{multi_theta_acquisition, multi_theta_gradient, AcquisitionContext, KernelMeanEmbedding};
use crate::error::{Error, Result};
use crate::gp::{select_hyperparameters, Dataset, GpPosterior, HyperSearchConfig, HyperparameterSample};
use crate::kernel::RbfKernel;
use crate::mixture::GaussianMixture;
use crate::optimize::{maximize_from, BoxBounds, OptimizerConfig};
use crate::rng;

const STREAM_INITIAL: u64 = 0;
const STREAM_RANDOM: u64 = 1;
const STREAM_HYPER: u64 = 2;
const STREAM_THETA: u64 = 3;
const STREAM_OPTIMIZER: u64 = 4;
const STREAM_STARTS: u64 = 5;

/// How sample locations after the initial design are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Maximize the variance-reduction acquisition.
    Acquisition,
    /// Draw from the input distribution; estimate with the GP.
    Random,
    /// Draw from the input distribution; estimate with the sample mean.
    MonteCarlo,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Acquisition => "acquisition",
            Strategy::Random => "random",
            Strategy::MonteCarlo => "monte_carlo",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acquisition" => Ok(Strategy::Acquisition),
            "random" => Ok(Strategy::Random),
            "monte_carlo" => Ok(Strategy::MonteCarlo),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Kernel and noise handling.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperMode {
    Fixed(HyperparameterSample),
    /// Maximum likelihood, re-selected every `refit_every` design steps.
    Auto(HyperSearchConfig),
}

#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub n0: usize,
    pub budget: usize,
    /// Stop once `σ₁` falls below this; zero disables.
    pub sigma_stop: f64,
    /// Zero freezes the hyperparameters selected on the initial design.
    pub refit_every: usize,
    pub hyper: HyperMode,
    pub optimizer: OptimizerConfig,
    /// Search box; defaults to the mixture support ± 5 standard deviations.
    pub bounds: Option<BoxBounds>,
    /// Values above one average the gain over perturbed hyperparameters.
    pub theta_samples: usize,
    /// Standard deviation of the log-space perturbation.
    pub theta_log_std: f64,
    /// Fit the GP to outputs minus their mean.
    pub center_outputs: bool,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n0: 5,
            budget: 30,
            sigma_stop: 0.0,
            refit_every: 5,
            hyper: HyperMode::Auto(HyperSearchConfig::default()),
            optimizer: OptimizerConfig::default(),
            bounds: None,
            theta_samples: 1,
            theta_log_std: 0.2,
            center_outputs: false,
            strategy: Strategy::Acquisition,
            seed: 0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(Error::InvalidArgument(format!("n0 must be at least 2, got {}", self.n0)));
        }
        if self.budget < self.n0 {
            return Err(Error::InvalidArgument(format!("budget {} is below n0 {}", self.budget, self.n0)));
        }
        if !(self.sigma_stop >= 0.0 && self.sigma_stop.is_finite()) {
            return Err(Error::InvalidArgument("sigma_stop must be finite and non-negative".into()));
        }
        if self.theta_samples == 0 {
            return Err(Error::InvalidArgument("theta_samples must be at least 1".into()));
        }
        if !(self.theta_log_std >= 0.0 && self.theta_log_std.is_finite()) {
            return Err(Error::InvalidArgument("theta_log_std must be finite and non-negative".into()));
        }
        self.optimizer.validate()
    }
}

/// One completed iteration. `mu1` and `sigma1` describe the estimate after
/// `observed_y` has been absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based; equals the number of samples after this iteration.
    pub iteration: usize,
    pub chosen_x: Vec<f64>,
    pub observed_y: f64,
    pub mu1: f64,
    pub sigma1: f64,
    /// `S²(x*)` before the evaluation; zero for the initial design.
    pub acquisition_at_chosen: f64,
    /// `σ₂²(x*)` predicted before the evaluation, when a GP was used.
    pub predicted_sigma2_sq: Option<f64>,
    /// True when the hyperparameters were re-selected for this iteration.
    pub refit: bool,
    pub wall_ms: u64,
}

/// `n0` draws from the mixture.
pub fn initial_design(mix: &GaussianMixture, n0: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n0 < 2 {
        return Err(Error::InvalidArgument(format!("n0 must be at least 2, got {n0}")));
    }
    Ok(mix.sample(n0, seed))
}

/// Mutable state of a design run.
#[derive(Debug)]
pub struct DesignState {
    data: Dataset,
    hyper: HyperparameterSample,
    mix: GaussianMixture,
    history: Vec<RunRecord>,
    rng_seed: u64,
    iteration: usize,
    offset: f64,
    contexts: Vec<AcquisitionContext>,
    steps: usize,
    refits: u64,
    draws: ChaCha8Rng,
}

fn wall_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn checked_eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Result<f64> {
    let y = f(x);
    if !y.is_finite() {
        return Err(Error::Evaluation { x: x.to_vec(), value: y });
    }
    Ok(y)
}

impl DesignState {
    /// Evaluates the initial design, selects hyperparameters on it and
    /// records one entry per initial point with the estimate from the
    /// points seen so far.
    pub fn initialize<F: FnMut(&[f64]) -> f64>(cfg: &DesignConfig, mix: &GaussianMixture, black_box: &mut F) -> Result<Self> {
        cfg.validate()?;
        if let Some(b) = &cfg.bounds {
            crate::error::check_dim(mix.dim(), b.dim())?;
        }
        let start = Instant::now();
        let points = initial_design(mix, cfg.n0, rng::derive_seed(cfg.seed, STREAM_INITIAL))?;
        let mut data = Dataset::empty(mix.dim());
        for x in points {
            let y = checked_eval(black_box, &x)?;
            data.push(x, y)?;
        }
        let mut state = Self {
            hyper: HyperparameterSample {
                kernel: RbfKernel::isotropic(1.0, 1.0, mix.dim())?,
                noise: crate::gp::NoiseModel::noiseless(),
            },
            data: Dataset::empty(mix.dim()),
            mix: mix.clone(),
            history: Vec::with_capacity(cfg.budget),
            rng_seed: cfg.seed,
            iteration: 0,
            offset: 0.0,
            contexts: Vec::new(),
            steps: 0,
            refits: 0,
            draws: rng::stream(cfg.seed, STREAM_RANDOM),
        };
        if cfg.strategy != Strategy::MonteCarlo {
            state.offset = if cfg.center_outputs { data.output_mean() } else { 0.0 };
            state.hyper = state.select(cfg, &data)?;
        }
        for (x, y) in data.inputs().iter().zip(data.outputs()) {
            state.data.push(x.clone(), *y)?;
            state.iteration += 1;
            let (mu1, sigma1) = state.estimate_after_push(cfg)?;
            state.history.push(RunRecord {
                iteration: state.iteration,
                chosen_x: x.clone(),
                observed_y: *y,
                mu1,
                sigma1,
                acquisition_at_chosen: 0.0,
                predicted_sigma2_sq: None,
                refit: state.iteration == 1,
                wall_ms: wall_ms(start),
            });
        }
        Ok(state)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hyper(&self) -> &HyperparameterSample {
        &self.hyper
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mix
    }

    pub fn history(&self) -> &[RunRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<RunRecord> {
        self.history
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Context for the selected hyperparameters on the current data.
    pub fn context(&self) -> Option<&AcquisitionContext> {
        self.contexts.first()
    }

    fn select(&mut self, cfg: &DesignConfig, data: &Dataset) -> Result<HyperparameterSample> {
        match &cfg.hyper {
            HyperMode::Fixed(h) => {
                crate::error::check_dim(data.dim(), h.kernel.dim())?;
                Ok(h.clone())
            }
            HyperMode::Auto(search) => {
                let mut search = search.clone();
                search.seed = rng::derive_seed(rng::derive_seed(cfg.seed, STREAM_HYPER), self.refits);
                self.refits += 1;
                select_hyperparameters(&data.shifted(self.offset), &search)
            }
        }
    }

    fn thetas(&self, cfg: &DesignConfig) -> Result<Vec<HyperparameterSample>> {
        let mut out = vec![self.hyper.clone()];
        if cfg.theta_samples > 1 {
            let mut r = rng::stream(rng::derive_seed(cfg.seed, STREAM_THETA), self.refits);
            let normal = Normal::new(0.0, cfg.theta_log_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for _ in 1..cfg.theta_samples {
                let amp = self.hyper.kernel.amplitude_sq() * normal.sample(&mut r).exp();
                let ls = self.hyper.kernel.lengthscales().iter().map(|l| l * normal.sample(&mut r).exp()).collect();
                out.push(HyperparameterSample { kernel: RbfKernel::new(amp, ls)?, noise: self.hyper.noise });
            }
        }
        Ok(out)
    }

    fn rebuild_contexts(&mut self, cfg: &DesignConfig) -> Result<()> {
        let centred = self.data.shifted(self.offset);
        let mut contexts = Vec::with_capacity(cfg.theta_samples);
        for h in self.thetas(cfg)? {
            let gp = GpPosterior::fit(centred.clone(), h.kernel.clone(), h.noise)?;
            let emb = KernelMeanEmbedding::new(&h.kernel, &self.mix)?;
            contexts.push(AcquisitionContext::with_embedding(gp, self.mix.clone(), emb)?.with_offset(self.offset));
        }
        self.contexts = contexts;
        Ok(())
    }

    fn estimate_after_push(&mut self, cfg: &DesignConfig) -> Result<(f64, f64)> {
        if cfg.strategy == Strategy::MonteCarlo {
            let n = self.data.len();
            let mean = self.data.output_mean();
            let se = if n > 1 { (self.data.output_variance() * n as f64 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
            return Ok((mean, se));
        }
        self.rebuild_contexts(cfg)?;
        let e = self.contexts[0].estimate();
        Ok((e.mean, e.std_dev()))
    }

    fn bounds(&self, cfg: &DesignConfig) -> BoxBounds {
        cfg.bounds.clone().unwrap_or_else(|| self.mix.support_box(5.0))
    }

    /// Mixture mean, then mixture draws inside the box (uniform after 100
    /// rejected draws).
    fn starts(&self, cfg: &DesignConfig, bounds: &BoxBounds) -> Vec<Vec<f64>> {
        let mut r = rng::stream(rng::derive_seed(cfg.seed, STREAM_STARTS), self.steps as u64);
        let mut out = vec![self.mix.mean()];
        while out.len() < cfg.optimizer.starts.max(1) {
            let mut chosen = None;
            for _ in 0..100 {
                let x = self.mix.sample_with(&mut r, 1).pop().expect("one draw");
                if bounds.contains(&x) {
                    chosen = Some(x);
                    break;
                }
            }
            out.push(chosen.unwrap_or_else(|| bounds.sample_uniform(&mut r)));
        }
        out
    }

    fn choose(&mut self, cfg: &DesignConfig) -> Result<(Vec<f64>, f64, Option<f64>)> {
        if cfg.strategy != Strategy::Acquisition {
            let x = self.mix.sample_with(&mut self.draws, 1).pop().expect("one draw");
            let predicted = self.contexts.first().map(|c| c.sigma2_sq(&x));
            let acq = self.contexts.first().map_or(0.0, |c| c.acquisition_value(&x));
            return Ok((x, acq, predicted));
        }
        let bounds = self.bounds(cfg);
        let starts = self.starts(cfg, &bounds);
        let mut opt_cfg = cfg.optimizer.clone();
        opt_cfg.seed = rng::derive_seed(rng::derive_seed(cfg.seed, STREAM_OPTIMIZER), self.steps as u64);
        let ctx = &self.contexts;
        let x = if ctx.len() == 1 {
            let c = &ctx[0];
            let s1 = c.sigma1_sq();
            let scale = if s1 > 0.0 { 1.0 / s1 } else { 1.0 };
            maximize_from(
                |x| c.acquisition_value(x) * scale,
                |x| c.acquisition_gradient(x).into_iter().map(|g| g * scale).collect(),
                &bounds,
                &opt_cfg,
                &starts,
            )?
            .x
        } else {
            maximize_from(
                |x| multi_theta_acquisition(ctx, x).unwrap_or(f64::NAN),
                |x| multi_theta_gradient(ctx, x).unwrap_or_else(|_| vec![f64::NAN; x.len()]),
                &bounds,
                &opt_cfg,
                &starts,
            )?
            .x
        };
        let c = &ctx[0];
        Ok((x.clone(), c.acquisition_value(&x), Some(c.sigma2_sq(&x))))
    }

    /// One design iteration.
    pub fn step<F: FnMut(&[f64]) -> f64>(&mut self, cfg: &DesignConfig, black_box: &mut F) -> Result<&RunRecord> {
        let start = Instant::now();
        self.steps += 1;
        let refit = cfg.strategy != Strategy::MonteCarlo
            && matches!(cfg.hyper, HyperMode::Auto(_))
            && cfg.refit_every > 0
            && self.steps > 1
            && (self.steps - 1) % cfg.refit_every == 0;
        if refit {
            self.offset = if cfg.center_outputs { self.data.output_mean() } else { 0.0 };
            let data = self.data.clone();
            self.hyper = self.select(cfg, &data)?;
            self.rebuild_contexts(cfg)?;
        }
        let (x, acq, predicted) = self.choose(cfg)?;
        let y = checked_eval(black_box, &x)?;
        self.data.push(x.clone(), y)?;
        self.iteration += 1;
        let (mu1, sigma1) = self.estimate_after_push(cfg)?;
        self.history.push(RunRecord {
            iteration: self.iteration,
            chosen_x: x,
            observed_y: y,
            mu1,
            sigma1,
            acquisition_at_chosen: acq,
            predicted_sigma2_sq: if refit { None } else { predicted },
            refit,
            wall_ms: wall_ms(start),
        });
        Ok(self.history.last().expect("just pushed"))
    }
}

fn should_stop(cfg: &DesignConfig, state: &DesignState) -> bool {
    cfg.sigma_stop > 0.0 && state.history.last().is_some_and(|r| r.sigma1 < cfg.sigma_stop)
}

/// Initial design followed by up to `budget − n0` steps.
pub fn run<F: FnMut(&[f64]) -> f64>(cfg: &DesignConfig, mix: &GaussianMixture, black_box: F) -> Result<Vec<RunRecord>> {
    Ok(run_state(cfg, mix, black_box)?.into_history())
}

/// Like [`run`], returning the final state.
pub fn run_state<F: FnMut(&[f64]) -> f64>(cfg: &DesignConfig, mix: &GaussianMixture, mut black_box: F) -> Result<DesignState> {
    let mut state = DesignState::initialize(cfg, mix, &mut black_box)?;
    while state.iteration < cfg.budget && !should_stop(cfg, &state) {
        state.step(cfg, &mut black_box)?;
    }
    Ok(state)
}
