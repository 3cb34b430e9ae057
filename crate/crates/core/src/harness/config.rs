//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{DesignConfig, HyperMode, Strategy};
use crate::gp::{HyperSearchConfig, HyperparameterSample};
use crate::mixture::{fit_em, EmConfig, GaussianMixture};
use crate::optimize::{BoxBounds, OptimizerConfig};
use crate::rng;

use super::benchmarks::BenchmarkProblem;
use super::HarnessError;

/// Where the input distribution comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MixtureSource {
    Inline(GaussianMixture),
    /// CSV with one column per dimension and no header, fitted by EM.
    SamplesFile { path: PathBuf, n_gmm: usize },
    /// Equal-weight Gaussian grid covering a box.
    UniformBox { lower: Vec<f64>, upper: Vec<f64>, per_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HyperConfig {
    Fixed(HyperparameterSample),
    Auto(HyperSearchConfig),
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig::Auto(HyperSearchConfig::default())
    }
}

fn default_refit_every() -> usize {
    5
}

fn default_theta_samples() -> usize {
    1
}

fn default_theta_log_std() -> f64 {
    0.2
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Acquisition, Strategy::Random]
}

fn default_seeds() -> usize {
    20
}

/// Configuration shared by `run` and `benchmark`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in black box: `x_squared`, `sin3x_plus_xsq` or `branin_gmm`.
    pub benchmark: String,
    /// Checked against the mixture and benchmark when given.
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Defaults to the benchmark's own input distribution.
    #[serde(default)]
    pub mixture: Option<MixtureSource>,
    #[serde(default)]
    pub hyperparameters: HyperConfig,
    pub n0: usize,
    pub budget: usize,
    #[serde(default)]
    pub sigma_stop: f64,
    #[serde(default = "default_refit_every")]
    pub refit_every: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub bounds: Option<BoxBounds>,
    #[serde(default = "default_theta_samples")]
    pub theta_samples: usize,
    #[serde(default = "default_theta_log_std")]
    pub theta_log_std: f64,
    /// Fit the surrogate to `y - mean(y)` and add the offset back to `mu1`.
    #[serde(default)]
    pub center_outputs: bool,
    /// Used by `run`.
    #[serde(default)]
    pub strategy: Option<Strategy>,
    /// Used by `benchmark`.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Used by `benchmark`: seeds `seed, seed+1, …`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    pub seed: u64,
    /// Output directory, relative to the config file.
    pub output: PathBuf,
}

/// A parsed config with its sources resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub problem: BenchmarkProblem,
    pub mixture: GaussianMixture,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Design settings for one seed and strategy.
    pub fn design(&self, strategy: Strategy, seed: u64) -> DesignConfig {
        DesignConfig {
            n0: self.n0,
            budget: self.budget,
            sigma_stop: self.sigma_stop,
            refit_every: self.refit_every,
            hyper: match &self.hyperparameters {
                HyperConfig::Fixed(h) => HyperMode::Fixed(h.clone()),
                HyperConfig::Auto(s) => HyperMode::Auto(s.clone()),
            },
            optimizer: self.optimizer.clone(),
            bounds: self.bounds.clone(),
            theta_samples: self.theta_samples,
            theta_log_std: self.theta_log_std,
            center_outputs: self.center_outputs,
            strategy,
            seed,
        }
    }

    /// Checks cross-field constraints and loads the mixture.
    pub fn resolve(self, base_dir: &Path) -> Result<ResolvedConfig, HarnessError> {
        let config = |m: String| HarnessError::Config(m);
        let problem = BenchmarkProblem::by_name(&self.benchmark)
            .ok_or_else(|| config(format!("unknown benchmark `{}` (expected one of {:?})", self.benchmark, BenchmarkProblem::NAMES)))?;
        if self.n0 < 2 {
            return Err(config(format!("n0 must be at least 2, got {}", self.n0)));
        }
        if self.budget < self.n0 {
            return Err(config(format!("budget {} is below n0 {}", self.budget, self.n0)));
        }
        if self.seeds == 0 {
            return Err(config("seeds must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(config("strategies must not be empty".into()));
        }
        let mixture = match &self.mixture {
            None => problem.default_mixture(),
            Some(MixtureSource::Inline(m)) => m.clone(),
            Some(MixtureSource::UniformBox { lower, upper, per_dim }) => {
                GaussianMixture::from_box(lower, upper, *per_dim).map_err(|e| config(format!("uniform_box: {e}")))?
            }
            Some(MixtureSource::SamplesFile { path, n_gmm }) => {
                let samples = read_samples(&base_dir.join(path))?;
                let em = EmConfig { seed: rng::derive_seed(self.seed, 0xe3), ..Default::default() };
                fit_em(&samples, *n_gmm, &em).map_err(|e| config(format!("samples_file: {e}")))?
            }
        };
        let d = mixture.dim();
        if let Some(expected) = self.dimension {
            if expected != d {
                return Err(config(format!("dimension is {expected} but the mixture has dimension {d}")));
            }
        }
        if let Some(pd) = problem.dim {
            if pd != d {
                return Err(config(format!("benchmark `{}` is {pd}-dimensional but the mixture has dimension {d}", problem.name)));
            }
        }
        if let Some(b) = &self.bounds {
            if b.dim() != d {
                return Err(config(format!("bounds have dimension {} but the mixture has dimension {d}", b.dim())));
            }
        }
        if let HyperConfig::Fixed(h) = &self.hyperparameters {
            if h.kernel.dim() != d {
                return Err(config(format!("fixed kernel has dimension {} but the mixture has dimension {d}", h.kernel.dim())));
            }
        }
        self.design(Strategy::Acquisition, self.seed).validate().map_err(|e| config(e.to_string()))?;
        let output = base_dir.join(&self.output);
        Ok(ResolvedConfig { raw: self, problem, mixture, output })
    }
}

fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let err = |m: String| HarnessError::Config(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        if let Some(first) = out.first().map(Vec::len) {
            if row.len() != first {
                return Err(err(format!("line {}: expected {first} columns, found {}", i + 1, row.len())));
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(err("no samples".into()));
    }
    Ok(out)
}
