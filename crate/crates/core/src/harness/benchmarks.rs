//! Built-in black boxes with reference values of `q`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::mixture::GaussianMixture;
use crate::rng;

/// Draws used for Monte-Carlo reference values.
pub const REFERENCE_SAMPLES: usize = 10_000_000;
pub const REFERENCE_SEED: u64 = 0x00b0_a11d;

/// Reference `q` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    Analytic { value: f64 },
    MonteCarlo { value: f64, std_error: f64, samples: usize, seed: u64 },
}

impl Reference {
    pub fn value(&self) -> f64 {
        match *self {
            Reference::Analytic { value } | Reference::MonteCarlo { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    /// `None` when any dimension is accepted.
    pub dim: Option<usize>,
    pub f: fn(&[f64]) -> f64,
}

pub fn x_squared(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn sin3x_plus_xsq(x: &[f64]) -> f64 {
    (3.0 * x[0]).sin() + x[0] * x[0]
}

/// Branin–Hoo function.
pub fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x[1] - b * x[0] * x[0] + c * x[0] - 6.0).powi(2) + 10.0 * (1.0 - t) * x[0].cos() + 10.0
}

impl BenchmarkProblem {
    pub const NAMES: [&'static str; 3] = ["x_squared", "sin3x_plus_xsq", "branin_gmm"];

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "x_squared" => Some(Self { name: "x_squared", dim: None, f: x_squared }),
            "sin3x_plus_xsq" => Some(Self { name: "sin3x_plus_xsq", dim: Some(1), f: sin3x_plus_xsq }),
            "branin_gmm" => Some(Self { name: "branin_gmm", dim: Some(2), f: branin }),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Standard normal for the 1-d problems; for Branin, three unit-covariance
    /// components centred on its global minimizers.
    pub fn default_mixture(&self) -> GaussianMixture {
        match self.name {
            "branin_gmm" => GaussianMixture::new(
                vec![1.0 / 3.0; 3],
                vec![vec![-PI, 12.275], vec![PI, 2.275], vec![9.42478, 2.475]],
                vec![DMatrix::identity(2, 2); 3],
            )
            .expect("valid mixture"),
            _ => GaussianMixture::normal_1d(0.0, 1.0).expect("valid mixture"),
        }
    }

    /// Closed form where one exists, otherwise a seeded Monte-Carlo estimate.
    pub fn reference(&self, mix: &GaussianMixture) -> Reference {
        match self.name {
            "x_squared" => {
                let mean = mix.mean();
                let cov = mix.covariance();
                Reference::Analytic { value: (0..mix.dim()).map(|j| cov[(j, j)] + mean[j] * mean[j]).sum() }
            }
            "sin3x_plus_xsq" => Reference::Analytic {
                value: mix
                    .components()
                    .iter()
                    .map(|c| {
                        let (m, v) = (c.mean()[0], c.cov()[(0, 0)]);
                        c.weight() * ((3.0 * m).sin() * (-4.5 * v).exp() + m * m + v)
                    })
                    .sum(),
            },
            _ => monte_carlo_reference(self.f, mix, REFERENCE_SAMPLES, REFERENCE_SEED),
        }
    }
}

/// Streaming Monte-Carlo mean of `f` under the mixture.
pub fn monte_carlo_reference(f: fn(&[f64]) -> f64, mix: &GaussianMixture, samples: usize, seed: u64) -> Reference {
    const CHUNK: usize = 65_536;
    let mut r = rng::seeded(seed);
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    while n < samples {
        for x in mix.sample_with(&mut r, CHUNK.min(samples - n)) {
            n += 1;
            let v = f(&x);
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
    }
    let std_error = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
    Reference::MonteCarlo { value: mean, std_error, samples, seed }
}
