//! Bounded multi-start projected gradient ascent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Axis-aligned feasible box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds", into = "RawBounds")]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBounds> for BoxBounds {
    type Error = Error;
    fn try_from(raw: RawBounds) -> Result<Self> {
        BoxBounds::new(raw.lower, raw.upper)
    }
}

impl From<BoxBounds> for RawBounds {
    fn from(b: BoxBounds) -> Self {
        RawBounds { lower: b.lower, upper: b.upper }
    }
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("bounds need at least one dimension".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidArgument(format!("invalid bound pair [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v >= l && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.random_range(*l..=*u)).collect()
    }

    /// Tensor grid with `per_axis` points per dimension, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|j| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let t = i as f64 / (per_axis - 1) as f64;
                        self.lower[j] + t * (self.upper[j] - self.lower[j])
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop a start once the projected gradient norm falls below this.
    pub gradient_tolerance: f64,
    /// Backtracking factor in (0, 1).
    pub step_shrink: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 8, max_iterations: 200, gradient_tolerance: 1e-9, step_shrink: 0.5, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidArgument("optimizer needs at least one start".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidArgument("gradient_tolerance must be positive".into()));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::InvalidArgument("step_shrink must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Index of the start that produced `x`.
    pub start_index: usize,
    /// Starts dropped because a probe returned a non-finite value.
    pub abandoned_starts: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Maximizes `value_fn` over `bounds` from uniformly drawn starts.
pub fn maximize<F, G>(value_fn: F, gradient_fn: G, bounds: &BoxBounds, cfg: &OptimizerConfig) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    maximize_from(value_fn, gradient_fn, bounds, cfg, &[])
}

/// Like [`maximize`], but the first starts are taken from `initial`; the
/// remaining `cfg.starts - initial.len()` are drawn uniformly from the box.
pub fn maximize_from<F, G>(
    mut value_fn: F,
    mut gradient_fn: G,
    bounds: &BoxBounds,
    cfg: &OptimizerConfig,
    initial: &[Vec<f64>],
) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    let n_starts = cfg.starts.max(initial.len());
    let mut best: Option<Optimum> = None;
    let mut abandoned = 0;
    for s in 0..n_starts {
        let mut x0 = match initial.get(s) {
            Some(p) => {
                check_dim(bounds.dim(), p.len())?;
                p.clone()
            }
            None => bounds.sample_uniform(&mut rng::stream(cfg.seed, s as u64)),
        };
        bounds.project(&mut x0);
        match ascend(&mut value_fn, &mut gradient_fn, bounds, cfg, x0) {
            Some((x, value)) => {
                if best.as_ref().map_or(true, |b| value > b.value) {
                    best = Some(Optimum { x, value, start_index: s, abandoned_starts: 0 });
                }
            }
            None => abandoned += 1,
        }
    }
    match best {
        Some(mut b) => {
            b.abandoned_starts = abandoned;
            Ok(b)
        }
        None => Err(Error::OptimizationFailed { starts: n_starts }),
    }
}

/// Single projected-gradient run; `None` when a probe is non-finite.
fn ascend<F, G>(
    value_fn: &mut F,
    gradient_fn: &mut G,
    bounds: &BoxBounds,
    cfg: &OptimizerConfig,
    mut x: Vec<f64>,
) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let mut f = value_fn(&x);
    if !f.is_finite() {
        return None;
    }
    let diam = bounds.diameter();
    let mut step: Option<f64> = None;
    for _ in 0..cfg.max_iterations {
        let g = gradient_fn(&x);
        if g.len() != x.len() || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + b).collect();
        bounds.project(&mut probe);
        let pg_norm = norm_diff(&probe, &x);
        if pg_norm < cfg.gradient_tolerance {
            break;
        }
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut t = match step {
            Some(t) => t * 2.0,
            None => 0.1 * diam / g_norm,
        };
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
            bounds.project(&mut trial);
            let moved = norm_diff(&trial, &x);
            if moved <= 1e-15 * diam.max(1.0) {
                break;
            }
            let ft = value_fn(&trial);
            if !ft.is_finite() {
                return None;
            }
            let predicted: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if ft >= f && ft >= f + ARMIJO * predicted {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= cfg.step_shrink;
        }
        if !accepted {
            break;
        }
        step = Some(t);
    }
    Some((x, f))
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(seed: u64) -> OptimizerConfig {
        OptimizerConfig { seed, ..Default::default() }
    }

    #[test]
    fn concave_quadratic_interior() {
        let c = [0.3, -0.7];
        let b = BoxBounds::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let opt = maximize(
            |x| -((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)),
            |x| vec![-2.0 * (x[0] - c[0]), -2.0 * (x[1] - c[1])],
            &b,
            &cfg(1),
        )
        .unwrap();
        assert_abs_diff_eq!(opt.x[0], c[0], epsilon = 1e-6);
        assert_abs_diff_eq!(opt.x[1], c[1], epsilon = 1e-6);
    }

    #[test]
    fn linear_objective_hits_boundary() {
        let b = BoxBounds::new(vec![0.0], vec![1.0]).unwrap();
        let opt = maximize(|x| x[0], |_| vec![1.0], &b, &cfg(2)).unwrap();
        assert_eq!(opt.x, vec![1.0]);
        assert_eq!(opt.value, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let b = BoxBounds::new(vec![-3.0], vec![3.0]).unwrap();
        let f = |x: &[f64]| (3.0 * x[0]).sin() - 0.1 * x[0] * x[0];
        let g = |x: &[f64]| vec![3.0 * (3.0 * x[0]).cos() - 0.2 * x[0]];
        let a = maximize(f, g, &b, &cfg(9)).unwrap();
        let c = maximize(f, g, &b, &cfg(9)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn non_finite_starts_are_abandoned() {
        let b = BoxBounds::new(vec![-1.0], vec![1.0]).unwrap();
        let opt = maximize_from(
            |x| if x[0] < -0.9 { f64::NAN } else { -x[0] * x[0] },
            |x| vec![-2.0 * x[0]],
            &b,
            &OptimizerConfig { starts: 2, ..Default::default() },
            &[vec![-0.95], vec![0.5]],
        )
        .unwrap();
        assert_eq!(opt.abandoned_starts, 1);
        assert_eq!(opt.start_index, 1);

        let err = maximize(|_| f64::NAN, |_| vec![0.0], &b, &cfg(0)).unwrap_err();
        assert_eq!(err, Error::OptimizationFailed { starts: 8 });
    }

    #[test]
    fn iterates_stay_feasible_and_monotone() {
        use std::cell::RefCell;
        let b = BoxBounds::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let probes = RefCell::new(Vec::new());
        let f = |x: &[f64]| {
            probes.borrow_mut().push(x.to_vec());
            -(x[0] - 3.0).powi(2) - (x[1] + 1.0).powi(2) + x[0] * x[1]
        };
        let g = |x: &[f64]| vec![-2.0 * (x[0] - 3.0) + x[1], -2.0 * (x[1] + 1.0) + x[0]];
        let opt = maximize(f, g, &b, &cfg(4)).unwrap();
        assert!(probes.borrow().iter().all(|p| b.contains(p)));
        for p in b.grid(32) {
            let v = -(p[0] - 3.0).powi(2) - (p[1] + 1.0).powi(2) + p[0] * p[1];
            assert!(opt.value >= v - 1e-9);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let b = BoxBounds::new(vec![0.0], vec![1.0]).unwrap();
        let bad = OptimizerConfig { step_shrink: 1.5, ..Default::default() };
        assert!(maximize(|x| x[0], |_| vec![1.0], &b, &bad).is_err());
        assert!(BoxBounds::new(vec![1.0], vec![0.0]).is_err());
    }
}
