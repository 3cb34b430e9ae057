//! Gaussian-mixture input distributions.
//!
//! Serialized as `{"components":[{"weight":…,"mean":[…],"cov":[[…]]}]}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::optimize::BoxBounds;
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One weighted Gaussian `α N(w, Σ)`.
#[derive(Debug, Clone)]
pub struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mixture parameters must be finite".into()));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..cov.nrows() {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("component covariance is not symmetric".into()));
                }
            }
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidArgument("component covariance is not positive definite".into()))?;
        let l = chol.l_dirty();
        let log_det: f64 = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + log_det);
        Ok(Self { weight, mean, cov, chol, log_norm })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `log N(x; w, Σ)` without the mixture weight.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        self.chol.l_dirty().solve_lower_triangular_mut(&mut diff);
        self.log_norm - 0.5 * diff.norm_squared()
    }

    fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_iterator(self.mean.len(), (0..self.mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let l = self.chol.l();
        (&self.mean + l * z).iter().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    components: Vec<RawComponent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawMixture {
            components: self
                .components
                .iter()
                .map(|c| RawComponent {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: c.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMixture::deserialize(d)?;
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for c in raw.components {
            let n = c.mean.len();
            if c.cov.len() != n || c.cov.iter().any(|r| r.len() != n) {
                return Err(serde::de::Error::custom("cov must be a square matrix matching the mean"));
            }
            weights.push(c.weight);
            covs.push(DMatrix::from_row_iterator(n, n, c.cov.into_iter().flatten()));
            means.push(c.mean);
        }
        GaussianMixture::new(weights, means, covs).map_err(serde::de::Error::custom)
    }
}

impl GaussianMixture {
    /// Weights must be positive and sum to one within 1e-6; they are
    /// renormalized exactly.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        check_dim(weights.len(), means.len())?;
        check_dim(weights.len(), covs.len())?;
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, expected 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be at least 1".into()));
        }
        let components = weights
            .into_iter()
            .zip(means)
            .zip(covs)
            .map(|((w, m), c)| {
                check_dim(dim, m.len())?;
                Component::new(w / total, DVector::from_vec(m), c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, components })
    }

    pub fn single(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn normal_1d(mean: f64, variance: f64) -> Result<Self> {
        Self::single(vec![mean], DMatrix::from_element(1, 1, variance))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension does not match the mixture");
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_density(x)))
    }

    /// `count` draws; the component is picked by weight, then a Gaussian draw.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_with(&mut rng::seeded(seed), count)
    }

    pub fn sample_with(&self, rng: &mut impl Rng, count: usize) -> Vec<Vec<f64>> {
        if self.components.len() == 1 {
            return (0..count).map(|_| self.components[0].draw(rng)).collect();
        }
        let index = WeightedIndex::new(self.components.iter().map(|c| c.weight)).expect("weights validated");
        (0..count).map(|_| self.components[index.sample(rng)].draw(rng)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.components {
            m += &c.mean * c.weight;
        }
        m.iter().copied().collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = DVector::from_vec(self.mean());
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let diff = &c.mean - &mu;
            cov += (&c.cov + &diff * diff.transpose()) * c.weight;
        }
        cov
    }

    /// Smallest box containing every component mean ± `n_std` of that
    /// component's per-dimension standard deviation.
    pub fn support_box(&self, n_std: f64) -> BoxBounds {
        let mut lower = vec![f64::INFINITY; self.dim];
        let mut upper = vec![f64::NEG_INFINITY; self.dim];
        for c in &self.components {
            for j in 0..self.dim {
                let r = n_std * c.cov[(j, j)].sqrt();
                lower[j] = lower[j].min(c.mean[j] - r);
                upper[j] = upper[j].max(c.mean[j] + r);
            }
        }
        BoxBounds::new(lower, upper).expect("component variances are positive")
    }

    /// Grid of `per_dim^d` equal-weight Gaussians spreading a uniform box,
    /// each with per-dimension standard deviation `(upper-lower)/(2·per_dim)`.
    pub fn from_box(lower: &[f64], upper: &[f64], per_dim: usize) -> Result<Self> {
        let bounds = BoxBounds::new(lower.to_vec(), upper.to_vec())?;
        if per_dim == 0 {
            return Err(Error::InvalidArgument("per_dim must be at least 1".into()));
        }
        let d = bounds.dim();
        let total = (per_dim as f64).powi(d as i32);
        if total > 1e5 {
            return Err(Error::Size(format!("{per_dim}^{d} mixture components exceed 1e5")));
        }
        let total = total as usize;
        let widths: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| (u - l) / per_dim as f64).collect();
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(d, widths.iter().map(|w| (0.5 * w).powi(2))));
        let mut means = Vec::with_capacity(total);
        for mut idx in 0..total {
            let m: Vec<f64> = (0..d)
                .map(|j| {
                    let i = idx % per_dim;
                    idx /= per_dim;
                    lower[j] + (i as f64 + 0.5) * widths[j]
                })
                .collect();
            means.push(m);
        }
        let w = 1.0 / total as f64;
        Self::new(vec![w; total], means, vec![cov; total])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixture serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-10, seed: 0 }
    }
}

/// Fitted mixture with the per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    pub log_likelihood: Vec<f64>,
}

/// EM fit of a `k`-component mixture, k-means++ initialized.
pub fn fit_em(samples: &[Vec<f64>], k: usize, cfg: &EmConfig) -> Result<GaussianMixture> {
    Ok(fit_em_traced(samples, k, cfg)?.mixture)
}

pub fn fit_em_traced(samples: &[Vec<f64>], k: usize, cfg: &EmConfig) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if samples.len() < 10 * k {
        return Err(Error::InsufficientData { needed: 10 * k, found: samples.len() });
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("samples must have at least one coordinate".into()));
    }
    let points: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| {
            check_dim(d, s.len())?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("samples must be finite".into()));
            }
            Ok(DVector::from_column_slice(s))
        })
        .collect::<Result<_>>()?;
    let n = points.len();

    let (data_mean, data_cov) = weighted_moments(&points, &vec![1.0; n]);
    let floor = 1e-6 * (data_cov.trace() / d as f64).max(f64::MIN_POSITIVE);

    // k-means++ seeding followed by a few Lloyd iterations.
    let mut rng = rng::stream(cfg.seed, 0);
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let dist: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| (p - c).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect();
        let next = match WeightedIndex::new(&dist) {
            Ok(idx) => idx.sample(&mut rng),
            Err(_) => rng.random_range(0..n),
        };
        centers.push(points[next].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..10 {
        for (i, p) in points.iter().enumerate() {
            labels[i] = (0..k)
                .min_by(|a, b| (p - &centers[*a]).norm_squared().total_cmp(&(p - &centers[*b]).norm_squared()))
                .unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                *center = members.iter().fold(DVector::zeros(d), |acc, p| acc + *p) / members.len() as f64;
            }
        }
    }

    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let resp: Vec<f64> = labels.iter().map(|l| if *l == c { 1.0 } else { 0.0 }).collect();
        let count: f64 = resp.iter().sum();
        if count >= 2.0 {
            let (m, s) = weighted_moments(&points, &resp);
            weights.push(count / n as f64);
            means.push(m);
            covs.push(apply_floor(s, floor));
        } else {
            weights.push(1.0 / n as f64);
            means.push(centers[c].clone());
            covs.push(apply_floor(data_cov.clone(), floor));
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut trace = Vec::new();
    let mut resp = vec![vec![0.0; n]; k];
    let mut mixture = build(&weights, &means, &covs)?;
    for _ in 0..cfg.max_iterations {
        // E-step
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let x = p.as_slice();
            let logs: Vec<f64> = mixture.components.iter().map(|c| c.weight.ln() + c.log_density(x)).collect();
            let lse = log_sum_exp(logs.iter().copied());
            ll += lse;
            for c in 0..k {
                resp[c][i] = (logs[c] - lse).exp();
            }
        }
        trace.push(ll);
        if let [.., prev, last] = trace.as_slice() {
            if last - prev <= cfg.tolerance * last.abs().max(1.0) {
                break;
            }
        }
        // M-step
        for c in 0..k {
            let nk: f64 = resp[c].iter().sum();
            if nk <= 1e-12 * n as f64 {
                continue;
            }
            let (m, s) = weighted_moments(&points, &resp[c]);
            weights[c] = nk / n as f64;
            means[c] = m;
            covs[c] = apply_floor(s, floor);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        mixture = build(&weights, &means, &covs)?;
    }
    let _ = data_mean;
    Ok(EmFit { mixture, log_likelihood: trace })
}

fn build(weights: &[f64], means: &[DVector<f64>], covs: &[DMatrix<f64>]) -> Result<GaussianMixture> {
    GaussianMixture::new(
        weights.to_vec(),
        means.iter().map(|m| m.iter().copied().collect()).collect(),
        covs.to_vec(),
    )
}

/// Weighted mean and (maximum-likelihood) covariance.
fn weighted_moments(points: &[DVector<f64>], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let total: f64 = w.iter().sum();
    let mut mean = DVector::zeros(d);
    for (p, wi) in points.iter().zip(w) {
        mean += p * *wi;
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (p, wi) in points.iter().zip(w) {
        let diff = p - &mean;
        cov += &diff * diff.transpose() * *wi;
    }
    cov /= total;
    // exact symmetry for the Cholesky check
    let cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

/// Clamps eigenvalues of `cov` at `floor`; returns `cov` untouched when no clamping is needed.
fn apply_floor(cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().all(|v| *v >= floor) {
        return cov;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pdf_values() {
        let m = GaussianMixture::normal_1d(0.0, 1.0).unwrap();
        assert_relative_eq!(m.pdf(&[0.0]), 0.398_942_280_401_432_7, epsilon = 1e-15);
        let two = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![1.0]],
            vec![DMatrix::from_element(1, 1, 1.0); 2],
        )
        .unwrap();
        assert_relative_eq!(two.pdf(&[0.0]), 0.241_970_724_519_143_37, epsilon = 1e-15);
    }

    #[test]
    fn validation() {
        let c = || DMatrix::from_element(1, 1, 1.0);
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], vec![c(), c()]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![DMatrix::from_element(1, 1, -1.0)]).is_err());
        assert!(GaussianMixture::new(vec![1.0, 0.0], vec![vec![0.0], vec![1.0]], vec![c(), c()]).is_err());
        let m = GaussianMixture::new(vec![0.3, 0.7 + 1e-9], vec![vec![0.0], vec![1.0]], vec![c(), c()]).unwrap();
        let s: f64 = m.components().iter().map(|c| c.weight()).sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sampling_is_seeded() {
        let m = GaussianMixture::normal_1d(2.0, 0.25).unwrap();
        assert!(m.sample(0, 1).is_empty());
        assert_eq!(m.sample(50, 4), m.sample(50, 4));
        assert_ne!(m.sample(50, 4), m.sample(50, 5));
        let n = 100_000;
        let draws = m.sample(n, 3);
        let mean = draws.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let text = r#"{"components":[{"weight":0.25,"mean":[0.0,1.0],"cov":[[1.0,0.2],[0.2,2.0]]},
                                      {"weight":0.75,"mean":[3.0,-1.0],"cov":[[0.5,0.0],[0.0,0.5]]}]}"#;
        let m = GaussianMixture::from_json(text).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.components()[0].cov()[(0, 1)], 0.2);
        let back = GaussianMixture::from_json(&m.to_json()).unwrap();
        assert_eq!(back.pdf(&[0.3, 0.1]), m.pdf(&[0.3, 0.1]));
        assert!(GaussianMixture::from_json(r#"{"components":[],"extra":1}"#).is_err());
        assert!(GaussianMixture::from_json(r#"{"components":[{"weight":1.0,"mean":[0.0],"cov":[[1.0,0.0]]}]}"#).is_err());
    }

    #[test]
    fn box_mixture() {
        let m = GaussianMixture::from_box(&[0.0], &[1.0], 1).unwrap();
        assert_eq!(m.len(), 1);
        assert_relative_eq!(m.components()[0].mean()[0], 0.5);
        assert_relative_eq!(m.components()[0].cov()[(0, 0)], 0.25);

        let m = GaussianMixture::from_box(&[-1.0, 2.0], &[3.0, 5.0], 5).unwrap();
        assert_eq!(m.len(), 25);
        let mean = m.mean();
        assert!((mean[0] - 1.0).abs() < 1e-12 && (mean[1] - 3.5).abs() < 1e-12);

        assert!(matches!(GaussianMixture::from_box(&[0.0; 3], &[1.0; 3], 50), Err(Error::Size(_))));
        assert!(GaussianMixture::from_box(&[1.0], &[0.0], 2).is_err());
    }

    #[test]
    fn box_mixture_approximates_uniform_density() {
        let m = GaussianMixture::from_box(&[0.0], &[1.0], 4).unwrap();
        for i in 0..=80 {
            let x = 0.1 + 0.01 * i as f64;
            assert!((m.pdf(&[x]) - 1.0).abs() < 0.15, "pdf({x}) = {}", m.pdf(&[x]));
        }
    }

    #[test]
    fn em_single_component_is_sample_moments() {
        let m = GaussianMixture::single(vec![1.0, -2.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let xs = m.sample(2000, 9);
        let fit = fit_em(&xs, 1, &EmConfig::default()).unwrap();
        let pts: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_column_slice(x)).collect();
        let (mean, cov) = weighted_moments(&pts, &vec![1.0; pts.len()]);
        let c = &fit.components()[0];
        assert!((c.mean() - mean).amax() < 1e-12);
        assert!((c.cov() - cov).amax() < 1e-12);
    }

    #[test]
    fn em_rejects_small_samples() {
        let xs = vec![vec![0.0]; 15];
        assert_eq!(fit_em(&xs, 2, &EmConfig::default()).unwrap_err(), Error::InsufficientData { needed: 20, found: 15 });
    }

    #[test]
    fn em_handles_collapsed_clusters() {
        let mut xs = vec![vec![0.0]; 30];
        xs.extend((0..30).map(|i| vec![5.0 + 0.01 * i as f64]));
        let fit = fit_em_traced(&xs, 2, &EmConfig::default()).unwrap();
        assert_eq!(fit.mixture.len(), 2);
        assert!(fit.log_likelihood.iter().all(|v| v.is_finite()));
    }
}
