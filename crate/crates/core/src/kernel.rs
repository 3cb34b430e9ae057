//! Squared-exponential (RBF) kernel with per-dimension scales.
//!
//! The lengthscales are stored as the diagonal of the scale matrix `Λ`
//! (variances, not standard deviations), so that
//! `k(a, b) = s² exp(-½ (a-b)ᵀ Λ⁻¹ (a-b))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct RbfKernel {
    amplitude_sq: f64,
    lengthscales: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    amplitude_sq: f64,
    lengthscales: Vec<f64>,
}

impl TryFrom<RawKernel> for RbfKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        RbfKernel::new(raw.amplitude_sq, raw.lengthscales)
    }
}

impl From<RbfKernel> for RawKernel {
    fn from(k: RbfKernel) -> Self {
        RawKernel { amplitude_sq: k.amplitude_sq, lengthscales: k.lengthscales }
    }
}

impl RbfKernel {
    pub fn new(amplitude_sq: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(amplitude_sq > 0.0 && amplitude_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude_sq must be positive and finite, got {amplitude_sq}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one dimension".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "lengthscales must be positive and finite, got {l}"
            )));
        }
        Ok(Self { amplitude_sq, lengthscales })
    }

    /// Isotropic kernel with the same scale in every dimension.
    pub fn isotropic(amplitude_sq: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude_sq, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn amplitude_sq(&self) -> f64 {
        self.amplitude_sq
    }

    /// Diagonal of `Λ`.
    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// `Λ` as a dense diagonal matrix.
    pub fn scale_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.lengthscales))
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let diff = x - y;
            q += diff * diff / l;
        }
        self.amplitude_sq * (-0.5 * q).exp()
    }

    /// Gradient of `k(a, b)` with respect to `a`: `-Λ⁻¹(a-b) k(a,b)`.
    pub fn gradient(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(a, b, &mut out);
        Ok(out)
    }

    /// Writes `∂k/∂a` into `out` and returns `k(a, b)`.
    pub(crate) fn gradient_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
        let k = self.eval_unchecked(a, b);
        for j in 0..a.len() {
            out[j] = -(a[j] - b[j]) / self.lengthscales[j] * k;
        }
        k
    }

    /// `K(X, X)` with `K_ij = k(x_i, x_j)`.
    pub fn matrix(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        for p in points {
            check_dim(self.dim(), p.len())?;
        }
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.amplitude_sq;
            for j in 0..i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// `k(x, X)` as a column vector.
    pub fn vector(&self, x: &[f64], points: &[Vec<f64>]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        for p in points {
            check_dim(self.dim(), p.len())?;
        }
        Ok(self.vector_unchecked(x, points))
    }

    pub(crate) fn vector_unchecked(&self, x: &[f64], points: &[Vec<f64>]) -> DVector<f64> {
        DVector::from_iterator(points.len(), points.iter().map(|p| self.eval_unchecked(x, p)))
    }
}

/// `s² exp(-½ (a-b)ᵀ S⁻¹ (a-b))` for a general SPD scale `S`.
///
/// Factorizes `scale` on every call; use [`ScaledKernel`] for repeated evaluation.
pub fn eval_kernel_scaled(a: &[f64], b: &[f64], amplitude_sq: f64, scale: &DMatrix<f64>) -> Result<f64> {
    ScaledKernel::new(amplitude_sq, scale.clone())?.eval(a, b)
}

/// RBF kernel with a full SPD scale matrix, factorized once.
#[derive(Debug, Clone)]
pub struct ScaledKernel {
    amplitude_sq: f64,
    chol: Cholesky<f64, Dyn>,
}

impl ScaledKernel {
    pub fn new(amplitude_sq: f64, scale: DMatrix<f64>) -> Result<Self> {
        if !scale.is_square() || scale.nrows() == 0 {
            return Err(Error::InvalidArgument("scale must be a non-empty square matrix".into()));
        }
        if !is_symmetric(&scale) {
            return Err(Error::InvalidArgument("scale matrix is not symmetric".into()));
        }
        let chol = Cholesky::new(scale)
            .ok_or_else(|| Error::InvalidArgument("scale matrix is not positive definite".into()))?;
        Ok(Self { amplitude_sq, chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `log |S|`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
        let z = self.solve_lower(diff);
        self.amplitude_sq * (-0.5 * z.norm_squared()).exp()
    }

    /// Returns `k(a, b)` and `S⁻¹(a - b)`.
    pub(crate) fn eval_with_solve(&self, a: &[f64], b: &[f64]) -> (f64, DVector<f64>) {
        let diff = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
        let solved = self.chol.solve(&diff);
        let q = diff.dot(&solved);
        (self.amplitude_sq * (-0.5 * q).exp(), solved)
    }

    fn solve_lower(&self, mut v: DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        v
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn kernel_values() {
        let k = RbfKernel::new(2.5, vec![0.7, 1.3]).unwrap();
        assert_eq!(k.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 2.5);

        let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
        assert_relative_eq!(k.eval(&[0.0], &[1.0]).unwrap(), 0.606_530_659_712_633_4, epsilon = 1e-15);

        let k = RbfKernel::new(1.0, vec![1.0, 4.0]).unwrap();
        assert_relative_eq!(k.eval(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RbfKernel::new(0.0, vec![1.0]).is_err());
        assert!(RbfKernel::new(1.0, vec![]).is_err());
        assert!(RbfKernel::new(1.0, vec![1.0, -1.0]).is_err());
        let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
        assert_eq!(
            k.eval(&[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn scaled_kernel_values() {
        let s = DMatrix::from_element(1, 1, 2.0);
        assert_relative_eq!(eval_kernel_scaled(&[0.0], &[2.0], 1.0, &s).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(eval_kernel_scaled(&[0.4], &[0.4], 3.0, &s).unwrap(), 3.0);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(eval_kernel_scaled(&[0.0, 0.0], &[1.0, 0.0], 1.0, &bad), Err(Error::InvalidArgument(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(eval_kernel_scaled(&[0.0, 0.0], &[1.0, 0.0], 1.0, &asym).is_err());
    }

    #[test]
    fn scaled_kernel_reduces_to_diagonal_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k1 = RbfKernel::new(1.0, vec![1.0]).unwrap();
        let s1 = ScaledKernel::new(1.0, k1.scale_matrix()).unwrap();
        for _ in 0..100 {
            let a = random_point(&mut rng, 1);
            let b = random_point(&mut rng, 1);
            assert_relative_eq!(s1.eval(&a, &b).unwrap(), k1.eval(&a, &b).unwrap(), max_relative = 1e-14);
        }
        let k3 = RbfKernel::new(1.7, vec![0.3, 2.0, 0.9]).unwrap();
        let s3 = ScaledKernel::new(1.7, k3.scale_matrix()).unwrap();
        for _ in 0..100 {
            let a = random_point(&mut rng, 3);
            let b = random_point(&mut rng, 3);
            assert_relative_eq!(s3.eval(&a, &b).unwrap(), k3.eval(&a, &b).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn matrix_and_vector_shapes() {
        let k = RbfKernel::new(1.5, vec![0.5]).unwrap();
        assert_eq!(k.matrix(&[vec![0.2]]).unwrap(), DMatrix::from_element(1, 1, 1.5));
        assert_eq!(k.matrix(&[vec![0.2], vec![0.2]]).unwrap(), DMatrix::from_element(2, 2, 1.5));
        assert_eq!(k.vector(&[0.0], &[]).unwrap().len(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| random_point(&mut rng, 1)).collect();
        let m = k.matrix(&pts).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m[(i, j)], k.eval(&pts[i], &pts[j]).unwrap());
            }
        }
        let x = random_point(&mut rng, 1);
        let v = k.vector(&x, &pts[..3]).unwrap();
        for i in 0..3 {
            assert_eq!(v[i], k.eval(&x, &pts[i]).unwrap());
        }
        let v = k.vector(&pts[2], &pts).unwrap();
        assert_eq!(v[2], 1.5);
    }

    #[test]
    fn gradient_values() {
        let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
        assert_eq!(k.gradient(&[0.5], &[0.5]).unwrap(), vec![0.0]);
        assert_relative_eq!(k.gradient(&[1.0], &[0.0]).unwrap()[0], -0.606_530_659_712_633_4, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..100 {
            let d = rng.random_range(1..=3);
            let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..3.0)).collect();
            let k = RbfKernel::new(rng.random_range(0.5..2.0), ls).unwrap();
            let a = random_point(&mut rng, d);
            let b = random_point(&mut rng, d);
            let g = k.gradient(&a, &b).unwrap();
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..d {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[j] += h;
                am[j] -= h;
                let fd = (k.eval(&ap, &b).unwrap() - k.eval(&am, &b).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * gnorm.max(1e-3), "fd {fd} vs {}", g[j]);
            }
        }
    }
}
