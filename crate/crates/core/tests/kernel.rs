mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use seqbq::kernel::{eval_kernel_scaled, RbfKernel};
use seqbq::Error;

fn kernel_and_points(max_dim: usize, max_points: usize) -> impl Strategy<Value = (RbfKernel, Vec<Vec<f64>>)> {
    (1..=max_dim).prop_flat_map(move |d| {
        (
            0.1f64..5.0,
            prop::collection::vec(0.05f64..5.0, d),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 1..=max_points),
        )
            .prop_map(|(s2, ls, pts)| (RbfKernel::new(s2, ls).unwrap(), pts))
    })
}

#[test]
fn unit_distance_values() {
    let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
    assert_relative_eq!(k.eval(&[0.0], &[1.0]).unwrap(), 0.606531, epsilon = 1e-6);
    assert_relative_eq!(k.eval(&[0.0], &[2.0]).unwrap(), (-2.0f64).exp(), epsilon = 1e-15);
    let k2 = RbfKernel::new(1.0, vec![1.0, 1.0]).unwrap();
    assert_relative_eq!(k2.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.367879, epsilon = 1e-6);
}

#[test]
fn scaled_evaluation_uses_the_given_matrix() {
    let scale = DMatrix::from_element(1, 1, 2.0);
    assert_relative_eq!(eval_kernel_scaled(&[0.0], &[2.0], 1.0, &scale).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
}

#[test]
fn gradient_at_unit_distance() {
    let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
    let g = k.gradient(&[1.0], &[0.0]).unwrap();
    assert_relative_eq!(g[0], -0.606531, epsilon = 1e-6);
    assert_eq!(k.gradient(&[0.3], &[0.3]).unwrap(), vec![0.0]);
}

#[test]
fn rejects_bad_parameters_and_dimensions() {
    assert!(matches!(RbfKernel::new(0.0, vec![1.0]), Err(Error::InvalidArgument(_))));
    assert!(matches!(RbfKernel::new(1.0, vec![-1.0]), Err(Error::InvalidArgument(_))));
    assert!(matches!(RbfKernel::new(1.0, vec![]), Err(Error::InvalidArgument(_))));
    let k = RbfKernel::new(1.0, vec![1.0, 1.0]).unwrap();
    assert!(matches!(k.eval(&[0.0], &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gram_is_symmetric_psd_with_amplitude_diagonal((k, pts) in kernel_and_points(3, 12)) {
        let m = k.matrix(&pts).unwrap();
        let s2 = k.amplitude_sq();
        for i in 0..pts.len() {
            prop_assert!((m[(i, i)] - s2).abs() <= 1e-15 * s2);
            for j in 0..pts.len() {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        prop_assert!(min_eig >= -1e-8 * s2, "min eigenvalue {}", min_eig);
    }

    #[test]
    fn matches_reference_formula((k, pts) in kernel_and_points(4, 4)) {
        for a in &pts {
            for b in &pts {
                let v = k.eval(a, b).unwrap();
                prop_assert!((v - common::rbf(&k, a, b)).abs() <= 1e-14 * k.amplitude_sq());
                prop_assert!(v > 0.0 || (common::rbf(&k, a, b) < 1e-300));
            }
        }
    }

    #[test]
    fn scaled_form_reduces_to_diagonal((k, pts) in kernel_and_points(3, 3)) {
        let scale = k.scale_matrix();
        for a in &pts {
            for b in &pts {
                let direct = k.eval(a, b).unwrap();
                let scaled = eval_kernel_scaled(a, b, k.amplitude_sq(), &scale).unwrap();
                prop_assert!((direct - scaled).abs() < 1e-14 * k.amplitude_sq());
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences((k, pts) in kernel_and_points(3, 2)) {
        let a = &pts[0];
        let b = pts.last().unwrap();
        let g = k.gradient(a, b).unwrap();
        let fd = common::central_diff(|p| k.eval(p, b).unwrap(), a, 1e-5);
        for (x, y) in g.iter().zip(&fd) {
            prop_assert!(common::rel_err(*x, *y, 1e-4 * k.amplitude_sq()) < 1e-6, "{} vs {}", x, y);
        }
    }

    #[test]
    fn kernel_vector_matches_pointwise((k, pts) in kernel_and_points(3, 8)) {
        let x = &pts[0];
        let v = k.vector(x, &pts).unwrap();
        for (i, p) in pts.iter().enumerate() {
            prop_assert_eq!(v[i], k.eval(x, p).unwrap());
        }
    }
}
