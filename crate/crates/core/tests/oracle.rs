mod common;

use seqbq::acquisition::AcquisitionContext;
use seqbq::harness::validate::random_instance;
use seqbq::kernel::RbfKernel;
use seqbq::mixture::GaussianMixture;
use seqbq::oracle::{gauss_legendre, mc_expectation, mc_info_gain, quad_integral_1d, quad_integral_2d, quad_sigma1_sq, TensorRule};

use common::normal_pdf;

#[test]
fn adaptive_quadrature_examples() {
    let r = quad_integral_1d(|_| 1.0, 0.0, 1.0, 1e-12);
    assert!(r.converged && (r.value - 1.0).abs() < 1e-12);
    let r = quad_integral_1d(|x| normal_pdf(x, 0.0, 1.0), -8.0, 8.0, 1e-12);
    assert!((r.value - 1.0).abs() < 1e-9);
    let k = RbfKernel::new(1.0, vec![1.0]).unwrap();
    let r = quad_integral_1d(|x| k.eval(&[0.0], &[x]).unwrap() * normal_pdf(x, 0.0, 1.0), -10.0, 10.0, 1e-12);
    assert!((r.value - 0.5f64.sqrt()).abs() < 1e-8);
    assert!(r.error_estimate <= 1e-12);
}

#[test]
fn gauss_legendre_is_exact_for_polynomials() {
    let (x, w) = gauss_legendre(6);
    // degree 11 on [-1, 1]
    let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * (x.powi(10) + x.powi(11))).sum();
    assert!((integral - 2.0 / 11.0).abs() < 1e-14);
}

#[test]
fn tensor_quadrature_examples() {
    assert!((quad_integral_2d(|_| 1.0, [0.0, 0.0], [1.0, 1.0], 16) - 1.0).abs() < 1e-12);
    let fx = quad_integral_1d(|x| normal_pdf(x, 0.2, 0.5), -3.0, 3.0, 1e-13).value;
    let fy = quad_integral_1d(|y| normal_pdf(y, -0.4, 1.3), -2.0, 4.0, 1e-13).value;
    let both = quad_integral_2d(|p| normal_pdf(p[0], 0.2, 0.5) * normal_pdf(p[1], -0.4, 1.3), [-3.0, -2.0], [3.0, 4.0], 400);
    assert!((both - fx * fy).abs() < 1e-9);

    let inst = random_instance(3, 1, 3, 2).unwrap();
    let ctx = AcquisitionContext::new(inst.gp.clone(), inst.mix.clone()).unwrap();
    let q = quad_sigma1_sq(&inst.gp, &inst.mix, &TensorRule::for_mixture(&inst.mix, 40, 20));
    assert!((q - ctx.sigma1_sq()).abs() / ctx.sigma1_sq() < 1e-6);
}

#[test]
fn monte_carlo_expectations() {
    let mix = GaussianMixture::normal_1d(0.0, 1.0).unwrap();
    let c = mc_expectation(|_| 2.5, &mix, 1000, 1);
    assert_eq!((c.mean, c.std_error), (2.5, 0.0));
    let sq = mc_expectation(|x| x[0] * x[0], &mix, 1_000_000, 2);
    assert!((sq.mean - 1.0).abs() < 4.0 * sq.std_error);
    let again = mc_expectation(|x| x[0] * x[0], &mix, 1_000_000, 2);
    assert_eq!((sq.mean, sq.std_error), (again.mean, again.std_error));
}

#[test]
fn information_gain_oracle() {
    let inst = random_instance(8, 2, 5, 2).unwrap();
    let ctx = AcquisitionContext::new(inst.gp.clone(), inst.mix.clone()).unwrap();

    let far = vec![300.0, -300.0];
    let zero = mc_info_gain(&inst.gp, &inst.mix, &far, 1000, 4).unwrap();
    assert_eq!((zero.mean, zero.std_error), (0.0, 0.0));

    let g = ctx.info_gain_simplified(&inst.probe).unwrap();
    let small = mc_info_gain(&inst.gp, &inst.mix, &inst.probe, 100_000, 5).unwrap();
    assert!((small.mean - g).abs() < 4.0 * small.std_error);
    let large = mc_info_gain(&inst.gp, &inst.mix, &inst.probe, 200_000, 6).unwrap();
    let ratio = large.std_error / small.std_error;
    assert!((ratio / 0.5f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}
