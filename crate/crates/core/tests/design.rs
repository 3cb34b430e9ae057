use nalgebra::DMatrix;
use seqbq::design::{initial_design, run, run_state, DesignConfig, DesignState, HyperMode, Strategy};
use seqbq::gp::{HyperSearchConfig, HyperparameterSample, NoiseModel};
use seqbq::kernel::RbfKernel;
use seqbq::mixture::GaussianMixture;
use seqbq::Error;

fn standard_normal() -> GaussianMixture {
    GaussianMixture::normal_1d(0.0, 1.0).unwrap()
}

fn x_squared(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn initial_designs() {
    let mix = standard_normal();
    let a = initial_design(&mix, 2, 9).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a, initial_design(&mix, 2, 9).unwrap());
    assert!(matches!(initial_design(&mix, 1, 9), Err(Error::InvalidArgument(_))));

    let shifted = GaussianMixture::normal_1d(3.0, 4.0).unwrap();
    let pts = initial_design(&shifted, 1000, 10).unwrap();
    let mean = pts.iter().map(|p| p[0]).sum::<f64>() / 1000.0;
    assert!((mean - 3.0).abs() < 4.0 * 2.0 / 1000f64.sqrt());
}

#[test]
fn budget_equal_to_n0_records_only_the_initial_design() {
    let cfg = DesignConfig { n0: 6, budget: 6, ..Default::default() };
    let h = run(&cfg, &standard_normal(), x_squared).unwrap();
    assert_eq!(h.len(), 6);
    assert!(h.iter().all(|r| r.acquisition_at_chosen == 0.0));
    assert_eq!(h.iter().map(|r| r.iteration).collect::<Vec<_>>(), (1..=6).collect::<Vec<_>>());
}

#[test]
fn each_step_adds_one_sample_and_one_record() {
    let cfg = DesignConfig { n0: 4, budget: 10, seed: 3, ..Default::default() };
    let mut f = x_squared;
    let mut state = DesignState::initialize(&cfg, &standard_normal(), &mut f).unwrap();
    for k in 1..=3 {
        let before = (state.data().len(), state.history().len());
        let r = state.step(&cfg, &mut f).unwrap().clone();
        assert_eq!((state.data().len(), state.history().len()), (before.0 + 1, before.1 + 1));
        assert_eq!(r.iteration, 4 + k);
        assert_eq!(r.observed_y, x_squared(&r.chosen_x));
        assert!(r.acquisition_at_chosen > 0.0);
    }
}

#[test]
fn frozen_hyperparameters_telescope() {
    for (hyper, label) in [
        (HyperMode::Auto(HyperSearchConfig::default()), "selected once"),
        (
            HyperMode::Fixed(HyperparameterSample {
                kernel: RbfKernel::new(2.0, vec![1.5, 0.6]).unwrap(),
                noise: NoiseModel::new(1e-5).unwrap(),
            }),
            "fixed",
        ),
    ] {
        let mix = GaussianMixture::single(vec![0.5, -0.5], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap();
        let cfg = DesignConfig { n0: 5, budget: 25, refit_every: 0, hyper, seed: 12, ..Default::default() };
        let h = run(&cfg, &mix, |x| (x[0] * 2.0).sin() + x[1]).unwrap();
        for w in h[4..].windows(2) {
            let predicted = w[1].predicted_sigma2_sq.expect("frozen θ");
            let realized = w[1].sigma1 * w[1].sigma1;
            assert!((realized - predicted).abs() <= 1e-8 * predicted.max(1e-300), "{label}: {realized} vs {predicted}");
            assert!(w[1].sigma1 <= w[0].sigma1 + 1e-10, "{label}: sigma1 increased");
            assert!(!w[1].refit);
        }
    }
}

#[test]
fn refits_follow_the_cadence() {
    let cfg = DesignConfig { n0: 5, budget: 20, refit_every: 5, seed: 4, ..Default::default() };
    let h = run(&cfg, &standard_normal(), x_squared).unwrap();
    let refits: Vec<usize> = h.iter().filter(|r| r.refit).map(|r| r.iteration).collect();
    // the first record carries the selection made on the initial design
    assert_eq!(refits, vec![1, 11, 16]);
    for r in &h[5..] {
        assert_eq!(r.predicted_sigma2_sq.is_none(), r.refit);
    }
}

#[test]
fn constant_zero_black_box_keeps_the_estimate_at_zero() {
    let point = GaussianMixture::single(vec![40.0], DMatrix::from_element(1, 1, 1e-10)).unwrap();
    for hyper in [HyperMode::Auto(HyperSearchConfig::default()), HyperMode::Fixed(HyperparameterSample {
        kernel: RbfKernel::new(1.0, vec![1.0]).unwrap(),
        noise: NoiseModel::new(1e-6).unwrap(),
    })] {
        let cfg = DesignConfig { n0: 3, budget: 12, hyper, ..Default::default() };
        for r in run(&cfg, &point, |_| 0.0).unwrap() {
            assert!(r.mu1.abs() < 1e-10);
        }
    }
}

#[test]
fn sigma_stop_ends_early() {
    let cfg = DesignConfig { n0: 5, budget: 40, sigma_stop: 1e-3, seed: 2, ..Default::default() };
    let h = run(&cfg, &standard_normal(), x_squared).unwrap();
    assert!(h.len() < 40);
    assert!(h.last().unwrap().sigma1 < 1e-3);
    assert!(h[..h.len() - 1].iter().all(|r| r.sigma1 >= 1e-3));
}

#[test]
fn runs_are_deterministic() {
    let cfg = DesignConfig { n0: 5, budget: 15, theta_samples: 3, seed: 77, ..Default::default() };
    let strip = |h: Vec<seqbq::design::RunRecord>| h.into_iter().map(|r| (r.chosen_x, r.mu1, r.sigma1)).collect::<Vec<_>>();
    let a = strip(run(&cfg, &standard_normal(), x_squared).unwrap());
    let b = strip(run(&cfg, &standard_normal(), x_squared).unwrap());
    assert_eq!(a, b);
}

#[test]
fn non_finite_outputs_are_reported_with_the_input() {
    let cfg = DesignConfig { n0: 3, budget: 6, ..Default::default() };
    let mut calls = 0;
    let err = run(&cfg, &standard_normal(), |_| {
        calls += 1;
        if calls > 4 {
            f64::INFINITY
        } else {
            1.0
        }
    })
    .unwrap_err();
    assert!(matches!(err, Error::Evaluation { .. }), "{err:?}");
}

#[test]
fn calibrated_and_better_than_plain_monte_carlo() {
    let mix = standard_normal();
    let mut calibrated = 0;
    let mut errs = Vec::new();
    let mut mc_errs = Vec::new();
    for seed in 0..20 {
        let cfg = DesignConfig { n0: 5, budget: 30, seed, ..Default::default() };
        let last = run(&cfg, &mix, x_squared).unwrap().pop().unwrap();
        let err = (last.mu1 - 1.0).abs();
        calibrated += usize::from(err <= 3.0 * last.sigma1);
        errs.push(err);
        let mc = DesignConfig { strategy: Strategy::MonteCarlo, ..cfg };
        mc_errs.push((run_state(&mc, &mix, x_squared).unwrap().history().last().unwrap().mu1 - 1.0).abs());
    }
    assert!(calibrated >= 18, "{calibrated}/20 calibrated");
    assert!(median(errs.clone()) < median(mc_errs.clone()), "{} vs {}", median(errs), median(mc_errs));
}
