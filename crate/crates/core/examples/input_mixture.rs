//! Input distributions: explicit mixtures, EM fits from samples and
//! uniform boxes spread into Gaussian grids.

use nalgebra::DMatrix;
use seqbq::mixture::{fit_em_traced, EmConfig, GaussianMixture};

fn main() -> seqbq::Result<()> {
    let truth = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![vec![-2.0, 0.0], vec![1.5, 1.0]],
        vec![DMatrix::identity(2, 2) * 0.4, DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.3])],
    )?;
    println!("pdf at origin = {:.5}", truth.pdf(&[0.0, 0.0]));

    let samples = truth.sample(5000, 11);
    let fit = fit_em_traced(&samples, 2, &EmConfig { seed: 3, ..Default::default() })?;
    println!("EM iterations = {}, final log-likelihood = {:.2}", fit.log_likelihood.len(), fit.log_likelihood.last().unwrap());
    for c in fit.mixture.components() {
        println!("  weight {:.3}  mean [{:.3}, {:.3}]", c.weight(), c.mean()[0], c.mean()[1]);
    }

    let boxed = GaussianMixture::from_box(&[0.0], &[1.0], 8)?;
    println!("uniform [0,1] as {} components: mean {:.3}, variance {:.4} (exact 1/12 = {:.4})", boxed.len(), boxed.mean()[0], boxed.covariance()[(0, 0)], 1.0 / 12.0);
    println!("{}", GaussianMixture::normal_1d(0.0, 1.0)?.to_json());
    Ok(())
}
