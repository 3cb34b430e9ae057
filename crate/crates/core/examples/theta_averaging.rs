//! Information gain averaged over perturbed hyperparameters.

use seqbq::design::{run, DesignConfig};
use seqbq::mixture::GaussianMixture;

fn main() -> seqbq::Result<()> {
    let mix = GaussianMixture::normal_1d(0.5, 0.8)?;
    let f = |x: &[f64]| (2.0 * x[0]).cos() * x[0].exp();
    for theta_samples in [1, 8] {
        let cfg = DesignConfig { n0: 4, budget: 16, seed: 9, theta_samples, ..Default::default() };
        let last = run(&cfg, &mix, f)?.pop().unwrap();
        println!("theta_samples={theta_samples}: mu1 = {:.6}, sigma1 = {:.2e}", last.mu1, last.sigma1);
    }
    Ok(())
}
