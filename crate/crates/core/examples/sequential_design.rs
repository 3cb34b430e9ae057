//! Sequential design for E[sin(3x) + x²] under a standard normal input.

use seqbq::design::{run, DesignConfig, Strategy};
use seqbq::mixture::GaussianMixture;

fn main() -> seqbq::Result<()> {
    let mix = GaussianMixture::normal_1d(0.0, 1.0)?;
    let q = 1.0;
    for strategy in [Strategy::Acquisition, Strategy::Random, Strategy::MonteCarlo] {
        let cfg = DesignConfig { n0: 5, budget: 25, seed: 3, strategy, ..Default::default() };
        let history = run(&cfg, &mix, |x| (3.0 * x[0]).sin() + x[0] * x[0])?;
        println!("{}:", strategy.name());
        for r in history.iter().filter(|r| r.iteration % 5 == 0) {
            println!("  n={:>2} x={:>8.4} mu1={:.6} sigma1={:.2e} |err|={:.2e}", r.iteration, r.chosen_x[0], r.mu1, r.sigma1, (r.mu1 - q).abs());
        }
    }
    Ok(())
}
