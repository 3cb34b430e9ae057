//! GP posterior on noisy samples with maximum-likelihood hyperparameters.

use seqbq::gp::{search_hyperparameters, Dataset, GpPosterior, HyperSearchConfig};

fn main() -> seqbq::Result<()> {
    let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![-3.0 + 0.5 * i as f64]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x[0].sin() + 0.05 * (7.0 * x[0]).cos()).collect();
    let data = Dataset::new(1, xs, ys)?;

    let found = search_hyperparameters(&data, &HyperSearchConfig::default())?;
    let h = found.sample;
    println!("log marginal likelihood = {:.4}", found.log_likelihood);
    println!("s^2 = {:.4}, lambda = {:.4}, noise = {:.3e}", h.kernel.amplitude_sq(), h.kernel.lengthscales()[0], h.noise.variance());

    let gp = GpPosterior::fit(data, h.kernel, h.noise)?;
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "mean", "sd", "sin(x)");
    for i in 0..9 {
        let x = -4.0 + i as f64;
        println!("{x:>6.2} {:>10.4} {:>10.4} {:>10.4}", gp.posterior_mean(&[x]), gp.posterior_var(&[x]).sqrt(), x.sin());
    }
    Ok(())
}
