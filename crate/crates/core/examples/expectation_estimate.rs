//! Closed-form estimate of q = E[f(X)] and its uncertainty, checked
//! against quadrature of the same GP.

use seqbq::acquisition::AcquisitionContext;
use seqbq::gp::{select_hyperparameters, Dataset, GpPosterior, HyperSearchConfig};
use seqbq::mixture::GaussianMixture;
use seqbq::oracle::{quad_mu1, quad_sigma1_sq, TensorRule};

fn main() -> seqbq::Result<()> {
    let f = |x: f64| (3.0 * x).sin() + x * x;
    let mix = GaussianMixture::normal_1d(0.0, 1.0)?;
    let xs = mix.sample(10, 5);
    let ys = xs.iter().map(|x| f(x[0])).collect();
    let data = Dataset::new(1, xs, ys)?;
    let h = select_hyperparameters(&data, &HyperSearchConfig::default())?;
    let gp = GpPosterior::fit(data, h.kernel, h.noise)?;

    let ctx = AcquisitionContext::new(gp.clone(), mix.clone())?;
    // E[sin 3X] = 0 and E[X²] = 1 for a standard normal
    let q = 1.0;
    println!("mu1 = {:.6} +- {:.6} (q = {q})", ctx.mu1(), ctx.estimate().std_dev());

    let rule = TensorRule::for_mixture(&mix, 40, 20);
    println!("quadrature mu1      = {:.10}", quad_mu1(&gp, &mix, &rule));
    println!("closed-form mu1     = {:.10}", ctx.mu1());
    println!("quadrature sigma1^2 = {:.10e}", quad_sigma1_sq(&gp, &mix, &rule));
    println!("closed-form sigma1^2= {:.10e}", ctx.sigma1_sq());
    Ok(())
}
