//! Variance reduction S², the information gain G and the predicted σ₂²
//! over a 1-d grid; all three pick the same point.

use seqbq::acquisition::AcquisitionContext;
use seqbq::gp::{Dataset, GpPosterior, NoiseModel};
use seqbq::kernel::RbfKernel;
use seqbq::mixture::GaussianMixture;

fn main() -> seqbq::Result<()> {
    let data = Dataset::new(1, vec![vec![-1.0], vec![0.2], vec![1.4]], vec![0.5, -0.1, 0.8])?;
    let gp = GpPosterior::fit(data, RbfKernel::new(1.0, vec![0.5])?, NoiseModel::new(1e-4)?)?;
    let mix = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![-1.5], vec![1.0]],
        vec![nalgebra::DMatrix::from_element(1, 1, 0.3), nalgebra::DMatrix::from_element(1, 1, 0.2)],
    )?;
    let ctx = AcquisitionContext::new(gp, mix)?;
    println!("sigma1^2 = {:.5e}", ctx.sigma1_sq());
    println!("{:>6} {:>12} {:>10} {:>12}", "x", "S^2", "G", "sigma2^2");
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=40 {
        let x = -3.0 + 0.15 * i as f64;
        let s2 = ctx.acquisition_value(&[x]);
        if s2 > best.0 {
            best = (s2, x);
        }
        if i % 4 == 0 {
            println!("{x:>6.2} {s2:>12.5e} {:>10.5} {:>12.5e}", ctx.info_gain_simplified(&[x])?, ctx.sigma2_sq(&[x]));
        }
    }
    let g = ctx.info_gain_four_term(&[best.1])?;
    println!("grid argmax x = {:.2}; four-term gain {:?}, residual {:.1e}", best.1, g.terms, g.residual());
    Ok(())
}
