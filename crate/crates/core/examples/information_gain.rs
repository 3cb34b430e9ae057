//! Expected KL divergence over the hypothetical observation, estimated by
//! Monte Carlo with explicit refits, against log(σ₁/σ₂).

use seqbq::acquisition::AcquisitionContext;
use seqbq::harness::validate::random_instance;
use seqbq::oracle::mc_info_gain;

fn main() -> seqbq::Result<()> {
    for seed in 0..5 {
        let inst = random_instance(seed, 2, 4, 2)?;
        let ctx = AcquisitionContext::new(inst.gp.clone(), inst.mix.clone())?;
        let closed = ctx.info_gain_simplified(&inst.probe)?;
        let mc = mc_info_gain(&inst.gp, &inst.mix, &inst.probe, 100_000, seed)?;
        println!("instance {seed}: log(s1/s2) = {closed:.6}  MC = {:.6} +- {:.6}  (z = {:.2})", mc.mean, mc.std_error, mc.z_score(closed));
    }
    Ok(())
}
