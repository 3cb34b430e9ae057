//! Multi-start projected gradient ascent on a bounded box.

use seqbq::optimize::{maximize, BoxBounds, OptimizerConfig};

fn main() -> seqbq::Result<()> {
    let bounds = BoxBounds::new(vec![-2.0, -2.0], vec![2.0, 2.0])?;
    let f = |x: &[f64]| -(x[0] - 0.7).powi(2) - 2.0 * (x[1] + 0.3).powi(2) + 0.5 * (3.0 * x[0]).sin();
    let g = |x: &[f64]| vec![-2.0 * (x[0] - 0.7) + 1.5 * (3.0 * x[0]).cos(), -4.0 * (x[1] + 0.3)];
    let opt = maximize(f, g, &bounds, &OptimizerConfig { starts: 6, seed: 1, ..Default::default() })?;
    println!("interior: x = {:?}, f = {:.6}, start {}", opt.x, opt.value, opt.start_index);

    let linear = maximize(|x| x[0] + 2.0 * x[1], |_| vec![1.0, 2.0], &bounds, &OptimizerConfig::default())?;
    println!("linear objective ends on the corner: {:?}", linear.x);
    Ok(())
}
