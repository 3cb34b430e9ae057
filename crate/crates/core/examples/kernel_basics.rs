//! Squared-exponential kernel: values, gradients and the full-matrix form.

use nalgebra::DMatrix;
use seqbq::kernel::{eval_kernel_scaled, RbfKernel, ScaledKernel};

fn main() -> seqbq::Result<()> {
    let k = RbfKernel::new(2.0, vec![1.0, 0.25])?;
    let (a, b) = ([0.0, 0.0], [1.0, 0.5]);
    println!("k(a, b)      = {:.6}", k.eval(&a, &b)?);
    println!("k(a, a)      = {:.6}", k.eval(&a, &a)?);
    println!("grad_a k     = {:?}", k.gradient(&a, &b)?);

    let points = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.5]];
    println!("gram matrix  = {:.4}", k.matrix(&points)?);

    let scale = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let full = ScaledKernel::new(2.0, scale.clone())?;
    println!("full-matrix k(a, b) = {:.6}", full.eval(&a, &b)?);
    println!("one-shot form       = {:.6}", eval_kernel_scaled(&a, &b, 2.0, &scale)?);
    Ok(())
}
