//! A fast slice of the cross-check matrix, then the same slice with a
//! deliberately wrong kernel-mean determinant exponent.

use seqbq::harness::validate::validate_filtered;
use seqbq::harness::ValidateOptions;

fn main() -> seqbq::Result<()> {
    let fast = |n: &str| !n.ends_with("_mc") && !n.starts_with("double") && !n.starts_with("sigma1");
    let clean = validate_filtered(&ValidateOptions::default(), fast, |c| println!("{c}"))?;
    println!("clean build passes: {}\n", clean.passed());

    let faulty = ValidateOptions { determinant_exponent: -0.4, ..Default::default() };
    let broken = validate_filtered(&faulty, |n| n == "kernel_mean_quadrature", |c| println!("{c}"))?;
    println!("fault detected: {}", !broken.passed());
    Ok(())
}
