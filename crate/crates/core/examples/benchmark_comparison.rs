//! Strategy comparison on the built-in benchmarks, written as CSV.

use seqbq::design::Strategy;
use seqbq::harness::{execute_benchmark, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("seqbq-benchmark-example");
    let text = r#"{
        "benchmark": "sin3x_plus_xsq",
        "n0": 5, "budget": 20, "seed": 100, "seeds": 8,
        "strategies": ["acquisition", "random", "monte_carlo"],
        "output": "out"
    }"#;
    let resolved = RunConfig::from_json(text)?.resolve(&dir)?;
    let out = execute_benchmark(&resolved)?;
    println!("q = {} ({:?})", out.reference.value(), out.reference);
    for s in [Strategy::Acquisition, Strategy::Random, Strategy::MonteCarlo] {
        println!("{:<12} median final |mu1 - q| = {:.3e}", s.name(), out.final_median(s));
    }
    println!("tables written to {}", out.output_dir.display());
    Ok(())
}
