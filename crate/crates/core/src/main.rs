use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seqbq::design::Strategy;
use seqbq::harness::{self, validate::validate_filtered, HarnessError, ValidateOptions};

#[derive(Parser)]
#[command(name = "seqbq", version, about = "Sequential Bayesian quadrature for expectations of black-box functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sequential design and write history.csv and summary.json.
    Run { config: PathBuf },
    /// Compare sampling strategies over several seeds.
    Benchmark { config: PathBuf },
    /// Cross-check closed forms against independent oracles.
    Validate {
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        /// Exponent of the kernel-mean determinant factor (fault injection).
        #[arg(long, default_value_t = -0.5, hide = true, allow_negative_numbers = true)]
        determinant_exponent: f64,
        /// Run only checks whose name contains this string.
        #[arg(long)]
        only: Option<String>,
    },
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match harness::run_file(&config) {
            Ok(out) => {
                let last = out.final_record();
                println!(
                    "samples={} mu1={} sigma1={} q={} abs_err={} output={}",
                    out.history.len(),
                    harness::format_number(last.mu1),
                    harness::format_number(last.sigma1),
                    harness::format_number(out.reference.value()),
                    harness::format_number(out.final_abs_err()),
                    out.output_dir.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Benchmark { config } => match harness::run_benchmark_file(&config) {
            Ok(out) => {
                let mut names: Vec<Strategy> = out.trajectories.iter().map(|t| t.strategy).collect();
                names.dedup();
                for s in names {
                    println!(
                        "{:<12} final median |mu1-q| = {}  calibrated = {:.0}%",
                        s.name(),
                        harness::format_number(out.final_median(s)),
                        100.0 * out.calibration(s)
                    );
                }
                println!("output={}", out.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { tolerance_scale, determinant_exponent, only } => {
            if !(tolerance_scale > 0.0 && tolerance_scale.is_finite()) {
                return fail(HarnessError::Config(format!("--tolerance-scale must be positive, got {tolerance_scale}")));
            }
            let opts = ValidateOptions { tolerance_scale, determinant_exponent };
            let filter = |name: &str| only.as_deref().is_none_or(|o| name.contains(o));
            match validate_filtered(&opts, filter, |c| println!("{c}")) {
                Ok(report) if report.checks.is_empty() => fail(HarnessError::Config("no check matches --only".into())),
                Ok(report) if report.passed() => {
                    println!("all {} checks passed", report.checks.len());
                    ExitCode::SUCCESS
                }
                Ok(report) => {
                    let failed = report.checks.iter().filter(|c| !c.passed()).count();
                    println!("{failed} of {} checks failed", report.checks.len());
                    ExitCode::from(1)
                }
                Err(e) => fail(e.into()),
            }
        }
    }
}
