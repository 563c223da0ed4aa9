//! Run all four arms, write telemetry, the summary and an accuracy plot.
//!
//! Usage: `cargo run --example full_experiment [out-dir]`

use reputation_fl::{run_experiment, ExperimentConfig};

fn main() -> reputation_fl::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/example".into());
    let cfg = ExperimentConfig::default().with_out(&out)?;
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.summary_csv());
    println!("outputs written to {out}");
    Ok(())
}
