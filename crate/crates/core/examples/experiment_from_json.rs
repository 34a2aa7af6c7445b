//! Runs an experiment described in JSON and writes its metrics, summary
//! and model, exactly as `experiment run` does.
//!
//! `cargo run --example experiment_from_json -- configs/poisoning.json out/`

use brokered::harness::{run_experiment_to, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "configs/poisoning.json".into());
    let out = args.next().unwrap_or_else(|| "out/poisoning".into());
    let cfg = ExperimentConfig::load(&config)?;
    let report = run_experiment_to(&cfg, &out)?;
    println!(
        "{} iterations, final training error {:.3}, test error {:.3}, {} penalty events; outputs in {out}",
        report.summary.iterations,
        report.summary.final_training_error,
        report.summary.test_error,
        report.summary.penalties.len()
    );
    Ok(())
}
