//! Single-client private SGD: final training error across privacy levels
//! and batch sizes.

use brokered::harness::figures::convergence_config;
use brokered::harness::run_experiment;
use brokered::privacy::Epsilon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = [
        (Epsilon::Infinite, 10),
        (Epsilon::Finite(5.0), 10),
        (Epsilon::Finite(0.5), 10),
        (Epsilon::Finite(0.5), 1),
    ];
    for (eps, b) in grid {
        let report = run_experiment(&convergence_config(eps, b, 0))?;
        let curve: Vec<String> = report
            .rows
            .iter()
            .step_by(40)
            .map(|r| format!("{:.2}", r.training_error))
            .collect();
        println!(
            "eps={eps:<4} b={b:<2} final training error {:.3}  test error {:.3}",
            report.summary.final_training_error, report.summary.test_error
        );
        println!("    curve {}", curve.join(" "));
    }
    Ok(())
}
