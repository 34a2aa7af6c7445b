//! Label-flip poisoners against validation-based penalties: who gets
//! penalized and what the model ends up at.

use brokered::harness::figures::{poisoning_config, POISONER_COUNTS, POISONING_CLIENTS};
use brokered::harness::{run_experiment, Role};
use brokered::privacy::Epsilon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for p in POISONER_COUNTS {
        let report = run_experiment(&poisoning_config(p, 0.02, Epsilon::Infinite, 0))?;
        println!(
            "{p}/{POISONING_CLIENTS} poisoners: final error {:.3}, penalized poisoners {}, penalized honest {}, first poisoner penalty at iteration {:?}",
            report.summary.final_training_error,
            report.penalized(Role::Poisoner),
            report.penalized(Role::Honest),
            report.first_penalty_iteration(Role::Poisoner),
        );
        for c in &report.summary.clients {
            println!(
                "    client {} {:<8} applied {:>4} updates, {} penalties, difficulty {:?}, {}",
                c.index,
                c.role.as_str(),
                c.updates_applied,
                c.penalties,
                c.final_difficulty,
                c.outcome
            );
        }
    }
    Ok(())
}
