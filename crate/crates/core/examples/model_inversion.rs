//! The inversion attack: an attacker differences successive global models
//! to rebuild a victim's model. Differential privacy and bystanders both
//! degrade the reconstruction.

use brokered::adversary::AttackMode;
use brokered::harness::figures::{inversion_config, BYSTANDER_LATENCY_MS};
use brokered::harness::run_experiment;
use brokered::privacy::Epsilon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("zero-gradient attacker, victim alone with the attacker");
    for eps in [f64::INFINITY, 5.0, 2.0, 1.0, 0.5] {
        let cfg = inversion_config(Epsilon::new(eps)?, AttackMode::ZeroGradients, 0, 0, 0);
        let s = run_experiment(&cfg)?.summary;
        println!(
            "  victim eps={eps:<4} reconstruction error {:.3}",
            s.reconstruction_error.unwrap_or(f64::NAN)
        );
    }
    println!("honest-gradient attacker, random latency up to {BYSTANDER_LATENCY_MS} ms");
    for bystanders in [0, 1, 3] {
        let cfg = inversion_config(
            Epsilon::Infinite,
            AttackMode::HonestGradients,
            bystanders,
            BYSTANDER_LATENCY_MS,
            0,
        );
        let s = run_experiment(&cfg)?.summary;
        println!(
            "  {bystanders} bystanders (k = {}) reconstruction error {:.3}",
            2 + bystanders,
            s.reconstruction_error.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
