//! Hash puzzles: solve, verify and the 16x cost of each extra hex digit.

use std::time::Instant;

use brokered::pow::{new_puzzle, solve, verify, Solution, DEFAULT_DIFFICULTY_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for difficulty in 0..=5 {
        let trials = if difficulty < 5 { 20 } else { 3 };
        let started = Instant::now();
        let mut attempts = 0;
        for _ in 0..trials {
            let puzzle = new_puzzle(&mut rng, difficulty, DEFAULT_DIFFICULTY_CAP)?;
            let solved = solve(&puzzle);
            assert!(verify(&puzzle, &solved.solution));
            attempts += solved.attempts;
        }
        println!(
            "difficulty {difficulty}: mean attempts {:>9.0} (expected {:>8}), {:>8.2?} per puzzle",
            attempts as f64 / trials as f64,
            16u64.pow(difficulty),
            started.elapsed() / trials
        );
    }
    let puzzle = new_puzzle(&mut rng, 3, DEFAULT_DIFFICULTY_CAP)?;
    let solved = solve(&puzzle);
    let wire = solved.solution.to_wire();
    println!("nonce {} solution {wire}", puzzle.nonce_hex());
    println!("round trip verifies: {}", verify(&puzzle, &Solution::from_wire(&wire)?));
    let fresh = new_puzzle(&mut rng, 3, DEFAULT_DIFFICULTY_CAP)?;
    println!("same solution against a fresh nonce: {}", verify(&fresh, &solved.solution));
    Ok(())
}
