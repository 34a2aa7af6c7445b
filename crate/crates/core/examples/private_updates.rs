//! The Laplace mechanism on one update: noise radius and how much of the
//! clean step survives at each privacy level.

use brokered::harness::synth_dataset;
use brokered::numeric::{HyperParams, ParameterVector};
use brokered::privacy::{dp_delta, sample_isotropic_laplace, Epsilon};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth_dataset(10, 200, 6.0, 1)?.with_intercept();
    let batch: Vec<_> = (0..10).map(|i| data.example(i)).collect();
    let hyper = HyperParams::default();
    let w = ParameterVector::zeros(data.dim());
    let clean = dp_delta(&w, &batch, &hyper, Epsilon::Infinite, 1, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("clean step norm {:.4}", clean.norm());
    for eps in [0.5, 1.0, 5.0, 50.0] {
        let epsilon = Epsilon::new(eps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 2000;
        let mut radius = 0.0;
        let mut cosine = 0.0;
        for _ in 0..draws {
            radius += sample_isotropic_laplace(data.dim(), epsilon, &mut rng)?.norm();
            let noisy = dp_delta(&w, &batch, &hyper, epsilon, 1, &mut rng)?;
            let dot: f64 = noisy.as_slice().iter().zip(clean.as_slice()).map(|(a, b)| a * b).sum();
            cosine += dot / (noisy.norm() * clean.norm());
        }
        println!(
            "eps={eps:<4} mean noise radius {:>7.2} (expected {:>6.2})  mean cosine to clean step {:.3}",
            radius / draws as f64,
            2.0 * data.dim() as f64 / eps,
            cosine / draws as f64
        );
    }
    Ok(())
}
