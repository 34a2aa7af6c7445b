//! Asynchronous training with more clients: applied updates and virtual
//! time needed to reach 10% training error. Clients work in parallel, so
//! time to target falls with more clients while the update count does not.

use brokered::harness::figures::{scaling, SCALING_TARGET};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fig = scaling(&[0, 1, 2])?;
    for series in ["iterations_to_target", "ms_to_target"] {
        for clients in [2.0, 4.0, 8.0] {
            let per_seed = fig.values(series, clients);
            println!(
                "{series} (error {SCALING_TARGET}) with {clients} clients: median {:?}, per seed {per_seed:?}",
                fig.median(series, clients)
            );
        }
    }
    Ok(())
}
