//! One adversary spawning several poisoning identities. Each sybil pays
//! its own admission work and is penalized on its own.

use brokered::adversary::poisoner_sybils;
use brokered::broker::{BrokerConfig, BrokerService, LearningTask};
use brokered::client::{Client, ClientConfig};
use brokered::harness::{prepare, synth_dataset};
use brokered::protocol::inproc::{SimConfig, Simulation};
use brokered::protocol::Party;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = prepare(synth_dataset(10, 5000, 6.0, 3)?, 0.7, 3)?;
    let validation: Vec<usize> = (0..500).collect();
    let task = LearningTask {
        model_id: "credit".into(),
        dim: data.train.dim(),
        min_clients: 6,
        max_clients: 6,
        max_iterations: 1000,
        validation_set: data.train.select(&validation)?,
    };
    let mut service = BrokerService::new(BrokerConfig { client_timeout_ms: 1000, ..BrokerConfig::default() }, "inproc");
    service.curate(task)?;

    let mut honest: Vec<_> = (0..3)
        .map(|i| Client::honest(&ClientConfig::new("credit", data.train.clone(), 100 + i)))
        .collect();
    let mut sybils = poisoner_sybils(3, &ClientConfig::new("credit", data.train.clone(), 500))?;

    let mut sim = Simulation::new(service, SimConfig::default());
    let mut parties: Vec<&mut dyn Party> = honest
        .iter_mut()
        .map(|c| c as &mut dyn Party)
        .chain(sybils.iter_mut().map(|c| c as &mut dyn Party))
        .collect();
    let report = sim.run(&mut parties, |_, _| {});
    let broker = sim.endpoint().broker().expect("curated");
    println!(
        "finished at virtual {} ms after {} requests, final validation error {:.3}",
        report.end_time_ms,
        report.requests,
        broker.validation_error(broker.model())
    );
    for (name, clients) in [("honest", &honest), ("sybil", &sybils)] {
        for c in clients.iter() {
            let token = c.token().unwrap_or("-");
            let record = broker.client(token);
            println!(
                "{name:<6} applied {:>4} updates, hashed {:>9} attempts, difficulty {:?}",
                c.updates_applied(),
                c.total_work(),
                record.map(|r| r.difficulty)
            );
        }
    }
    println!("penalty events: {}", broker.penalties().len());
    Ok(())
}
