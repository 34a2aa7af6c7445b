//! A broker and three clients over real TCP sockets, configured the same
//! way as the `broker serve` and `client run` commands.

use std::io::Write;
use std::path::Path;
use std::sync::mpsc;
use std::thread;

use brokered::broker::BrokerConfig;
use brokered::harness::node::{run_client, serve_broker, BrokerNodeConfig, ClientNodeConfig, TaskSpec};
use brokered::harness::{synth_dataset, Role};
use brokered::numeric::LabeledDataset;
use brokered::privacy::Epsilon;

fn write_csv(path: &Path, data: &LabeledDataset) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (row, y) in data.rows().zip(data.labels()) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(f, "{},{y}", cells.join(","))?;
    }
    f.flush()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data = synth_dataset(5, 3000, 4.0, 9)?;
    let validation = data.select(&(0..300).collect::<Vec<_>>())?;
    write_csv(&dir.path().join("validation.csv"), &validation)?;
    write_csv(&dir.path().join("train.csv"), &data)?;

    let broker_cfg = BrokerNodeConfig {
        listen: "127.0.0.1:0".into(),
        broker: BrokerConfig { admission_difficulty: 3, ..BrokerConfig::default() },
        transport: Default::default(),
        task: Some(TaskSpec {
            model_id: "demo".into(),
            min_clients: 3,
            max_clients: 3,
            max_iterations: 600,
            validation_csv: dir.path().join("validation.csv"),
        }),
        out: Some(dir.path().join("out")),
        grace_ms: 500,
    };
    let (tx, rx) = mpsc::channel();
    let broker = thread::spawn(move || serve_broker(&broker_cfg, |addr| tx.send(addr).expect("main thread waits")));
    let addr = rx.recv()?;
    println!("broker on {addr}");

    let clients: Vec<_> = (0..3)
        .map(|i| {
            let cfg = ClientNodeConfig {
                broker_addr: addr.to_string(),
                model_id: "demo".into(),
                data_csv: dir.path().join("train.csv"),
                role: Role::Honest,
                epsilon: if i == 0 { Epsilon::Finite(5.0) } else { Epsilon::Infinite },
                k: 3,
                hyper: Default::default(),
                seed: i,
                max_local_iterations: None,
                difficulty_cap: 12,
                connect_retries: 50,
                retry_ms: 10,
            };
            thread::spawn(move || run_client(&cfg))
        })
        .collect();
    for (i, c) in clients.into_iter().enumerate() {
        let r = c.join().expect("client thread")?;
        println!("client {i}: {} after {} applied updates, {} hash attempts", r.outcome, r.updates_applied, r.total_work);
    }
    let report = broker.join().expect("broker thread")?;
    println!(
        "published model after {} iterations, validation error {:.3}",
        report.iteration, report.validation_error
    );
    println!("model.json written: {}", dir.path().join("out/model.json").exists());
    Ok(())
}
