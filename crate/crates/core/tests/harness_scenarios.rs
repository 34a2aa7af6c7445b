//! End-to-end experiment runs through the harness on both transports.

use std::io::Write;
use std::thread;

use brokered::adversary::AttackMode;
use brokered::harness::figures::{convergence_config, inversion_config};
use brokered::harness::node::{run_client, serve_broker, BrokerNodeConfig, ClientNodeConfig, TaskSpec};
use brokered::harness::{
    prepare, run_experiment, synth_dataset, ClientGroup, ExperimentConfig, HarnessError, Role, Scenario,
};
use brokered::numeric::LabeledDataset;
use brokered::privacy::Epsilon;
use brokered::protocol::transport::{TransportConfig, TransportKind};

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn lone_noise_free_client_converges() {
    let report = run_experiment(&convergence_config(Epsilon::infinite(), 10, 1)).unwrap();
    assert!(report.summary.complete);
    let errors: Vec<f64> = report.rows.iter().map(|r| r.training_error).collect();
    assert!(*errors.last().unwrap() <= 0.05);
    // trending down: each quarter of the run averages no worse than the one before
    let q = errors.len() / 4;
    let means: Vec<f64> = errors.chunks(q).take(4).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(means.windows(2).all(|p| p[1] <= p[0]), "quarter means {means:?}");
}

#[test]
fn undefended_two_party_inversion_succeeds() {
    let report = run_experiment(&inversion_config(Epsilon::infinite(), AttackMode::ZeroGradients, 0, 0, 1)).unwrap();
    let e = report.summary.reconstruction_error.unwrap();
    assert!(e <= 0.05, "reconstruction error {e}");
}

#[test]
fn half_poisoned_run_penalizes_only_poisoners() {
    let report = run_experiment(&load("poisoning.json")).unwrap();
    assert!(report.summary.complete);
    for c in &report.summary.clients {
        match c.role {
            Role::Poisoner => assert!(c.penalties >= 1, "unpenalized poisoner {c:?}"),
            Role::Honest => assert_eq!(c.penalties, 0, "penalized honest client {c:?}"),
            _ => unreachable!(),
        }
    }
    let stamped = report.summary.penalties.iter().all(|p| p.iteration <= report.summary.iterations);
    assert!(stamped);
}

#[test]
fn metrics_csv_is_reproducible_and_tracks_iterations() {
    let cfg = load("poisoning.json");
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.metrics_csv().unwrap(), b.metrics_csv().unwrap());

    let csv = String::from_utf8(a.metrics_csv().unwrap()).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("wall_ms,iteration,training_error"), "{header}");
    assert_eq!(header.matches("difficulty_client").count(), 8);
    let iterations: Vec<u64> = a.rows.iter().map(|r| r.iteration).collect();
    assert!(iterations.windows(2).all(|p| p[1] > p[0]));
    assert_eq!(*iterations.last().unwrap(), a.summary.iterations);
    assert!(iterations.iter().all(|i| i % cfg.broker.metrics_every == 0));
    let wall: Vec<u64> = a.rows.iter().map(|r| r.wall_ms).collect();
    assert!(wall.windows(2).all(|p| p[1] >= p[0]));
}

#[test]
fn invalid_configs_are_config_errors() {
    let mut cfg = ExperimentConfig::synthetic(Scenario::Convergence, 10, 100, 6.0);
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))), "no clients");
    cfg.groups = vec![ClientGroup::new(Role::Honest, 2)];
    cfg.clients = Some(3);
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))), "count mismatch");
    cfg.clients = None;
    cfg.train_frac = 1.5;
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))), "train_frac");
    cfg.train_frac = 0.7;
    cfg.hash_cost_ms = Some(-1.0);
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))), "hash cost");
}

#[test]
fn tcp_experiment_completes() {
    let mut cfg = load("convergence_tcp.json");
    cfg.max_iterations = 200;
    let report = run_experiment(&cfg).unwrap();
    assert!(report.summary.complete);
    assert_eq!(report.summary.iterations, 200);
    let applied: u64 = report.summary.clients.iter().map(|c| c.updates_applied).sum();
    assert_eq!(applied, 200);
}

fn write_csv(data: &LabeledDataset) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for e in data.examples() {
        // drop the intercept; loading appends it again
        let feats: Vec<String> = e.features[..e.features.len() - 1].iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", feats.join(","), e.label).unwrap();
    }
    f.flush().unwrap();
    f
}

#[test]
fn standalone_nodes_train_over_tcp() {
    let p = prepare(synth_dataset(10, 3000, 6.0, 5).unwrap(), 0.7, 5).unwrap();
    let validation = write_csv(&p.train.select(&(0..300).collect::<Vec<_>>()).unwrap());
    let train = write_csv(&p.train);
    let broker_cfg = BrokerNodeConfig {
        listen: "127.0.0.1:0".into(),
        broker: Default::default(),
        transport: TransportConfig { kind: TransportKind::Tcp, ..Default::default() },
        task: Some(TaskSpec {
            model_id: "m".into(),
            min_clients: 2,
            max_clients: 2,
            max_iterations: 150,
            validation_csv: validation.path().to_path_buf(),
        }),
        out: None,
        grace_ms: 300,
    };
    let (tx, rx) = std::sync::mpsc::channel();
    let broker = thread::spawn(move || serve_broker(&broker_cfg, |addr| tx.send(addr).unwrap()));
    let addr = rx.recv().unwrap();
    let clients: Vec<_> = (0..2)
        .map(|i| {
            let cfg = ClientNodeConfig {
                broker_addr: addr.to_string(),
                model_id: "m".into(),
                data_csv: train.path().to_path_buf(),
                role: Role::Honest,
                epsilon: Epsilon::infinite(),
                k: 2,
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
    let reports: Vec<_> = clients.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
    let report = broker.join().unwrap().unwrap();
    assert_eq!(report.iteration, 150);
    assert_eq!(reports.iter().map(|r| r.updates_applied).sum::<u64>(), 150);
    assert!(reports.iter().all(|r| r.outcome == "complete"));
    assert!(report.validation_error <= 0.05, "validation error {}", report.validation_error);
}
