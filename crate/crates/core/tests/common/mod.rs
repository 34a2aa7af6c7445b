//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use brokered::broker::{BrokerConfig, BrokerService, LearningTask};
use brokered::harness::{prepare, synth_dataset};
use brokered::numeric::LabeledDataset;
use brokered::protocol::inproc::{Direction, Simulation};
use brokered::protocol::Endpoint;
use serde_json::Value;

pub const MODEL_ID: &str = "task";

/// Normalized train shard of separable synthetic data with intercept.
pub fn train_shard(n: usize, seed: u64) -> LabeledDataset {
    prepare(synth_dataset(10, n, 6.0, seed).unwrap(), 0.7, seed).unwrap().train
}

pub fn task(train: &LabeledDataset, min_clients: u32, max_clients: u32, max_iterations: u64) -> LearningTask {
    let vs: Vec<usize> = (0..train.len().min(500)).collect();
    LearningTask {
        model_id: MODEL_ID.into(),
        dim: train.dim(),
        min_clients,
        max_clients,
        max_iterations,
        validation_set: train.select(&vs).unwrap(),
    }
}

pub fn service(task: LearningTask, config: BrokerConfig) -> BrokerService {
    let mut s = BrokerService::new(config, "inproc");
    s.curate(task).unwrap();
    s
}

/// Short expiry so idle clients free their seats quickly in virtual time.
pub fn quick_config() -> BrokerConfig {
    BrokerConfig { client_timeout_ms: 1000, ..BrokerConfig::default() }
}

/// Transcript entries decoded to JSON, in delivery order.
pub fn frames<E: Endpoint>(sim: &Simulation<E>) -> Vec<(usize, Direction, Value)> {
    sim.transcript()
        .iter()
        .map(|e| (e.party, e.direction, serde_json::from_slice(&e.frame).unwrap()))
        .collect()
}

pub fn vector(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
