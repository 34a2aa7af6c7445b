//! Dataset loading, splitting and sampling checked against counting and
//! combinatorial oracles.

use std::collections::HashSet;
use std::io::Write;

use brokered::harness::{bootstrap_sample, load_csv_dataset, prepare, split_train_test, synth_dataset, train_centralized};
use brokered::numeric::{classification_error, HyperParams, LabeledDataset};
use brokered::privacy::Epsilon;
use brokered::protocol::transport::{inject_latency, TransportConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn csv_file(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

fn indexed(n: usize) -> LabeledDataset {
    LabeledDataset::new((0..n).map(|i| vec![i as f64]).collect(), (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
}

#[test]
fn credit_sized_file_loads_with_intercept() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut body = String::with_capacity(30000 * 24 * 8);
    for _ in 0..30000 {
        for _ in 0..24 {
            body.push_str(&format!("{:.3},", rng.random_range(-5.0..5.0)));
        }
        body.push_str(if rng.random_bool(0.5) { "1\n" } else { "0\n" });
    }
    let f = csv_file(&body);
    let data = load_csv_dataset(f.path()).unwrap();
    assert_eq!(data.len(), 30000);
    assert_eq!(data.dim(), 25);
    assert!(data.has_intercept());

    let (train, test) = split_train_test(&data, 0.7, 3).unwrap();
    assert_eq!((train.len(), test.len()), (21000, 9000));
}

#[test]
fn header_is_skipped_and_bad_labels_rejected() {
    let plain = load_csv_dataset(csv_file("1,2,0\n3,4,1\n").path()).unwrap();
    let headed = load_csv_dataset(csv_file("a,b,label\n1,2,0\n3,4,1\n").path()).unwrap();
    assert_eq!(plain, headed);
    assert!(load_csv_dataset(csv_file("1,2,2\n").path()).is_err());
    assert!(load_csv_dataset(csv_file("1,2,0\n3,1\n").path()).is_err());
    assert!(load_csv_dataset(csv_file("").path()).is_err());
}

#[test]
fn split_follows_floor_rule_and_partitions() {
    let (a, b) = split_train_test(&indexed(10), 0.999, 0).unwrap();
    assert_eq!((a.len(), b.len()), (9, 1));

    let data = indexed(1000);
    let (train, test) = split_train_test(&data, 0.7, 5).unwrap();
    let mut seen: Vec<usize> = train.rows().chain(test.rows()).map(|r| r[0] as usize).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..1000).collect::<Vec<_>>());
    assert_eq!(split_train_test(&data, 0.7, 5).unwrap(), (train, test));
}

#[test]
fn bootstrap_distinct_fraction() {
    let n = 21000;
    let data = indexed(n);
    let sample = bootstrap_sample(&data, n, 7).unwrap();
    let distinct: HashSet<u64> = sample.rows().map(|r| r[0] as u64).collect();
    let frac = distinct.len() as f64 / n as f64;
    let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    assert!((frac - expected).abs() <= 0.01, "{frac} vs {expected}");
    assert_eq!(bootstrap_sample(&data, 1, 8).unwrap().len(), 1);
    assert_eq!(bootstrap_sample(&data, 50, 9).unwrap(), bootstrap_sample(&data, 50, 9).unwrap());
}

fn trained_test_error(separation: f64) -> f64 {
    let p = prepare(synth_dataset(10, 5000, separation, 11).unwrap(), 0.7, 12).unwrap();
    let w = train_centralized(&p.train, HyperParams::default(), Epsilon::infinite(), 2000, 13);
    classification_error(&w, &p.test).unwrap()
}

#[test]
fn inseparable_classes_stay_at_chance() {
    let e = trained_test_error(0.0);
    assert!((e - 0.5).abs() <= 0.05, "error {e}");
}

#[test]
fn separated_classes_are_learned() {
    let e = trained_test_error(6.0);
    assert!(e <= 0.05, "error {e}");
}

#[test]
fn synthetic_class_means() {
    let data = synth_dataset(3, 20000, 6.0, 14).unwrap();
    assert_eq!(data, synth_dataset(3, 20000, 6.0, 14).unwrap());
    let ones = data.labels().iter().filter(|&&y| y == 1).count();
    assert_eq!(ones, 10000);
    let mean = |label: u8, j: usize| {
        let v: Vec<f64> = data.examples().filter(|e| e.label == label).map(|e| e.features[j]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    // standard error of each mean is 1/sqrt(10000) = 0.01
    assert!((mean(1, 0) - 3.0).abs() < 0.04);
    assert!((mean(0, 0) + 3.0).abs() < 0.04);
    assert!(mean(1, 1).abs() < 0.04);
}

#[test]
fn injected_latency_is_uniform() {
    let cfg = TransportConfig { latency_ms_max: 500, ..TransportConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let draws: Vec<u64> = (0..20000).map(|_| inject_latency(&mut rng, &cfg)).collect();
    let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
    assert!((mean - 250.0).abs() <= 5.0, "mean {mean}");
    assert!(draws.iter().all(|&d| d <= 500));
    assert_eq!(inject_latency(&mut rng, &TransportConfig::default()), 0);
}
