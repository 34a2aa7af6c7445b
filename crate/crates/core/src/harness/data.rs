//! Dataset ingestion, synthesis, splitting and sampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::HarnessError;
use crate::numeric::{LabeledDataset, Normalizer};

/// Reads `d` feature columns plus a trailing `{0,1}` label per row and
/// appends an intercept column. A first row that does not parse as numbers
/// is treated as a header.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, HarnessError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(HarnessError::Data(format!("line {}: {e}", i + 1))),
        };
        if values.len() < 2 {
            return Err(HarnessError::Data(format!(
                "line {}: need at least one feature and a label",
                i + 1
            )));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(HarnessError::Data(format!(
                    "line {}: {} columns, expected {w}",
                    i + 1,
                    values.len()
                )))
            }
            Some(_) => {}
        }
        let (features, label) = values.split_at(values.len() - 1);
        let label = match label[0] {
            0.0 => 0,
            1.0 => 1,
            l => return Err(HarnessError::Data(format!("line {}: label {l} is not 0 or 1", i + 1))),
        };
        rows.push(features.to_vec());
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(HarnessError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(LabeledDataset::new(rows, labels)?.with_intercept())
}

/// Seeded permutation, then split at `floor(n * train_frac)`.
pub fn split_train_test(
    data: &LabeledDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), HarnessError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(HarnessError::Config(format!("train_frac {train_frac} not in (0, 1)")));
    }
    let n = data.len();
    let cut = (n as f64 * train_frac).floor() as usize;
    if cut == 0 || cut == n {
        return Err(HarnessError::Data(format!("split of {n} rows at {train_frac} leaves a side empty")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select(&order[..cut])?, data.select(&order[cut..])?))
}

/// `m` rows drawn uniformly with replacement.
pub fn bootstrap_sample(train: &LabeledDataset, m: usize, seed: u64) -> Result<LabeledDataset, HarnessError> {
    if m == 0 {
        return Err(HarnessError::Config("bootstrap size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = train.len();
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    Ok(train.select(&idx)?)
}

/// Two spherical unit-variance Gaussian classes centred at
/// `±(separation / 2) e1`, alternating labels (equal priors).
pub fn synth_dataset(d: usize, n: usize, separation: f64, seed: u64) -> Result<LabeledDataset, HarnessError> {
    if d == 0 || n < 2 {
        return Err(HarnessError::Config(format!("synthetic data needs d >= 1 and n >= 2, got d={d} n={n}")));
    }
    if !separation.is_finite() {
        return Err(HarnessError::Config("separation must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let mut row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        row[0] += if label == 1 { separation / 2.0 } else { -separation / 2.0 };
        rows.push(row);
        labels.push(label);
    }
    Ok(LabeledDataset::new(rows, labels)?)
}

/// Contiguous, near-equal shards (sizes differ by at most one).
pub fn partition_even(data: &LabeledDataset, parts: usize) -> Result<Vec<LabeledDataset>, HarnessError> {
    if parts == 0 || parts > data.len() {
        return Err(HarnessError::Config(format!("cannot split {} rows into {parts} shards", data.len())));
    }
    let n = data.len();
    (0..parts)
        .map(|p| {
            let lo = p * n / parts;
            let hi = (p + 1) * n / parts;
            let idx: Vec<usize> = (lo..hi).collect();
            Ok(data.select(&idx)?)
        })
        .collect()
}

/// Train and test shards, z-scored with statistics from the train shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Adds an intercept, permutes and splits, then normalizes both shards
/// with train-shard statistics.
pub fn prepare(data: LabeledDataset, train_frac: f64, seed: u64) -> Result<Prepared, HarnessError> {
    let data = data.with_intercept();
    let (mut train, mut test) = split_train_test(&data, train_frac, seed)?;
    let norm = Normalizer::fit(&train);
    norm.apply(&mut train)?;
    norm.apply(&mut test)?;
    Ok(Prepared { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_with_and_without_header() {
        let plain = write_csv("1,2,0\n3,4,1\n");
        let headed = write_csv("a,b,label\n1,2,0\n3,4,1\n");
        let a = load_csv_dataset(plain.path()).unwrap();
        let b = load_csv_dataset(headed.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a.dim()), (2, 3));
        assert_eq!(a.row(1), &[3.0, 4.0, 1.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(load_csv_dataset(write_csv("1,2,2\n").path()).is_err());
        assert!(load_csv_dataset(write_csv("1,2,0\n1,1\n").path()).is_err());
        assert!(load_csv_dataset(write_csv("").path()).is_err());
        assert!(load_csv_dataset(write_csv("x,y\n").path()).is_err());
        assert!(load_csv_dataset("/nonexistent/file.csv").is_err());
    }

    #[test]
    fn split_floor_rule() {
        let d = synth_dataset(2, 10, 1.0, 0).unwrap();
        let (tr, te) = split_train_test(&d, 0.999, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (9, 1));
        let (tr2, te2) = split_train_test(&d, 0.999, 3).unwrap();
        assert_eq!((tr, te), (tr2, te2));
        assert!(split_train_test(&d, 1.0, 3).is_err());
        assert!(split_train_test(&d, 0.0, 3).is_err());
    }

    #[test]
    fn bootstrap_basics() {
        let d = synth_dataset(2, 50, 1.0, 0).unwrap();
        let one = bootstrap_sample(&d, 1, 4).unwrap();
        assert_eq!(one.len(), 1);
        assert!(d.rows().any(|r| r == one.row(0)));
        assert_eq!(bootstrap_sample(&d, 30, 9).unwrap(), bootstrap_sample(&d, 30, 9).unwrap());
        assert!(bootstrap_sample(&d, 0, 9).is_err());
    }

    #[test]
    fn synth_is_reproducible_and_balanced() {
        let a = synth_dataset(3, 100, 6.0, 11).unwrap();
        assert_eq!(a, synth_dataset(3, 100, 6.0, 11).unwrap());
        assert_ne!(a, synth_dataset(3, 100, 6.0, 12).unwrap());
        assert_eq!(a.labels().iter().filter(|&&y| y == 1).count(), 50);
        assert!(synth_dataset(0, 10, 1.0, 0).is_err());
        assert!(synth_dataset(2, 1, 1.0, 0).is_err());
    }

    #[test]
    fn partitions_cover_everything() {
        let d = synth_dataset(2, 11, 1.0, 0).unwrap();
        let parts = partition_even(&d, 3).unwrap();
        let sizes: Vec<usize> = parts.iter().map(LabeledDataset::len).collect();
        assert_eq!(sizes, [3, 4, 4]);
        assert!(partition_even(&d, 0).is_err());
    }

    #[test]
    fn prepare_normalizes_on_train() {
        let d = synth_dataset(3, 200, 4.0, 1).unwrap();
        let p = prepare(d, 0.7, 2).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (140, 60));
        assert_eq!(p.train.dim(), 4);
        let mean0: f64 = p.train.rows().map(|r| r[1]).sum::<f64>() / 140.0;
        assert!(mean0.abs() < 1e-12);
        assert!(p.train.rows().all(|r| r[3] == 1.0));
    }
}
