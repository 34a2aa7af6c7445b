//! Logistic-regression model math.
//!
//! Labels are `0`/`1`, the link is the logistic sigmoid and there is no
//! separate intercept term: datasets that want one carry a trailing
//! constant-1 feature column (see [`LabeledDataset::with_intercept`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value produced")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("iteration counter must be >= 1")]
    ZeroIteration,
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

pub type Result<T> = std::result::Result<T, NumericError>;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NumericError::DimensionMismatch { expected, got })
    }
}

/// A dense model / gradient / noise vector with a fixed dimension and only
/// finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(NumericError::NonFinite)
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn dot(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.0.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = NumericError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(v: ParameterVector) -> Self {
        v.0
    }
}

/// One labeled feature row borrowed from a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub label: u8,
}

/// Row-major feature matrix plus binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    intercept: bool,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.is_empty() {
            return Err(NumericError::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(NumericError::InvalidDataset(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(NumericError::InvalidDataset("zero-width rows".into()));
        }
        let mut features = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            check_dim(dim, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(NumericError::NonFinite);
            }
            features.extend_from_slice(row);
        }
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(NumericError::InvalidDataset(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            dim,
            features,
            labels,
            intercept: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            features: self.row(i),
            label: self.labels[i],
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = Example<'_>> + '_ {
        (0..self.len()).map(move |i| self.example(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Builds a new dataset from the given row indices (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(NumericError::EmptyDataset);
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            dim: self.dim,
            features,
            labels,
            intercept: self.intercept,
        })
    }

    /// Appends a constant-1 feature column. Idempotent.
    pub fn with_intercept(self) -> Self {
        if self.intercept {
            return self;
        }
        let dim = self.dim + 1;
        let mut features = Vec::with_capacity(self.len() * dim);
        for row in self.features.chunks_exact(self.dim) {
            features.extend_from_slice(row);
            features.push(1.0);
        }
        Self {
            dim,
            features,
            labels: self.labels,
            intercept: true,
        }
    }

    /// Same features, every label `y` replaced by `1 - y`.
    pub fn flip_labels(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|y| 1 - y).collect(),
            ..self.clone()
        }
    }

    /// Number of columns subject to normalization (the intercept is excluded).
    fn data_columns(&self) -> usize {
        if self.intercept {
            self.dim - 1
        } else {
            self.dim
        }
    }
}

/// Per-column z-score statistics fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    /// Fits column means and sample standard deviations. Columns with zero
    /// spread (or a single row) normalize to all zeros.
    pub fn fit(data: &LabeledDataset) -> Self {
        let cols = data.data_columns();
        let n = data.len() as f64;
        let mut mean = vec![0.0; cols];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; cols];
        for row in data.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| if data.len() > 1 { (s / (n - 1.0)).sqrt() } else { 0.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &mut LabeledDataset) -> Result<()> {
        check_dim(self.mean.len(), data.data_columns())?;
        let dim = data.dim;
        for row in data.features.chunks_exact_mut(dim) {
            for (j, v) in row.iter_mut().take(self.mean.len()).enumerate() {
                // relative cutoff keeps float noise in constant columns from blowing up
                *v = if self.std[j] > 1e-12 * (1.0 + self.mean[j].abs()) {
                    (*v - self.mean[j]) / self.std[j]
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub eta0: f64,
    pub lambda: f64,
    pub batch_size: usize,
}

impl HyperParams {
    pub fn new(eta0: f64, lambda: f64, batch_size: usize) -> Result<Self> {
        let hp = Self {
            eta0,
            lambda,
            batch_size,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(NumericError::InvalidHyperParams(format!("eta0 = {}", self.eta0)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(NumericError::InvalidHyperParams(format!("lambda = {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(NumericError::InvalidHyperParams("batch_size = 0".into()));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta0: 0.1,
            lambda: 0.0,
            batch_size: 10,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Returns 1 iff `sigmoid(w . x) >= 0.5`.
pub fn predict(w: &ParameterVector, x: &[f64]) -> Result<u8> {
    // sigmoid(z) >= 0.5 exactly when z >= 0
    Ok(u8::from(w.dot(x)? >= 0.0))
}

/// Gradient of the L2-regularized mean logistic loss over `batch`:
/// `lambda * w + (1/b) * sum((sigmoid(w . x) - y) * x)`.
pub fn logistic_gradient(w: &ParameterVector, batch: &[Example<'_>], lambda: f64) -> Result<ParameterVector> {
    if batch.is_empty() {
        return Err(NumericError::EmptyBatch);
    }
    let d = w.dim();
    let mut acc = vec![0.0; d];
    for ex in batch {
        let residual = sigmoid(w.dot(ex.features)?) - f64::from(ex.label);
        for (a, x) in acc.iter_mut().zip(ex.features) {
            *a += residual * x;
        }
    }
    let b = batch.len() as f64;
    let grad = acc
        .iter()
        .zip(w.as_slice())
        .map(|(a, wi)| lambda * wi + a / b)
        .collect();
    ParameterVector::new(grad)
}

pub fn sgd_step(w: &ParameterVector, grad: &ParameterVector, eta: f64) -> Result<ParameterVector> {
    check_dim(w.dim(), grad.dim())?;
    ParameterVector::new(w.as_slice().iter().zip(grad.as_slice()).map(|(wi, gi)| wi - eta * gi).collect())
}

/// `eta0 / sqrt(t)` for `t >= 1`.
pub fn learning_rate(t: u64, eta0: f64) -> Result<f64> {
    if t == 0 {
        return Err(NumericError::ZeroIteration);
    }
    Ok(eta0 / (t as f64).sqrt())
}

/// Fraction of rows where `predict(w, x) != y`.
pub fn classification_error(w: &ParameterVector, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(NumericError::EmptyDataset);
    }
    check_dim(w.dim(), data.dim())?;
    let mut wrong = 0usize;
    for ex in data.examples() {
        if predict(w, ex.features)? != ex.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Fraction of rows where the two models disagree.
pub fn disagreement(a: &ParameterVector, b: &ParameterVector, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(NumericError::EmptyDataset);
    }
    let mut differ = 0usize;
    for row in data.rows() {
        if predict(a, row)? != predict(b, row)? {
            differ += 1;
        }
    }
    Ok(differ as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&pv(&[0.0, 0.0]), &[3.0, -7.0]).unwrap(), 1);
        assert_eq!(predict(&pv(&[10.0, 0.0]), &[1.0, 0.0]).unwrap(), 1);
        assert_eq!(predict(&pv(&[-10.0, 0.0]), &[1.0, 0.0]).unwrap(), 0);
        assert!(matches!(
            predict(&pv(&[1.0]), &[1.0, 2.0]),
            Err(NumericError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn gradient_zero_feature_leaves_only_regularizer() {
        let x = [0.0, 0.0];
        let g = logistic_gradient(&pv(&[1.0, 1.0]), &[Example { features: &x, label: 0 }], 2.0).unwrap();
        assert_eq!(g.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn gradient_rejects_empty_batch_and_bad_dims() {
        assert_eq!(
            logistic_gradient(&pv(&[0.0]), &[], 0.0),
            Err(NumericError::EmptyBatch)
        );
        let x = [1.0];
        assert!(logistic_gradient(&pv(&[0.0, 0.0]), &[Example { features: &x, label: 1 }], 0.0).is_err());
    }

    #[test]
    fn non_finite_vectors_are_rejected() {
        assert_eq!(ParameterVector::new(vec![f64::NAN]), Err(NumericError::NonFinite));
        assert_eq!(pv(&[f64::MAX]).scale(10.0), Err(NumericError::NonFinite));
    }

    #[test]
    fn sgd_step_examples() {
        assert_eq!(sgd_step(&pv(&[1.0, 1.0]), &pv(&[1.0, 1.0]), 1.0).unwrap().as_slice(), &[0.0, 0.0]);
        let w = pv(&[0.3, -2.0]);
        assert_eq!(sgd_step(&w, &ParameterVector::zeros(2), 0.7).unwrap(), w);
    }

    #[test]
    fn learning_rate_schedule() {
        assert_eq!(learning_rate(1, 0.1).unwrap(), 0.1);
        assert!((learning_rate(4, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!((learning_rate(100, 0.1).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(learning_rate(0, 0.1), Err(NumericError::ZeroIteration));
        let mut prev = f64::INFINITY;
        for t in 1..10_000 {
            let lr = learning_rate(t, 0.1).unwrap();
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn classification_error_examples() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let data = LabeledDataset::new(rows, labels).unwrap();
        assert!((classification_error(&ParameterVector::zeros(2), &data).unwrap() - 0.3).abs() < 1e-15);
        // w . x = x0 - 2.5: predicts 1 for x0 >= 3, matching every label
        assert_eq!(classification_error(&pv(&[1.0, -2.5]), &data).unwrap(), 0.0);
        let single = LabeledDataset::new(vec![vec![1.0]], vec![0]).unwrap();
        assert_eq!(classification_error(&pv(&[1.0]), &single).unwrap(), 1.0);
    }

    #[test]
    fn dataset_validation() {
        assert_eq!(LabeledDataset::new(vec![], vec![]), Err(NumericError::EmptyDataset));
        assert!(LabeledDataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![2]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![0, 1]).is_err());
    }

    #[test]
    fn normalizer_centers_and_scales_but_skips_intercept() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0], vec![6.0, 5.0]];
        let mut data = LabeledDataset::new(rows, vec![0, 1, 0, 1]).unwrap().with_intercept();
        let norm = Normalizer::fit(&data);
        norm.apply(&mut data).unwrap();
        let col0: Vec<f64> = data.rows().map(|r| r[0]).collect();
        let mean = col0.iter().sum::<f64>() / 4.0;
        let var = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
        assert!(data.rows().all(|r| r[1] == 0.0 && r[2] == 1.0));
    }

    #[test]
    fn flip_twice_is_identity() {
        let data = LabeledDataset::new(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 1]).unwrap();
        assert_eq!(data.flip_labels().labels(), &[1, 0, 0]);
        assert_eq!(data.flip_labels().flip_labels(), data);
    }
}
