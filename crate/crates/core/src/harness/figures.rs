//! Desk-scale experiment grids, one per figure. Each grid returns its raw
//! per-seed measurements so callers can take medians, check orderings or
//! write CSVs for external plotting.

use std::path::Path;

use serde::Serialize;

use super::config::{ClientGroup, ExperimentConfig, Role, Scenario};
use super::run::{run_experiment, ExperimentReport};
use super::HarnessError;
use crate::adversary::AttackMode;
use crate::privacy::Epsilon;

pub const DIM: usize = 10;
pub const ROWS: usize = 5000;
/// Class separation for the convergence, scaling and poisoning grids.
pub const SEPARABLE: f64 = 6.0;
/// Overlapping classes for inversion, so the victim optimum is not trivially
/// recovered by any well-trained model.
pub const OVERLAPPING: f64 = 1.0;
pub const POISONING_CLIENTS: usize = 8;
/// Error level for the scaling grid's iterations-to-error metric.
pub const SCALING_TARGET: f64 = 0.10;
/// Bayes error near 0.07, so reaching the target takes real training.
pub const SCALING_SEPARATION: f64 = 3.0;
/// Client round trips dominate broker service time, as over a WAN.
pub const SCALING_LATENCY_MS: u64 = 50;

pub fn convergence_config(epsilon: Epsilon, batch: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(Scenario::Convergence, DIM, ROWS, SEPARABLE);
    cfg.max_iterations = 2000;
    cfg.seed = seed;
    cfg.groups = vec![ClientGroup::new(Role::Honest, 1).epsilon(epsilon).batch_size(batch)];
    cfg
}

pub fn scaling_config(clients: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(Scenario::Scaling, DIM, ROWS, SCALING_SEPARATION);
    cfg.max_iterations = 1000;
    cfg.seed = seed;
    cfg.broker.metrics_every = 1;
    cfg.transport.latency_ms_max = SCALING_LATENCY_MS;
    cfg.groups = vec![ClientGroup::new(Role::Honest, clients)];
    cfg
}

/// Victim and attacker with `k = 2 + bystanders`; validation is off so only
/// the inversion mechanics are measured.
pub fn inversion_config(
    epsilon: Epsilon,
    mode: AttackMode,
    bystanders: usize,
    latency_ms_max: u64,
    seed: u64,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(Scenario::Inversion, DIM, ROWS, OVERLAPPING);
    cfg.max_iterations = 2000;
    cfg.seed = seed;
    cfg.hyper.lambda = 0.0;
    cfg.broker.validation_rate = 0.0;
    cfg.transport.latency_ms_max = latency_ms_max;
    let k = 2 + bystanders as u32;
    cfg.groups = vec![
        ClientGroup::new(Role::Victim, 1).k(k).epsilon(epsilon),
        ClientGroup::new(Role::Attacker, 1).k(k).attack_mode(mode),
    ];
    if bystanders > 0 {
        cfg.groups.push(ClientGroup::new(Role::Bystander, bystanders).k(k));
    }
    cfg
}

/// Eight clients, `poisoners` of them training on flipped labels.
pub fn poisoning_config(poisoners: usize, threshold: f64, epsilon: Epsilon, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(Scenario::Poisoning, DIM, ROWS, SEPARABLE);
    cfg.max_iterations = 1000;
    cfg.seed = seed;
    cfg.broker.roni_threshold = threshold;
    if poisoners < POISONING_CLIENTS {
        cfg.groups
            .push(ClientGroup::new(Role::Honest, POISONING_CLIENTS - poisoners).epsilon(epsilon));
    }
    if poisoners > 0 {
        cfg.groups.push(ClientGroup::new(Role::Poisoner, poisoners).epsilon(epsilon));
    }
    cfg
}

/// One scalar outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub series: String,
    pub x: f64,
    pub seed: u64,
    pub value: Option<f64>,
}

/// One point of a training-error curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub series: String,
    pub x: f64,
    pub seed: u64,
    pub wall_ms: u64,
    pub iteration: u64,
    pub training_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: &'static str,
    pub points: Vec<Measurement>,
    pub curves: Vec<CurvePoint>,
}

/// Median of the values present; `None` sorts above every number, so a run
/// that never reached a target counts as the slowest.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(a), Some(b)) => a.total_cmp(b),
        (None, None) => std::cmp::Ordering::Equal,
        (None, _) => std::cmp::Ordering::Greater,
        (_, None) => std::cmp::Ordering::Less,
    });
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        Some((v[n / 2 - 1]? + v[n / 2]?) / 2.0)
    }
}

impl Figure {
    fn new(name: &'static str) -> Self {
        Self { name, points: Vec::new(), curves: Vec::new() }
    }

    fn record(&mut self, series: &str, x: f64, seed: u64, value: Option<f64>) {
        self.points.push(Measurement { series: series.into(), x, seed, value });
    }

    fn record_curve(&mut self, series: &str, x: f64, seed: u64, report: &ExperimentReport) {
        self.curves.extend(report.rows.iter().map(|r| CurvePoint {
            series: series.into(),
            x,
            seed,
            wall_ms: r.wall_ms,
            iteration: r.iteration,
            training_error: r.training_error,
        }));
    }

    /// Per-seed values of one grid cell.
    pub fn values(&self, series: &str, x: f64) -> Vec<Option<f64>> {
        self.points
            .iter()
            .filter(|p| p.series == series && p.x == x)
            .map(|p| p.value)
            .collect()
    }

    pub fn median(&self, series: &str, x: f64) -> Option<f64> {
        median(&self.values(series, x))
    }

    /// Writes `<name>.csv` and, when curves were recorded, `<name>_curves.csv`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        write_rows(&dir.join(format!("{}.csv", self.name)), &self.points)?;
        if !self.curves.is_empty() {
            write_rows(&dir.join(format!("{}_curves.csv", self.name)), &self.curves)?;
        }
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let io = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let report = run_experiment(cfg)?;
    if report.summary.timed_out || !report.summary.client_errors.is_empty() {
        return Err(HarnessError::Runtime(format!(
            "{:?} run with seed {} did not finish cleanly: {:?}",
            cfg.scenario, cfg.seed, report.summary.client_errors
        )));
    }
    Ok(report)
}

/// Final training error per (epsilon, batch); series `b=<batch>`, x = epsilon.
pub fn convergence(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("convergence");
    let grid = [
        (Epsilon::Infinite, 10),
        (Epsilon::Finite(5.0), 10),
        (Epsilon::Finite(0.5), 10),
        (Epsilon::Finite(0.5), 1),
    ];
    for (eps, b) in grid {
        let series = format!("b={b}");
        for &seed in seeds {
            let r = run(&convergence_config(eps, b, seed))?;
            fig.record(&series, eps.value(), seed, Some(r.summary.final_training_error));
            fig.record_curve(&series, eps.value(), seed, &r);
        }
    }
    Ok(fig)
}

pub const SCALING_CLIENTS: [usize; 3] = [2, 4, 8];

/// Applied updates until training error first reaches the target
/// (`iterations_to_target`) and virtual milliseconds from the first applied
/// update to the same point (`ms_to_target`), x = clients.
pub fn scaling(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("scaling");
    for n in SCALING_CLIENTS {
        for &seed in seeds {
            let r = run(&scaling_config(n, seed))?;
            let hit = r.rows.iter().find(|row| row.training_error <= SCALING_TARGET);
            let start = r.rows.first().map_or(0, |row| row.wall_ms);
            fig.record("iterations_to_target", n as f64, seed, hit.map(|row| row.iteration as f64));
            fig.record("ms_to_target", n as f64, seed, hit.map(|row| (row.wall_ms - start) as f64));
            fig.record_curve("training_error", n as f64, seed, &r);
        }
    }
    Ok(fig)
}

pub const INVERSION_EPSILONS: [f64; 5] = [0.5, 1.0, 2.0, 5.0, f64::INFINITY];

/// Reconstruction error of a zero-gradient attacker against a DP victim,
/// x = victim epsilon. Series `baseline` is the final global model's
/// disagreement with the same victim reference.
pub fn inversion(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("inversion");
    for eps in INVERSION_EPSILONS {
        let epsilon = Epsilon::new(eps).map_err(|e| HarnessError::Config(e.to_string()))?;
        for &seed in seeds {
            let r = run(&inversion_config(epsilon, AttackMode::ZeroGradients, 0, 0, seed))?;
            fig.record("reconstruction_error", eps, seed, r.summary.reconstruction_error);
            fig.record("baseline", eps, seed, r.summary.baseline_reconstruction_error);
        }
    }
    Ok(fig)
}

pub const BYSTANDER_COUNTS: [usize; 3] = [0, 1, 3];
pub const BYSTANDER_LATENCY_MS: u64 = 50;

/// Reconstruction error of an honest-gradient attacker under random
/// latency, x = bystander count.
pub fn bystanders(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("bystanders");
    for b in BYSTANDER_COUNTS {
        for &seed in seeds {
            let cfg = inversion_config(Epsilon::Infinite, AttackMode::HonestGradients, b, BYSTANDER_LATENCY_MS, seed);
            let r = run(&cfg)?;
            fig.record("reconstruction_error", b as f64, seed, r.summary.reconstruction_error);
        }
    }
    Ok(fig)
}

pub const POISONER_COUNTS: [usize; 4] = [0, 2, 4, 6];

/// Poisoning outcomes, x = poisoner fraction. Series: `final_error`,
/// `honest_penalized` and `poisoners_penalized` (client counts with at
/// least one penalty) and `poisoners` (the group size).
pub fn poisoning(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("poisoning");
    for p in POISONER_COUNTS {
        let x = p as f64 / POISONING_CLIENTS as f64;
        for &seed in seeds {
            let r = run(&poisoning_config(p, 0.02, Epsilon::Infinite, seed))?;
            fig.record("final_error", x, seed, Some(r.summary.final_training_error));
            fig.record("honest_penalized", x, seed, Some(r.penalized(Role::Honest) as f64));
            fig.record("poisoners_penalized", x, seed, Some(r.penalized(Role::Poisoner) as f64));
            fig.record("poisoners", x, seed, Some(p as f64));
            fig.record_curve("training_error", x, seed, &r);
        }
    }
    Ok(fig)
}

pub const RONI_THRESHOLDS: [f64; 3] = [0.005, 0.02, 0.05];

/// Iteration of the first poisoner penalty with 50% poisoners, x = threshold.
pub fn threshold_sweep(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("threshold");
    for thr in RONI_THRESHOLDS {
        for &seed in seeds {
            let r = run(&poisoning_config(POISONING_CLIENTS / 2, thr, Epsilon::Infinite, seed))?;
            let first = r.first_penalty_iteration(Role::Poisoner).map(|i| i as f64);
            fig.record("first_poisoner_penalty", thr, seed, first);
        }
    }
    Ok(fig)
}

/// Honest penalty events in an all-honest run with epsilon = 1, x = threshold.
pub fn false_positives(seeds: &[u64]) -> Result<Figure, HarnessError> {
    let mut fig = Figure::new("false_positives");
    for thr in RONI_THRESHOLDS {
        for &seed in seeds {
            let r = run(&poisoning_config(0, thr, Epsilon::Finite(1.0), seed))?;
            fig.record("honest_penalties", thr, seed, Some(r.summary.penalties.len() as f64));
        }
    }
    Ok(fig)
}

type Grid = fn(&[u64]) -> Result<Figure, HarnessError>;

/// Every grid, each written to `dir`. Returns the figures for inspection.
pub fn write_all(dir: impl AsRef<Path>, seeds: &[u64]) -> Result<Vec<Figure>, HarnessError> {
    let grids: [Grid; 7] =
        [convergence, scaling, inversion, bystanders, poisoning, threshold_sweep, false_positives];
    let mut out = Vec::with_capacity(grids.len());
    for grid in grids {
        let fig = grid(seeds)?;
        fig.write_csv(dir.as_ref())?;
        out.push(fig);
    }
    Ok(out)
}
