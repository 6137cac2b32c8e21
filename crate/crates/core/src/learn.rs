//! Ridge-regression readout and the evaluation metrics: the coefficient of
//! determination C(τ), the total memory capacity C_Σ and the NMSE.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::reservoir::{Reservoir, ReservoirConfig, StepRecord};
use crate::seeds::SeedStreams;
use crate::stats::Summary;
use crate::tasks::{delayed_targets, narma_dataset, uniform_inputs, NarmaParams, SplitSpec, TAU_MAX};

pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReadout {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization: f64,
}

impl LinearReadout {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, r)| w * r).sum::<f64>() + self.bias
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Factorized ridge problem for one feature matrix, reusable across targets.
///
/// The bias is left unpenalized by centering features and targets.
pub struct RidgeSolver {
    means: Vec<f64>,
    centered_t: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    regularization: f64,
}

impl RidgeSolver {
    pub fn new(features: &[Vec<f64>], regularization: f64) -> Result<Self> {
        let rows = features.len();
        let Some(p) = features.first().map(Vec::len) else {
            return Err(QrcError::invalid("ridge regression needs at least one sample"));
        };
        if features.iter().any(|r| r.len() != p) {
            return Err(QrcError::DimensionMismatch(
                "feature rows have different lengths".into(),
            ));
        }
        if !(regularization >= 0.0) || !regularization.is_finite() {
            return Err(QrcError::invalid(format!(
                "regularization must be a finite nonnegative number, got {regularization}"
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(QrcError::invalid("features must be finite"));
        }
        let means: Vec<f64> = (0..p)
            .map(|j| features.iter().map(|r| r[j]).sum::<f64>() / rows as f64)
            .collect();
        let centered_t = DMatrix::from_fn(p, rows, |j, i| features[i][j] - means[j]);
        let mut gram = &centered_t * centered_t.transpose();
        for j in 0..p {
            gram[(j, j)] += regularization;
        }
        let factor = Cholesky::new(gram).ok_or_else(|| {
            QrcError::Numerical("ridge normal matrix is not positive definite".into())
        })?;
        Ok(Self {
            means,
            centered_t,
            factor,
            regularization,
        })
    }

    pub fn fit(&self, targets: &[f64]) -> Result<LinearReadout> {
        let rows = self.centered_t.ncols();
        if targets.len() != rows {
            return Err(QrcError::DimensionMismatch(format!(
                "{rows} feature rows but {} targets",
                targets.len()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(QrcError::invalid("targets must be finite"));
        }
        let y_mean = targets.iter().sum::<f64>() / rows as f64;
        let yc = DVector::from_iterator(rows, targets.iter().map(|y| y - y_mean));
        let w = self.factor.solve(&(&self.centered_t * yc));
        let weights: Vec<f64> = w.iter().copied().collect();
        let bias = y_mean - weights.iter().zip(&self.means).map(|(w, m)| w * m).sum::<f64>();
        if !bias.is_finite() || weights.iter().any(|v| !v.is_finite()) {
            return Err(QrcError::Numerical("ridge solution is not finite".into()));
        }
        Ok(LinearReadout {
            weights,
            bias,
            regularization: self.regularization,
        })
    }
}

/// Minimizes `Σ(y − w·r − b)² + α‖w‖²`.
pub fn train_ridge(features: &[Vec<f64>], targets: &[f64], regularization: f64) -> Result<LinearReadout> {
    RidgeSolver::new(features, regularization)?.fit(targets)
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(QrcError::DimensionMismatch(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(QrcError::UndefinedMetric("empty sequence".into()));
    }
    Ok(())
}

/// Squared Pearson correlation `cov²(y, ŷ) / (σ²(y) σ²(ŷ))`.
pub fn determination_coefficient(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mh = y_hat.iter().sum::<f64>() / n;
    let (mut cov, mut vy, mut vh) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mh);
        cov += da * db;
        vy += da * da;
        vh += db * db;
    }
    if vy == 0.0 || vh == 0.0 {
        return Err(QrcError::UndefinedMetric(
            "coefficient of determination needs nonconstant sequences".into(),
        ));
    }
    Ok(cov * cov / (vy * vh))
}

/// `Σ_{τ=0}^{20} C(τ)`; every delay must be present.
pub fn total_capacity(per_delay: &BTreeMap<usize, f64>) -> Result<f64> {
    if let Some(missing) = (0..=TAU_MAX).find(|t| !per_delay.contains_key(t)) {
        return Err(QrcError::invalid(format!("capacity for delay {missing} missing")));
    }
    if let Some(extra) = per_delay.keys().find(|&&t| t > TAU_MAX) {
        return Err(QrcError::invalid(format!(
            "delay {extra} beyond the capacity range 0..={TAU_MAX}"
        )));
    }
    Ok(per_delay.values().sum())
}

/// `Σ(y − ŷ)² / Σy²`.
pub fn nmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let power: f64 = y.iter().map(|v| v * v).sum();
    if power == 0.0 {
        return Err(QrcError::UndefinedMetric("NMSE of all-zero targets".into()));
    }
    let err: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Capacity,
    TotalCapacity,
    Nmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedLabel {
    Seed(u64),
    Mean,
    Std,
}

impl std::fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedLabel::Seed(s) => write!(f, "{s}"),
            SeedLabel::Mean => f.write_str("mean"),
            SeedLabel::Std => f.write_str("std"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    /// Delay τ for capacities, NARMA order for NMSE.
    pub index: Option<usize>,
    pub seed: SeedLabel,
    pub value: f64,
}

/// Produces readout rows for one realization driven by `inputs`.
pub trait FeatureSource: Sync {
    fn features(&self, seeds: &SeedStreams, inputs: &[f64]) -> Result<Trajectory>;
}

/// Readout rows of one run plus the per-step coherence, if available.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rows: Vec<Vec<f64>>,
    pub coherence: Vec<f64>,
}

impl From<Vec<StepRecord>> for Trajectory {
    fn from(records: Vec<StepRecord>) -> Self {
        let coherence = records.iter().map(|r| r.coherence).collect();
        let rows = records.into_iter().map(|r| r.readout).collect();
        Self { rows, coherence }
    }
}

impl FeatureSource for ReservoirConfig {
    fn features(&self, seeds: &SeedStreams, inputs: &[f64]) -> Result<Trajectory> {
        let reservoir = Reservoir::new(self.for_realization(seeds)?)?;
        Ok(reservoir.run(inputs)?.into())
    }
}

/// Mean of `values` after dropping the first `discard` entries.
pub fn time_average(values: &[f64], discard: usize) -> Option<f64> {
    let kept = values.get(discard..)?;
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

/// C(τ) for `τ = 0..=tau_max` from one feature trajectory.
pub fn stm_capacities(rows: &[Vec<f64>], inputs: &[f64], split: SplitSpec, tau_max: usize) -> Result<Vec<f64>> {
    if rows.len() != inputs.len() || rows.len() != split.total() {
        return Err(QrcError::DimensionMismatch(format!(
            "{} feature rows, {} inputs, split covers {}",
            rows.len(),
            inputs.len(),
            split.total()
        )));
    }
    let (_, train, test) = split.ranges();
    let solver = RidgeSolver::new(&rows[train.clone()], DEFAULT_RIDGE)?;
    (0..=tau_max)
        .map(|tau| {
            let y = delayed_targets(inputs, tau);
            let readout = solver.fit(&y[train.clone()])?;
            determination_coefficient(&y[test.clone()], &readout.predict(&rows[test.clone()]))
        })
        .collect()
}

/// Test-split NMSE of a readout trained on the train split.
pub fn trained_nmse(rows: &[Vec<f64>], targets: &[f64], split: SplitSpec) -> Result<f64> {
    let (_, train, test) = split.ranges();
    let readout = train_ridge(&rows[train.clone()], &targets[train], DEFAULT_RIDGE)?;
    nmse(&targets[test.clone()], &readout.predict(&rows[test]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StmSeedResult {
    pub seed: u64,
    pub capacities: Vec<f64>,
    pub total: f64,
    /// Time-averaged coherence after the washout, if the source reports it.
    pub mean_coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StmEvaluation {
    pub per_seed: Vec<StmSeedResult>,
}

impl StmEvaluation {
    pub fn totals(&self) -> Vec<f64> {
        self.per_seed.iter().map(|s| s.total).collect()
    }

    pub fn total_summary(&self) -> Summary {
        Summary::of(&self.totals())
    }

    pub fn capacity_summary(&self, tau: usize) -> Summary {
        let v: Vec<f64> = self.per_seed.iter().map(|s| s.capacities[tau]).collect();
        Summary::of(&v)
    }

    pub fn coherence_summary(&self) -> Option<Summary> {
        let v: Option<Vec<f64>> = self.per_seed.iter().map(|s| s.mean_coherence).collect();
        v.map(|v| Summary::of(&v))
    }

    /// Per-seed rows followed by mean and std rows, for every C(τ) and C_Σ.
    pub fn reports(&self) -> Vec<MetricReport> {
        let mut out = Vec::new();
        let tau_count = self.per_seed.first().map_or(0, |s| s.capacities.len());
        let mut push = |kind, index, values: Vec<(u64, f64)>| {
            let summary = Summary::of(&values.iter().map(|v| v.1).collect::<Vec<_>>());
            for (seed, value) in values {
                out.push(MetricReport { kind, index, seed: SeedLabel::Seed(seed), value });
            }
            out.push(MetricReport { kind, index, seed: SeedLabel::Mean, value: summary.mean });
            out.push(MetricReport { kind, index, seed: SeedLabel::Std, value: summary.std });
        };
        for tau in 0..tau_count {
            let v = self.per_seed.iter().map(|s| (s.seed, s.capacities[tau])).collect();
            push(MetricKind::Capacity, Some(tau), v);
        }
        let v = self.per_seed.iter().map(|s| (s.seed, s.total)).collect();
        push(MetricKind::TotalCapacity, None, v);
        out
    }
}

fn check_seeds(seeds: &[SeedStreams]) -> Result<()> {
    if seeds.is_empty() {
        return Err(QrcError::invalid("at least one seed is required"));
    }
    Ok(())
}

/// One run per realization with fresh uniform inputs, scored for every delay.
pub fn evaluate_stm<S: FeatureSource>(source: &S, seeds: &[SeedStreams], length: usize) -> Result<StmEvaluation> {
    check_seeds(seeds)?;
    let split = SplitSpec::for_length(length)?;
    let per_seed = seeds
        .par_iter()
        .map(|s| {
            let inputs = uniform_inputs(length, s.input);
            let traj = source.features(s, &inputs)?;
            let capacities = stm_capacities(&traj.rows, &inputs, split, TAU_MAX)?;
            let total = capacities.iter().sum();
            let mean_coherence = time_average(&traj.coherence, split.washout);
            Ok(StmSeedResult {
                seed: s.index,
                capacities,
                total,
                mean_coherence,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StmEvaluation { per_seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarmaEvaluation {
    pub orders: Vec<usize>,
    /// `per_seed[i] = (seed, NMSE per order)`.
    pub per_seed: Vec<(u64, Vec<f64>)>,
}

impl NarmaEvaluation {
    pub fn summary(&self, order: usize) -> Option<Summary> {
        let pos = self.orders.iter().position(|&o| o == order)?;
        let v: Vec<f64> = self.per_seed.iter().map(|(_, e)| e[pos]).collect();
        Some(Summary::of(&v))
    }

    pub fn reports(&self) -> Vec<MetricReport> {
        let mut out = Vec::new();
        for (pos, &order) in self.orders.iter().enumerate() {
            let values: Vec<f64> = self.per_seed.iter().map(|(_, e)| e[pos]).collect();
            for (seed, e) in &self.per_seed {
                out.push(MetricReport {
                    kind: MetricKind::Nmse,
                    index: Some(order),
                    seed: SeedLabel::Seed(*seed),
                    value: e[pos],
                });
            }
            let summary = Summary::of(&values);
            for (seed, value) in [(SeedLabel::Mean, summary.mean), (SeedLabel::Std, summary.std)] {
                out.push(MetricReport { kind: MetricKind::Nmse, index: Some(order), seed, value });
            }
        }
        out
    }
}

/// NARMA tasks of several orders share the deterministic input, so each
/// realization is run once and scored for every order.
pub fn evaluate_narma<S: FeatureSource>(
    source: &S,
    seeds: &[SeedStreams],
    length: usize,
    orders: &[usize],
) -> Result<NarmaEvaluation> {
    check_seeds(seeds)?;
    if orders.is_empty() {
        return Err(QrcError::invalid("at least one NARMA order is required"));
    }
    let datasets = orders
        .iter()
        .map(|&n| narma_dataset(length, &NarmaParams::new(n)))
        .collect::<Result<Vec<_>>>()?;
    let inputs = &datasets[0].inputs;
    let per_seed = seeds
        .par_iter()
        .map(|s| {
            let traj = source.features(s, inputs)?;
            let errors = datasets
                .iter()
                .map(|ds| trained_nmse(&traj.rows, &ds.targets, ds.split))
                .collect::<Result<Vec<_>>>()?;
            Ok((s.index, errors))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NarmaEvaluation {
        orders: orders.to_vec(),
        per_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal equations on centered data, solved by Gauss-Jordan elimination
    /// with partial pivoting.
    fn ridge_oracle(x: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        let p = x[0].len();
        let mx: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let my = y.iter().sum::<f64>() / n as f64;
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = (0..n).map(|k| (x[k][i] - mx[i]) * (x[k][j] - mx[j])).sum::<f64>();
            }
            a[i][i] += alpha;
            a[i][p] = (0..n).map(|k| (x[k][i] - mx[i]) * (y[k] - my)).sum::<f64>();
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for v in a[col].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != col {
                    let f = a[r][col];
                    let pivot_row = a[col].clone();
                    for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let w: Vec<f64> = a.iter().map(|r| r[p]).collect();
        let b = my - w.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    fn random_system(rows: usize, cols: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn ridge_matches_normal_equation_oracle() {
        for seed in 0..20 {
            let (x, y) = random_system(50, 12, seed);
            let r = train_ridge(&x, &y, DEFAULT_RIDGE).unwrap();
            let (w, b) = ridge_oracle(&x, &y, DEFAULT_RIDGE);
            assert!(rel_err(&r.weights, &w) < 1e-8);
            assert!((r.bias - b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn ridge_recovers_exact_linear_map() {
        let (x, _) = random_system(60, 5, 3);
        let w_true = [0.5, -1.25, 2.0, 0.0, 0.75];
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() + 0.3)
            .collect();
        let r = train_ridge(&x, &y, 0.0).unwrap();
        for (a, b) in r.weights.iter().zip(&w_true) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((r.bias - 0.3).abs() < 1e-8);
    }

    #[test]
    fn heavy_regularization_predicts_the_mean() {
        let (x, y) = random_system(40, 4, 5);
        let r = train_ridge(&x, &y, 1e14).unwrap();
        assert!(r.weight_norm() < 1e-10);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((r.bias - mean).abs() < 1e-10);
    }

    #[test]
    fn ridge_rejects_bad_input() {
        let (x, y) = random_system(10, 3, 6);
        assert!(train_ridge(&x, &y[..9], 1e-8).is_err());
        assert!(train_ridge(&[], &[], 1e-8).is_err());
        assert!(train_ridge(&x, &y, -1.0).is_err());
        let singular = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(
            train_ridge(&singular, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.0),
            Err(QrcError::Numerical(_))
        ));
    }

    #[test]
    fn determination_coefficient_cases() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert!((determination_coefficient(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let affine: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((determination_coefficient(&y, &affine).unwrap() - 1.0).abs() < 1e-15);
        // Means 2.5 and 2.25; cov = 4.5/4, var = 5/4 and 4.75/4.
        let c = determination_coefficient(&y, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!((c - 4.5 * 4.5 / (5.0 * 4.75)).abs() < 1e-15);
        assert!(matches!(
            determination_coefficient(&y, &[1.0; 4]),
            Err(QrcError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn total_capacity_cases() {
        let ones: BTreeMap<usize, f64> = (0..=20).map(|t| (t, 1.0)).collect();
        assert_eq!(total_capacity(&ones).unwrap(), 21.0);
        let zeros: BTreeMap<usize, f64> = (0..=20).map(|t| (t, 0.0)).collect();
        assert_eq!(total_capacity(&zeros).unwrap(), 0.0);
        let harmonic: BTreeMap<usize, f64> = (0..=20).map(|t| (t, 1.0 / (t as f64 + 1.0))).collect();
        let h21: f64 = (1..=21).map(|k| 1.0 / k as f64).sum();
        assert!((total_capacity(&harmonic).unwrap() - h21).abs() < 1e-14);
        let mut missing = ones.clone();
        missing.remove(&7);
        assert!(total_capacity(&missing).is_err());
    }

    #[test]
    fn nmse_cases() {
        let y = [0.5, -1.0, 2.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        assert_eq!(nmse(&y, &[0.0; 3]).unwrap(), 1.0);
        assert_eq!(nmse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(nmse(&[0.0; 3], &y), Err(QrcError::UndefinedMetric(_))));
    }

    /// Features are the last 21 inputs, so every delay is recalled exactly.
    struct DelayLine;

    impl FeatureSource for DelayLine {
        fn features(&self, _: &SeedStreams, inputs: &[f64]) -> Result<Trajectory> {
            let rows = (0..inputs.len())
                .map(|k| (0..=TAU_MAX).map(|t| if k >= t { inputs[k - t] } else { 0.0 }).collect())
                .collect();
            Ok(Trajectory { rows, coherence: Vec::new() })
        }
    }

    #[test]
    fn delay_line_has_full_capacity() {
        let seeds = SeedStreams::list(1, 3);
        let eval = evaluate_stm(&DelayLine, &seeds, 1000).unwrap();
        for s in &eval.per_seed {
            assert!(s.capacities.iter().all(|c| (c - 1.0).abs() < 1e-10));
            assert_eq!(s.mean_coherence, None);
        }
        assert!((eval.total_summary().mean - 21.0).abs() < 1e-8);
        let reports = eval.reports();
        assert_eq!(reports.len(), 22 * 5);
        let mean_row = reports
            .iter()
            .find(|r| r.kind == MetricKind::TotalCapacity && r.seed == SeedLabel::Mean)
            .unwrap();
        let manual = eval.totals().iter().sum::<f64>() / 3.0;
        assert_eq!(mean_row.value, manual);
    }

    /// Exposes the NARMA target of the given order as a feature column.
    struct TargetLeak(usize);

    impl FeatureSource for TargetLeak {
        fn features(&self, _: &SeedStreams, inputs: &[f64]) -> Result<Trajectory> {
            let ds = narma_dataset(inputs.len(), &NarmaParams::new(self.0))?;
            let rows = ds.targets.iter().zip(inputs).map(|(y, s)| vec![*y, *s]).collect();
            Ok(Trajectory { rows, coherence: Vec::new() })
        }
    }

    #[test]
    fn exact_target_feature_gives_zero_nmse() {
        let seeds = SeedStreams::list(0, 2);
        let eval = evaluate_narma(&TargetLeak(10), &seeds, 1000, &[10]).unwrap();
        assert!(eval.per_seed.iter().all(|(_, e)| e[0] < 1e-10));
        assert_eq!(eval, evaluate_narma(&TargetLeak(10), &seeds, 1000, &[10]).unwrap());
        assert!(evaluate_narma(&TargetLeak(10), &[], 1000, &[10]).is_err());
    }

    #[test]
    fn constant_predictor_nmse() {
        let ds = narma_dataset(1000, &NarmaParams::new(5)).unwrap();
        let (_, _, test) = ds.split();
        let mean = test.targets.iter().sum::<f64>() / test.targets.len() as f64;
        let got = nmse(test.targets, &vec![mean; test.targets.len()]).unwrap();
        let num: f64 = test.targets.iter().map(|y| (y - mean).powi(2)).sum();
        let den: f64 = test.targets.iter().map(|y| y * y).sum();
        assert!((got - num / den).abs() < 1e-15);
    }

    #[test]
    fn reservoir_remembers_current_input() {
        let cfg = ReservoirConfig::standard(0).unwrap();
        let seeds = SeedStreams::list(0, 2);
        let eval = evaluate_stm(&cfg, &seeds, 300).unwrap();
        assert!(eval.capacity_summary(0).mean > 0.9);
        assert!(eval.coherence_summary().unwrap().mean > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn ridge_oracle_agreement(seed in any::<u64>(), rows in 15usize..80, cols in 1usize..12) {
            let (x, y) = random_system(rows.max(cols + 2), cols, seed);
            let r = train_ridge(&x, &y, DEFAULT_RIDGE).unwrap();
            let (w, b) = ridge_oracle(&x, &y, DEFAULT_RIDGE);
            prop_assert!(rel_err(&r.weights, &w) < 1e-8);
            prop_assert!((r.bias - b).abs() < 1e-8 * b.abs().max(1.0));
        }

        #[test]
        fn determination_affine_invariance(seed in any::<u64>(), slope in 0.01f64..100.0, shift in -10.0f64..10.0) {
            let (x, y) = random_system(30, 1, seed);
            let h: Vec<f64> = x.iter().map(|r| r[0]).collect();
            let c = determination_coefficient(&y, &h).unwrap();
            let mapped: Vec<f64> = h.iter().map(|v| slope * v + shift).collect();
            prop_assert!((determination_coefficient(&y, &mapped).unwrap() - c).abs() < 1e-10);
            let mapped_y: Vec<f64> = y.iter().map(|v| slope * v + shift).collect();
            prop_assert!((determination_coefficient(&mapped_y, &h).unwrap() - c).abs() < 1e-10);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
        }

        #[test]
        fn weight_norm_shrinks_with_regularization(seed in any::<u64>(), a in 1e-6f64..1.0, factor in 1.0f64..100.0) {
            let (x, y) = random_system(40, 6, seed);
            let small = train_ridge(&x, &y, a).unwrap().weight_norm();
            let large = train_ridge(&x, &y, a * factor).unwrap().weight_norm();
            prop_assert!(large <= small * (1.0 + 1e-12));
        }

        #[test]
        fn training_beats_zero_predictor(seed in any::<u64>()) {
            let (x, mut y) = random_system(50, 6, seed);
            for v in y.iter_mut() {
                *v += 0.5;
            }
            let r = train_ridge(&x, &y, DEFAULT_RIDGE).unwrap();
            let fit = nmse(&y, &r.predict(&x)).unwrap();
            prop_assert!(fit <= nmse(&y, &vec![0.0; y.len()]).unwrap() + 1e-12);
        }
    }
}
