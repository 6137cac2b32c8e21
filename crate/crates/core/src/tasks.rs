//! Benchmark datasets: short-term memory (delayed recall of random inputs)
//! and NARMA recurrences driven by a superposition of sine waves.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};

pub const DEFAULT_LENGTH: usize = 1000;
pub const WASHOUT: usize = 20;
/// Largest delay used for the memory-capacity sum.
pub const TAU_MAX: usize = 20;
pub const NARMA_ORDERS: [usize; 4] = [5, 10, 15, 20];
/// Maps the `[0, 0.2]` NARMA input onto `[0, 1]` for injection.
pub const NARMA_INPUT_RESCALE: f64 = 5.0;
/// Any NARMA target at or beyond this magnitude counts as divergence.
pub const NARMA_DIVERGENCE: f64 = 10.0;

const SINE_FREQUENCIES: [f64; 3] = [2.11, 3.73, 4.11];
const SINE_PERIOD: f64 = 100.0;

/// Washout, training and test lengths of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub washout: usize,
    pub train: usize,
    pub test: usize,
}

impl SplitSpec {
    /// 20 washout steps, then three quarters of the rest for training.
    /// A 1000-step sequence gives (20, 735, 245).
    pub fn for_length(length: usize) -> Result<Self> {
        if length < WASHOUT + 4 {
            return Err(QrcError::invalid(format!(
                "sequence of length {length} too short for washout and split"
            )));
        }
        let scored = length - WASHOUT;
        let train = scored * 3 / 4;
        Ok(Self {
            washout: WASHOUT,
            train,
            test: scored - train,
        })
    }

    pub fn total(&self) -> usize {
        self.washout + self.train + self.test
    }

    /// Zero-based index ranges of the three phases.
    pub fn ranges(&self) -> (Range<usize>, Range<usize>, Range<usize>) {
        let a = self.washout;
        let b = a + self.train;
        (0..a, a..b, b..b + self.test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarmaParams {
    pub order: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl NarmaParams {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            alpha: 0.3,
            beta: 0.05,
            gamma: 1.5,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    /// Inputs as used by the target definition.
    pub inputs_raw: Vec<f64>,
    /// Inputs as injected into the reservoir, in `[0, 1]`.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub split: SplitSpec,
}

/// Borrowed phase of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub range: Range<usize>,
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn split(&self) -> (DatasetView<'_>, DatasetView<'_>, DatasetView<'_>) {
        let (w, tr, te) = self.split.ranges();
        let view = |r: Range<usize>| DatasetView {
            inputs: &self.inputs[r.clone()],
            targets: &self.targets[r.clone()],
            range: r,
        };
        (view(w), view(tr), view(te))
    }

    /// Writes `k,input_raw,input_scaled,target,split_label` rows with a
    /// one-based `k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| QrcError::invalid(format!("csv write failed: {e}"));
        w.write_record(["k", "input_raw", "input_scaled", "target", "split_label"])
            .map_err(csv_err)?;
        let (_, train, _) = self.split.ranges();
        for i in 0..self.len() {
            let label = if i < train.start {
                "washout"
            } else if i < train.end {
                "train"
            } else {
                "test"
            };
            w.write_record([
                (i + 1).to_string(),
                self.inputs_raw[i].to_string(),
                self.inputs[i].to_string(),
                self.targets[i].to_string(),
                label.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| QrcError::invalid(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// I.i.d. uniform inputs on `[0, 1]`.
pub fn uniform_inputs(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length).map(|_| rng.random::<f64>()).collect()
}

/// `y_k = s_{k-τ}` with zero pre-history.
pub fn delayed_targets(inputs: &[f64], delay: usize) -> Vec<f64> {
    (0..inputs.len())
        .map(|i| if i >= delay { inputs[i - delay] } else { 0.0 })
        .collect()
}

pub fn stm_dataset(length: usize, delay: usize, seed: u64) -> Result<TaskDataset> {
    if delay > TAU_MAX {
        return Err(QrcError::invalid(format!(
            "delay {delay} exceeds the maximum of {TAU_MAX}"
        )));
    }
    if length <= WASHOUT + delay {
        return Err(QrcError::invalid(format!(
            "length {length} must exceed washout plus delay"
        )));
    }
    let split = SplitSpec::for_length(length)?;
    let inputs = uniform_inputs(length, seed);
    Ok(TaskDataset {
        targets: delayed_targets(&inputs, delay),
        inputs_raw: inputs.clone(),
        inputs,
        split,
    })
}

/// `0.1·[sin(2π·2.11k/T)·sin(2π·3.73k/T)·sin(2π·4.11k/T) + 1]` for
/// `k = 1..=length`, `T = 100`.
pub fn narma_input(length: usize) -> Vec<f64> {
    (1..=length)
        .map(|k| {
            let product: f64 = SINE_FREQUENCIES
                .iter()
                .map(|f| (2.0 * std::f64::consts::PI * f * k as f64 / SINE_PERIOD).sin())
                .product();
            0.1 * (product + 1.0)
        })
        .collect()
}

/// NARMA targets for raw inputs `s`, with zero history before the first step.
pub fn narma_targets(s: &[f64], params: &NarmaParams) -> Vec<f64> {
    let n = params.order;
    let mut y = vec![0.0; s.len()];
    let at = |v: &[f64], i: isize| if i >= 0 { v[i as usize] } else { 0.0 };
    for k in 0..s.len() {
        let ki = k as isize;
        let prev = at(&y, ki - 1);
        let window: f64 = (1..=n as isize).map(|j| at(&y, ki - j)).sum();
        y[k] = params.alpha * prev
            + params.beta * prev * window
            + params.gamma * at(s, ki - n as isize) * at(s, ki - 1)
            + params.delta;
    }
    y
}

pub fn narma_dataset(length: usize, params: &NarmaParams) -> Result<TaskDataset> {
    if params.order == 0 {
        return Err(QrcError::invalid("NARMA order must be positive"));
    }
    if length <= params.order + WASHOUT {
        return Err(QrcError::invalid(format!(
            "length {length} must exceed NARMA order plus washout"
        )));
    }
    let split = SplitSpec::for_length(length)?;
    let raw = narma_input(length);
    let targets = narma_targets(&raw, params);
    if let Some((k, y)) = targets
        .iter()
        .enumerate()
        .find(|(_, y)| !y.is_finite() || y.abs() >= NARMA_DIVERGENCE)
    {
        return Err(QrcError::TaskGeneration(format!(
            "NARMA{} diverged at step {}: |y| = {}",
            params.order,
            k + 1,
            y.abs()
        )));
    }
    Ok(TaskDataset {
        inputs: raw.iter().map(|s| s * NARMA_INPUT_RESCALE).collect(),
        inputs_raw: raw,
        targets,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct transcription with one-based arrays padded by `n` zeros.
    fn narma_oracle(s: &[f64], n: usize) -> Vec<f64> {
        let (a, b, c, d) = (0.3, 0.05, 1.5, 0.1);
        let mut sp = vec![0.0; n];
        sp.extend_from_slice(s);
        let mut yp = vec![0.0; n + s.len()];
        for t in n..n + s.len() {
            let mut sum = 0.0;
            for j in 1..=n {
                sum += yp[t - j];
            }
            yp[t] = a * yp[t - 1] + b * yp[t - 1] * sum + c * sp[t - n] * sp[t - 1] + d;
        }
        yp[n..].to_vec()
    }

    #[test]
    fn split_sizes() {
        let s = SplitSpec::for_length(1000).unwrap();
        assert_eq!((s.washout, s.train, s.test), (20, 735, 245));
        let (w, tr, te) = s.ranges();
        assert_eq!((w, tr, te), (0..20, 20..755, 755..1000));
        assert!(SplitSpec::for_length(10).is_err());
    }

    #[test]
    fn split_views_reconstruct_dataset() {
        let ds = stm_dataset(1000, 2, 1).unwrap();
        let (w, tr, te) = ds.split();
        let joined: Vec<f64> = [w.inputs, tr.inputs, te.inputs].concat();
        assert_eq!(joined, ds.inputs);
        let joined: Vec<f64> = [w.targets, tr.targets, te.targets].concat();
        assert_eq!(joined, ds.targets);
    }

    #[test]
    fn stm_targets() {
        let ds = stm_dataset(1000, 0, 3).unwrap();
        assert_eq!(ds.targets, ds.inputs);
        let ds = stm_dataset(1000, 3, 3).unwrap();
        // One-based y_10 = s_7.
        assert_eq!(ds.targets[9], ds.inputs[6]);
        assert_eq!(&ds.targets[..3], &[0.0; 3]);
        for k in WASHOUT..1000 {
            assert_eq!(ds.targets[k], ds.inputs[k - 3]);
        }
        assert!(ds.inputs.iter().all(|s| (0.0..1.0).contains(s)));
        assert_eq!(ds, stm_dataset(1000, 3, 3).unwrap());
        assert_ne!(ds.inputs, stm_dataset(1000, 3, 4).unwrap().inputs);
        assert!(stm_dataset(1000, 21, 3).is_err());
        assert!(stm_dataset(25, 10, 3).is_err());
    }

    #[test]
    fn narma_input_properties() {
        let s = narma_input(1000);
        assert!(s.iter().all(|v| (0.0..=0.2).contains(v)));
        // At k = T each argument reduces to 2π·f, and none of the
        // frequencies is an integer, so s_T is not the midpoint 0.1.
        let tau = 2.0 * std::f64::consts::PI;
        let at_period = 0.1 * ((tau * 2.11).sin() * (tau * 3.73).sin() * (tau * 4.11).sin() + 1.0);
        assert!((s[99] - at_period).abs() < 1e-15);
        assert!((s[99] - 0.1).abs() > 1e-3);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        assert!(var > 1e-4);
        assert_eq!(s, narma_input(1000));
    }

    #[test]
    fn narma_first_target_is_delta() {
        let ds = narma_dataset(1000, &NarmaParams::new(10)).unwrap();
        assert_eq!(ds.targets[0], 0.1);
    }

    #[test]
    fn narma_matches_oracle_bitwise_and_stays_bounded() {
        let s = narma_input(1000);
        for n in NARMA_ORDERS {
            let ds = narma_dataset(1000, &NarmaParams::new(n)).unwrap();
            let oracle = narma_oracle(&s, n);
            assert_eq!(ds.targets, oracle);
            assert!(ds.targets.iter().all(|y| y.abs() < 1.0));
            for (a, b) in ds.inputs.iter().zip(&ds.inputs_raw) {
                assert_eq!(*a, b * 5.0);
            }
        }
    }

    #[test]
    fn narma_divergence_is_reported() {
        let mut p = NarmaParams::new(10);
        p.beta = 5.0;
        p.alpha = 1.5;
        assert!(matches!(
            narma_dataset(1000, &p),
            Err(QrcError::TaskGeneration(_))
        ));
    }

    #[test]
    fn csv_export() {
        let ds = stm_dataset(30, 1, 5).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,input_raw,input_scaled,target,split_label");
        assert_eq!(lines.len(), 31);
        assert!(lines[1].starts_with("1,") && lines[1].ends_with(",washout"));
        assert!(lines[21].ends_with(",train"));
        assert!(lines[30].ends_with(",test"));
    }
}
