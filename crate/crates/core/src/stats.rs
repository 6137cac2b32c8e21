//! Small summary statistics over seed realizations.

use serde::{Deserialize, Serialize};

/// Mean, sample standard deviation and count of a set of realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    /// Summarizes `values` in the given order; NaN for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }

    /// Standard error of `self.mean - other.mean` for independent samples.
    pub fn standard_error_of_difference(&self, other: &Summary) -> f64 {
        (self.standard_error().powi(2) + other.standard_error().powi(2)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_arithmetic() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.count, 4);
        assert_eq!(Summary::of(&[3.0]).std, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
    }
}
