//! Experiment configuration files.
//!
//! A config is TOML. Scalar parameters are fixed for the whole experiment;
//! a list turns that parameter into a sweep axis. `[[points]]` tables give an
//! explicit list of parameter combinations, which counts as one axis.

use std::fmt;
use std::marker::PhantomData;
use std::path::PathBuf;

use qrc_core::channels::{measurement_sigma, sample_couplings, EnsembleSize, ObservableArity};
use qrc_core::reservoir::{FeedbackObservable, ReservoirConfig};
use qrc_core::tasks::{narma_dataset, NarmaParams, SplitSpec, TAU_MAX, WASHOUT};
use serde::de::{self, IntoDeserializer, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

pub const DEFAULT_SEEDS: usize = 20;
pub const DEFAULT_LENGTH: usize = 1000;
pub const DISTRIBUTION_LENGTH: usize = 2000;
pub const DEFAULT_TRIALS: usize = 100;
pub const MAX_AXES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Stm,
    Narma,
    Coherence,
    Distribution,
    FeedbackVerify,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Stm => "stm",
            TaskKind::Narma => "narma",
            TaskKind::Coherence => "coherence",
            TaskKind::Distribution => "distribution",
            TaskKind::FeedbackVerify => "feedback_verify",
        }
    }
}

/// A parameter given either as one value or as a list of sweep values.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis<T> {
    Fixed(T),
    Sweep(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::Fixed(v) => vec![v.clone()],
            Axis::Sweep(v) => v.clone(),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self, Axis::Sweep(_))
    }
}

impl<T: Serialize> Serialize for Axis<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Axis::Fixed(v) => v.serialize(s),
            Axis::Sweep(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Axis<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct AxisVisitor<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for AxisVisitor<T> {
            type Value = Axis<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a value or a list of values")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(v) = seq.next_element()? {
                    out.push(v);
                }
                Ok(Axis::Sweep(out))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(Axis::Fixed)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(Axis::Fixed)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(Axis::Fixed)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(Axis::Fixed)
            }
        }

        d.deserialize_any(AxisVisitor(PhantomData))
    }
}

/// Parameter overrides for one explicit sweep point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub label: Option<String>,
    pub a_fb: Option<f64>,
    pub g: Option<f64>,
    pub n_meas: Option<EnsembleSize>,
    pub gamma: Option<f64>,
    pub feedback_observable: Option<FeedbackObservable>,
}

/// Picks sweep points by parameter values; unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    pub label: Option<String>,
    pub a_fb: Option<f64>,
    pub g: Option<f64>,
    pub n_meas: Option<EnsembleSize>,
    pub gamma: Option<f64>,
    pub feedback_observable: Option<FeedbackObservable>,
}

impl Selector {
    pub fn matches(&self, p: &SweepPoint) -> bool {
        self.label.as_ref().is_none_or(|l| *l == p.label)
            && self.a_fb.is_none_or(|v| v == p.a_fb)
            && self.g.is_none_or(|v| v == p.g)
            && self.n_meas.is_none_or(|v| v == p.n_meas)
            && self.gamma.is_none_or(|v| v == p.gamma)
            && self.feedback_observable.is_none_or(|v| v == p.feedback_observable)
    }
}

/// Expected ordering of seed means between two sweep points, checked by
/// `run --check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub description: String,
    /// `capacity`, `total_capacity`, `nmse` or `coherence`.
    pub metric: String,
    /// Delay for `capacity`, order for `nmse`.
    pub index: Option<usize>,
    pub higher: Selector,
    pub lower: Selector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task: TaskKind,
    #[serde(default = "default_narma_order")]
    pub narma_order: Axis<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Steps per run; 1000, or 2000 for distribution exports.
    pub length: Option<usize>,
    #[serde(default = "default_tau_max")]
    pub tau_max: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_a_in")]
    pub a_in: f64,
    #[serde(default = "default_energy_scale")]
    pub energy_scale: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_a_fb")]
    pub a_fb: Axis<f64>,
    #[serde(default = "default_g")]
    pub g: Axis<f64>,
    #[serde(default = "default_n_meas")]
    pub n_meas: Axis<EnsembleSize>,
    #[serde(default = "default_gamma")]
    pub gamma: Axis<f64>,
    #[serde(default = "default_observable")]
    pub feedback_observable: Axis<FeedbackObservable>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub checks: Vec<Check>,
    pub output_dir: Option<PathBuf>,
}

fn default_narma_order() -> Axis<usize> {
    Axis::Fixed(5)
}
fn default_seeds() -> usize {
    DEFAULT_SEEDS
}
fn default_tau_max() -> usize {
    TAU_MAX
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_a_in() -> f64 {
    qrc_core::reservoir::DEFAULT_A_IN
}
fn default_energy_scale() -> f64 {
    qrc_core::reservoir::DEFAULT_ENERGY_SCALE
}
fn default_dt() -> f64 {
    qrc_core::reservoir::DEFAULT_DT
}
fn default_a_fb() -> Axis<f64> {
    Axis::Fixed(0.0)
}
fn default_g() -> Axis<f64> {
    Axis::Fixed(qrc_core::reservoir::DEFAULT_G)
}
fn default_n_meas() -> Axis<EnsembleSize> {
    Axis::Fixed(EnsembleSize::Infinite)
}
fn default_gamma() -> Axis<f64> {
    Axis::Fixed(0.0)
}
fn default_observable() -> Axis<FeedbackObservable> {
    Axis::Fixed(FeedbackObservable::Z)
}

/// One fully resolved parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub a_fb: f64,
    pub g: f64,
    pub n_meas: EnsembleSize,
    pub gamma: f64,
    pub feedback_observable: FeedbackObservable,
    /// Value of each sweep axis at this point, in axis order.
    pub coords: Vec<String>,
}

/// A configuration problem, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn violation(field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn length(&self) -> usize {
        self.length.unwrap_or(match self.task {
            TaskKind::Distribution => DISTRIBUTION_LENGTH,
            _ => DEFAULT_LENGTH,
        })
    }

    pub fn narma_orders(&self) -> Vec<usize> {
        self.narma_order.values()
    }

    /// Names of the sweep axes, in the order they vary in the output.
    pub fn axes(&self) -> Vec<&'static str> {
        let mut axes = Vec::new();
        if self.a_fb.is_sweep() {
            axes.push("a_fb");
        }
        if self.g.is_sweep() {
            axes.push("g");
        }
        if self.n_meas.is_sweep() {
            axes.push("n_meas");
        }
        if self.gamma.is_sweep() {
            axes.push("gamma");
        }
        if self.feedback_observable.is_sweep() {
            axes.push("feedback_observable");
        }
        if !self.points.is_empty() {
            axes.push("point");
        }
        axes
    }

    /// Cartesian product of the sweep axes. The first axis varies slowest.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let bases: Vec<PointSpec> = if self.points.is_empty() {
            vec![PointSpec::default()]
        } else {
            self.points.clone()
        };
        let mut out = Vec::new();
        for a_fb in self.a_fb.values() {
            for g in self.g.values() {
                for n_meas in self.n_meas.values() {
                    for gamma in self.gamma.values() {
                        for obs in self.feedback_observable.values() {
                            for (i, base) in bases.iter().enumerate() {
                                out.push(self.resolve(i, base, a_fb, g, n_meas, gamma, obs));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn resolve(
        &self,
        index: usize,
        base: &PointSpec,
        a_fb: f64,
        g: f64,
        n_meas: EnsembleSize,
        gamma: f64,
        obs: FeedbackObservable,
    ) -> SweepPoint {
        let mut p = SweepPoint {
            label: String::new(),
            a_fb: base.a_fb.unwrap_or(a_fb),
            g: base.g.unwrap_or(g),
            n_meas: base.n_meas.unwrap_or(n_meas),
            gamma: base.gamma.unwrap_or(gamma),
            feedback_observable: base.feedback_observable.unwrap_or(obs),
            coords: Vec::new(),
        };
        let point_label = base.label.clone().unwrap_or_else(|| format!("point{}", index + 1));
        for axis in self.axes() {
            let value = match axis {
                "a_fb" => p.a_fb.to_string(),
                "g" => p.g.to_string(),
                "n_meas" => p.n_meas.to_string(),
                "gamma" => p.gamma.to_string(),
                "feedback_observable" => p.feedback_observable.to_string(),
                _ => point_label.clone(),
            };
            p.coords.push(value);
        }
        p.label = if !self.points.is_empty() && self.axes().len() == 1 {
            point_label
        } else if self.axes().is_empty() {
            "base".to_string()
        } else {
            self.axes()
                .iter()
                .zip(&p.coords)
                .map(|(a, v)| format!("{a}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        p
    }

    /// Reservoir configuration for a sweep point, before per-seed coupling
    /// draws.
    pub fn reservoir_config(&self, p: &SweepPoint) -> Result<ReservoirConfig, CliError> {
        // Placeholder couplings; every realization redraws them from its own seed.
        let h = sample_couplings(qrc_core::reservoir::DEFAULT_QUBITS, self.energy_scale, 0)?;
        let mut cfg = ReservoirConfig::with_hamiltonian(h);
        cfg.a_in = self.a_in;
        cfg.dt = self.dt;
        cfg.a_fb = p.a_fb;
        cfg.g = p.g;
        cfg.depolarizing_rate = p.gamma;
        cfg.feedback_observable = p.feedback_observable;
        cfg.set_ensemble(p.n_meas)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every problem with the config; empty when it can run.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let axes = self.axes();
        if axes.len() > MAX_AXES {
            out.push(violation(
                "sweep",
                format!("at most {MAX_AXES} sweep axes are supported, found {}: {}", axes.len(), axes.join(", ")),
            ));
        }
        let empty = |a: bool, name: &str, out: &mut Vec<Violation>| {
            if a {
                out.push(violation(name, "sweep list is empty"));
            }
        };
        empty(matches!(&self.a_fb, Axis::Sweep(v) if v.is_empty()), "a_fb", &mut out);
        empty(matches!(&self.g, Axis::Sweep(v) if v.is_empty()), "g", &mut out);
        empty(matches!(&self.n_meas, Axis::Sweep(v) if v.is_empty()), "n_meas", &mut out);
        empty(matches!(&self.gamma, Axis::Sweep(v) if v.is_empty()), "gamma", &mut out);
        empty(
            matches!(&self.feedback_observable, Axis::Sweep(v) if v.is_empty()),
            "feedback_observable",
            &mut out,
        );
        empty(matches!(&self.narma_order, Axis::Sweep(v) if v.is_empty()), "narma_order", &mut out);

        if self.seeds == 0 {
            out.push(violation("seeds", "at least one seed is required"));
        }
        if self.tau_max != TAU_MAX {
            out.push(violation("tau_max", format!("must be {TAU_MAX}, got {}", self.tau_max)));
        }
        for (name, v) in [("a_in", self.a_in), ("dt", self.dt)] {
            if !v.is_finite() {
                out.push(violation(name, "must be finite"));
            }
        }
        if !(self.energy_scale > 0.0 && self.energy_scale.is_finite()) {
            out.push(violation("energy_scale", "must be positive and finite"));
        }

        let length = self.length();
        match self.task {
            TaskKind::Stm | TaskKind::Narma | TaskKind::Coherence => match SplitSpec::for_length(length) {
                Ok(split) if split.total() != length => out.push(violation(
                    "length",
                    format!("split {} + {} + {} does not sum to {length}", split.washout, split.train, split.test),
                )),
                Ok(_) if length <= WASHOUT + self.tau_max => out.push(violation(
                    "length",
                    format!("{length} steps leave no training data after washout and delays"),
                )),
                Ok(_) => {}
                Err(e) => out.push(violation("length", e.to_string())),
            },
            TaskKind::Distribution if length <= WASHOUT => {
                out.push(violation("length", format!("must exceed the {WASHOUT}-step washout")))
            }
            TaskKind::FeedbackVerify if self.trials == 0 => {
                out.push(violation("trials", "at least one trial is required"))
            }
            _ => {}
        }
        if self.task == TaskKind::Narma {
            for order in self.narma_orders() {
                if let Err(e) = narma_dataset(length, &NarmaParams::new(order)) {
                    out.push(violation("narma_order", e.to_string()));
                }
            }
        }

        let points = self.sweep_points();
        for p in &points {
            let at = |field: &str| {
                if points.len() > 1 {
                    format!("{field} (at {})", p.label)
                } else {
                    field.to_string()
                }
            };
            if !(0.0..=1.0).contains(&p.gamma) {
                out.push(violation(at("gamma"), format!("depolarizing rate {} outside [0, 1]", p.gamma)));
            }
            if !(p.g >= 0.0 && p.g.is_finite()) {
                out.push(violation(at("g"), format!("measurement strength {} must be finite and >= 0", p.g)));
            } else if let EnsembleSize::Finite(n) = p.n_meas {
                if n == 0 {
                    out.push(violation(at("n_meas"), "finite ensemble size must be at least 1"));
                } else if measurement_sigma(ObservableArity::Single, p.g, p.n_meas).is_err() {
                    out.push(violation(
                        at("g"),
                        format!(
                            "g = {} with finite n_meas = {n}: the measurement-noise standard deviation \
                             sqrt((g^2 + 1) / (g^2 n_meas)) diverges; use g > 0 or n_meas = \"inf\"",
                            p.g
                        ),
                    ));
                }
            }
            if !p.a_fb.is_finite() {
                out.push(violation(at("a_fb"), "must be finite"));
            }
        }

        let metrics: &[&str] = match self.task {
            TaskKind::Stm => &["capacity", "total_capacity"],
            TaskKind::Narma => &["nmse"],
            TaskKind::Coherence => &["coherence"],
            _ => &[],
        };
        for (i, c) in self.checks.iter().enumerate() {
            let field = format!("checks[{i}]");
            if !metrics.contains(&c.metric.as_str()) {
                out.push(violation(
                    &field,
                    format!("metric '{}' is not produced by task {}", c.metric, self.task.name()),
                ));
            }
            for (side, sel) in [("higher", &c.higher), ("lower", &c.lower)] {
                let n = points.iter().filter(|p| sel.matches(p)).count();
                if n != 1 {
                    out.push(violation(format!("{field}.{side}"), format!("matches {n} sweep points, expected 1")));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_are_fixed_and_lists_sweep() {
        let cfg = ExperimentConfig::parse(
            r#"
            task = "stm"
            a_fb = [0, 0.1, 0.2]
            g = [0.3, 10]
            n_meas = 1e8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.axes(), vec!["a_fb", "g"]);
        assert_eq!(cfg.n_meas, Axis::Fixed(EnsembleSize::Finite(100_000_000)));
        let points = cfg.sweep_points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[1].label, "a_fb=0,g=10");
        assert_eq!(points[5].coords, vec!["0.2", "10"]);
        assert!(cfg.violations().is_empty());
    }

    #[test]
    fn infinite_ensemble_in_mixed_list() {
        let cfg = ExperimentConfig::parse("task = \"stm\"\nn_meas = [10000, \"inf\"]\n").unwrap();
        assert_eq!(
            cfg.n_meas,
            Axis::Sweep(vec![EnsembleSize::Finite(10_000), EnsembleSize::Infinite])
        );
    }

    #[test]
    fn explicit_points_form_one_axis() {
        let cfg = ExperimentConfig::parse(
            r#"
            task = "stm"
            n_meas = [10000, "inf"]
            [[points]]
            label = "projective"
            g = 10
            a_fb = 0.6
            [[points]]
            label = "weak"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.axes(), vec!["n_meas", "point"]);
        let p = cfg.sweep_points();
        assert_eq!(p.len(), 4);
        assert_eq!((p[0].g, p[0].a_fb), (10.0, 0.6));
        assert_eq!(p[1].g, 0.3);
        assert_eq!(p[3].label, "n_meas=inf,point=weak");
    }

    #[test]
    fn reports_every_violation() {
        let cfg = ExperimentConfig::parse(
            r#"
            task = "stm"
            gamma = 1.5
            a_fb = [0, 1]
            g = [0, 1]
            n_meas = [1000000, 1]
            tau_max = 10
            "#,
        )
        .unwrap();
        let v = cfg.violations();
        let fields: Vec<&str> = v.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"sweep"));
        assert!(fields.contains(&"tau_max"));
        assert!(v.iter().any(|v| v.field.starts_with("gamma") && v.message.contains("1.5")));
        assert!(v.iter().any(|v| v.field.starts_with("g ") && v.message.contains("diverges")));
    }

    #[test]
    fn empty_sweep_is_invalid() {
        let cfg = ExperimentConfig::parse("task = \"stm\"\na_fb = []\n").unwrap();
        assert!(cfg.sweep_points().is_empty());
        assert_eq!(cfg.violations()[0].field, "a_fb");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::parse("task = \"stm\"\nafb = 0.2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("afb") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn checks_must_select_one_point() {
        let cfg = ExperimentConfig::parse(
            r#"
            task = "stm"
            a_fb = [0, 0.2]
            [[checks]]
            description = "feedback helps"
            metric = "total_capacity"
            higher = { a_fb = 0.2 }
            lower = { g = 0.3 }
            "#,
        )
        .unwrap();
        let v = cfg.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "checks[0].lower");
    }
}
