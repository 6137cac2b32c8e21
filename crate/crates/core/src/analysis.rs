//! Reservoir analyses: the l1 coherence of the evolved state, export of the
//! measurement-result distribution with a linear 2-D projection, and an exact
//! check of how a Z-rotation feedback gate mixes Pauli coefficients.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{gate_matrix, GateSpec};
use crate::error::{QrcError, Result};
use crate::learn::time_average;
use crate::qmath::{pauli_trace, DensityMatrix, Pauli, PauliString};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::seeds::SeedStreams;
use crate::stats::Summary;
use crate::tasks::{uniform_inputs, WASHOUT};

pub const DISTRIBUTION_LENGTH: usize = 2000;
pub const FEEDBACK_TRANSFORM_TOLERANCE: f64 = 1e-12;
pub const FEEDBACK_TRANSFORM_MAX_QUBITS: usize = 3;

/// Sum of absolute values of all off-diagonal entries.
pub fn coherence(rho: &DensityMatrix) -> f64 {
    let d = rho.dim();
    let data = rho.data();
    let mut total = 0.0;
    for r in 0..d {
        let row = &data[r * d..(r + 1) * d];
        for (c, v) in row.iter().enumerate() {
            if c != r {
                total += v.norm();
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTrace {
    pub a_fb: f64,
    pub g: f64,
    pub seed: u64,
    /// Coherence right after the reservoir unitary, one value per step.
    pub values: Vec<f64>,
    /// Mean over the steps after the washout.
    pub time_average: f64,
}

/// Time-averaged coherence for every `(a_fb, seed)` pair under uniform
/// random inputs. Traces are ordered by `a_fb`, then by seed.
pub fn coherence_sweep(
    base: &ReservoirConfig,
    a_fb_grid: &[f64],
    seeds: &[SeedStreams],
    steps: usize,
    discard: usize,
) -> Result<Vec<CoherenceTrace>> {
    if a_fb_grid.is_empty() || seeds.is_empty() {
        return Err(QrcError::invalid("coherence sweep needs feedback strengths and seeds"));
    }
    if steps <= discard {
        return Err(QrcError::invalid(format!(
            "{steps} steps leave nothing after discarding {discard}"
        )));
    }
    let jobs: Vec<(f64, SeedStreams)> = a_fb_grid
        .iter()
        .flat_map(|&a| seeds.iter().map(move |s| (a, *s)))
        .collect();
    jobs.par_iter()
        .map(|&(a_fb, s)| {
            let mut cfg = base.for_realization(&s)?;
            cfg.a_fb = a_fb;
            let records = Reservoir::new(cfg)?.run(&uniform_inputs(steps, s.input))?;
            let values: Vec<f64> = records.iter().map(|r| r.coherence).collect();
            let time_average = time_average(&values, discard).expect("steps exceed discard");
            Ok(CoherenceTrace {
                a_fb,
                g: base.g,
                seed: s.index,
                values,
                time_average,
            })
        })
        .collect()
}

/// Mean and spread of the time averages for each feedback strength, in
/// order of first appearance.
pub fn summarize_coherence(traces: &[CoherenceTrace]) -> Vec<(f64, Summary)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for t in traces {
        match out.iter_mut().find(|(a, _)| *a == t.a_fb) {
            Some((_, v)) => v.push(t.time_average),
            None => out.push((t.a_fb, vec![t.time_average])),
        }
    }
    out.into_iter().map(|(a, v)| (a, Summary::of(&v))).collect()
}

/// Principal-axis projection of readout rows onto two components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Each component min-max scaled to `[0, 1]`.
    pub points: Vec<[f64; 2]>,
    /// Share of total variance along the two axes.
    pub captured_variance: f64,
    /// `(Σλ)² / Σλ²` of the covariance spectrum.
    pub participation_ratio: f64,
}

/// Projects mean-centered rows onto the top two covariance eigenvectors.
/// Returns `None` when the rows have no variance at all.
pub fn project_2d(rows: &[Vec<f64>]) -> Result<Option<Projection>> {
    let n = rows.len();
    let Some(p) = rows.first().map(Vec::len) else {
        return Err(QrcError::invalid("projection needs at least one row"));
    };
    if rows.iter().any(|r| r.len() != p) {
        return Err(QrcError::DimensionMismatch("rows have different lengths".into()));
    }
    if n < 2 || p == 0 {
        return Ok(None);
    }
    let means: Vec<f64> = (0..p)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, p, |i, j| rows[i][j] - means[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();
    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if total <= 1e-24 * scale * scale {
        return Ok(None);
    }
    let top = spectrum.iter().take(2).sum::<f64>();
    let participation_ratio = total * total / spectrum.iter().map(|l| l * l).sum::<f64>();
    let mut points = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let v = eigen.eigenvectors.column(k);
        let coords: Vec<f64> = (0..n).map(|i| centered.row(i).dot(&v.transpose())).collect();
        let lo = coords.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (pt, c) in points.iter_mut().zip(&coords) {
            pt[axis] = if range > 0.0 { (c - lo) / range } else { 0.0 };
        }
    }
    Ok(Some(Projection {
        points,
        captured_variance: top / total,
        participation_ratio,
    }))
}

/// Post-washout readout rows of one run and their 2-D projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionExport {
    pub rows: Vec<Vec<f64>>,
    /// `None` when the readout never varies.
    pub projection: Option<Projection>,
}

impl DistributionExport {
    pub fn is_degenerate(&self) -> bool {
        self.projection.is_none()
    }

    /// Header `x_1,z_1,…,x_N,z_N` plus `p1,p2` when a projection exists.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let csv_err = |e: csv::Error| QrcError::invalid(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let width = self.rows.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..width / 2)
            .flat_map(|q| [format!("x_{}", q + 1), format!("z_{}", q + 1)])
            .collect();
        if self.projection.is_some() {
            header.extend(["p1".to_string(), "p2".to_string()]);
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(p) = &self.projection {
                fields.extend(p.points[i].iter().map(|v| v.to_string()));
            }
            w.write_record(&fields).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| QrcError::invalid(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Runs one realization on `length` uniform inputs and keeps the readout
/// after `discard` steps.
pub fn export_distribution(
    cfg: &ReservoirConfig,
    seeds: &SeedStreams,
    length: usize,
    discard: usize,
) -> Result<DistributionExport> {
    if length <= discard {
        return Err(QrcError::invalid(format!(
            "{length} steps leave nothing after discarding {discard}"
        )));
    }
    let reservoir = Reservoir::new(cfg.for_realization(seeds)?)?;
    let records = reservoir.run(&uniform_inputs(length, seeds.input))?;
    let rows: Vec<Vec<f64>> = records.into_iter().skip(discard).map(|r| r.readout).collect();
    let projection = project_2d(&rows)?;
    Ok(DistributionExport { rows, projection })
}

/// Default distribution export: 2000 steps with the washout discarded.
pub fn export_distribution_default(cfg: &ReservoirConfig, seeds: &SeedStreams) -> Result<DistributionExport> {
    export_distribution(cfg, seeds, DISTRIBUTION_LENGTH, WASHOUT)
}

/// A Pauli string and its X↔Y partner at the feedback qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackTransformCase {
    pub target: PauliString,
    pub partner: PauliString,
    pub feedback_qubit: usize,
    pub angle: f64,
}

impl FeedbackTransformCase {
    pub fn new(target: PauliString, feedback_qubit: usize, angle: f64) -> Result<Self> {
        if feedback_qubit >= target.n_qubits() {
            return Err(QrcError::invalid(format!(
                "feedback qubit {feedback_qubit} out of range"
            )));
        }
        let swapped = match target.letter(feedback_qubit) {
            Pauli::X => Pauli::Y,
            Pauli::Y => Pauli::X,
            other => other,
        };
        let partner = target.with_letter(feedback_qubit, swapped);
        Ok(Self {
            target,
            partner,
            feedback_qubit,
            angle,
        })
    }
}

/// Coefficient of the target string after `RZ(θ)` on the feedback qubit,
/// given the target and partner coefficients before it.
pub fn feedback_transform_predict(case: &FeedbackTransformCase, a_target: f64, a_partner: f64) -> f64 {
    let (s, c) = case.angle.sin_cos();
    match case.target.letter(case.feedback_qubit) {
        Pauli::X => a_target * c - a_partner * s,
        Pauli::Y => a_target * c + a_partner * s,
        Pauli::Z | Pauli::I => a_target,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackTransformReport {
    pub n_qubits: usize,
    pub trials: usize,
    pub strings_checked: usize,
    pub max_deviation: f64,
}

/// Compares every Pauli coefficient of `RZ_j(θ) ρ RZ_j(θ)†` with the
/// prediction for random states, feedback qubits and angles.
pub fn feedback_transform_verify(n_qubits: usize, trials: usize, seed: u64) -> Result<FeedbackTransformReport> {
    if n_qubits == 0 || n_qubits > FEEDBACK_TRANSFORM_MAX_QUBITS {
        return Err(QrcError::SizeLimit {
            what: "feedback transform verification",
            max: FEEDBACK_TRANSFORM_MAX_QUBITS,
            got: n_qubits,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strings: Vec<PauliString> = PauliString::all(n_qubits).collect();
    let mut max_deviation = 0.0f64;
    for _ in 0..trials {
        let rho = DensityMatrix::random(n_qubits, &mut rng);
        let j = rng.random_range(0..n_qubits);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        max_deviation = max_deviation.max(transform_deviation(&rho, j, theta, &strings)?);
    }
    if max_deviation > FEEDBACK_TRANSFORM_TOLERANCE {
        return Err(QrcError::Verification {
            max_deviation,
            tolerance: FEEDBACK_TRANSFORM_TOLERANCE,
        });
    }
    Ok(FeedbackTransformReport {
        n_qubits,
        trials,
        strings_checked: trials * strings.len(),
        max_deviation,
    })
}

fn transform_deviation(rho: &DensityMatrix, j: usize, theta: f64, strings: &[PauliString]) -> Result<f64> {
    let n = rho.n_qubits();
    let u = gate_matrix(&GateSpec::rz(j, theta), n)?;
    let evolved = rho.conjugate(&u)?;
    let mut worst = 0.0f64;
    for p in strings {
        let case = FeedbackTransformCase::new(p.clone(), j, theta)?;
        let a_target = pauli_trace(rho, &case.target)?.re;
        let a_partner = pauli_trace(rho, &case.partner)?.re;
        let b = pauli_trace(&evolved, p)?.re;
        worst = worst.max((b - feedback_transform_predict(&case, a_target, a_partner)).abs());
    }
    Ok(worst)
}
