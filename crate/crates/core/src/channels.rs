//! Gates, the Ising reservoir unitary, weak measurements, finite-ensemble
//! measurement noise and the depolarizing channel.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::qmath::{
    herm_expm, kron, pauli_trace, qubit_mask, ComplexMatrix, DensityMatrix, PauliString, C64, ONE,
    ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Rz,
    Hadamard,
    Cnot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<f64>,
}

impl GateSpec {
    pub fn rx(target: usize, angle: f64) -> Self {
        Self {
            kind: GateKind::Rx,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn rz(target: usize, angle: f64) -> Self {
        Self {
            kind: GateKind::Rz,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn hadamard(target: usize) -> Self {
        Self {
            kind: GateKind::Hadamard,
            target,
            control: None,
            angle: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(QrcError::invalid(format!(
                "target qubit {} out of range for {n_qubits} qubits",
                self.target
            )));
        }
        match self.kind {
            GateKind::Rx | GateKind::Rz => {
                if self.angle.is_none() {
                    return Err(QrcError::invalid("rotation gate needs an angle"));
                }
            }
            GateKind::Cnot => match self.control {
                None => return Err(QrcError::invalid("CNOT needs a control qubit")),
                Some(c) if c >= n_qubits => {
                    return Err(QrcError::invalid(format!(
                        "control qubit {c} out of range for {n_qubits} qubits"
                    )))
                }
                Some(c) if c == self.target => {
                    return Err(QrcError::invalid("CNOT control equals target"))
                }
                Some(_) => {}
            },
            GateKind::Hadamard => {}
        }
        Ok(())
    }
}

/// `RX(θ) = exp(-iθX/2)`.
pub fn rx_local(theta: f64) -> [[C64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
}

/// `RZ(θ) = exp(-iθZ/2)`.
pub fn rz_local(theta: f64) -> [[C64; 2]; 2] {
    [
        [C64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, C64::from_polar(1.0, theta / 2.0)],
    ]
}

pub fn hadamard_local() -> [[C64; 2]; 2] {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn local_to_matrix(g: &[[C64; 2]; 2]) -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![g[0][0], g[0][1], g[1][0], g[1][1]]).expect("2x2")
}

/// Full `2^N`-dimensional embedding of a gate.
pub fn gate_matrix(spec: &GateSpec, n_qubits: usize) -> Result<ComplexMatrix> {
    spec.validate(n_qubits)?;
    let dim = 1usize << n_qubits;
    if spec.kind == GateKind::Cnot {
        let cm = qubit_mask(n_qubits, spec.control.expect("validated"));
        let tm = qubit_mask(n_qubits, spec.target);
        let mut m = ComplexMatrix::zeros(dim, dim);
        for col in 0..dim {
            let row = if col & cm != 0 { col ^ tm } else { col };
            m[(row, col)] = ONE;
        }
        return Ok(m);
    }
    let local = match spec.kind {
        GateKind::Rx => rx_local(spec.angle.expect("validated")),
        GateKind::Rz => rz_local(spec.angle.expect("validated")),
        GateKind::Hadamard => hadamard_local(),
        GateKind::Cnot => unreachable!(),
    };
    let local = local_to_matrix(&local);
    let mut m = ComplexMatrix::identity(1);
    for q in 0..n_qubits {
        let factor = if q == spec.target {
            local.clone()
        } else {
            ComplexMatrix::identity(2)
        };
        m = kron(&m, &factor);
    }
    Ok(m)
}

/// Two-qubit coupling gate `CX·RZ_lo(θ)·CX·RX_hi(θ)·RX_lo(θ)` as a 4×4 matrix
/// in the local basis `|b_hi b_lo⟩`; the CNOT is controlled by `hi`.
pub fn coupling_gate_local(theta: f64) -> [[C64; 4]; 4] {
    let i2 = ComplexMatrix::identity(2);
    let rx = local_to_matrix(&rx_local(theta));
    let rz = local_to_matrix(&rz_local(theta));
    let cx = ComplexMatrix::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[0.0, 0.0, 1.0, 0.0],
    ])
    .expect("4x4");
    let m = [
        cx.clone(),
        kron(&i2, &rz),
        cx,
        kron(&rx, &i2),
        kron(&i2, &rx),
    ]
    .iter()
    .try_fold(ComplexMatrix::identity(4), |acc, f| acc.matmul(f))
    .expect("4x4 chain");
    let mut out = [[ZERO; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

/// Dense `R_{i,j}(θ) = CX_{i,j} RZ_j(θ) CX_{i,j} RX_i(θ) RX_j(θ)` on `n_qubits`.
pub fn coupling_gate(i: usize, j: usize, theta: f64, n_qubits: usize) -> Result<ComplexMatrix> {
    if i == j {
        return Err(QrcError::invalid("coupling gate needs two distinct qubits"));
    }
    let factors = [
        GateSpec::cnot(i, j),
        GateSpec::rz(j, theta),
        GateSpec::cnot(i, j),
        GateSpec::rx(i, theta),
        GateSpec::rx(j, theta),
    ];
    let mut u = ComplexMatrix::identity(1 << n_qubits);
    for spec in &factors {
        u = u.matmul(&gate_matrix(spec, n_qubits)?)?;
    }
    Ok(u)
}

/// `ρ ← R_{i,j}(θ) ρ R_{i,j}(θ)†` without building the dense operator.
pub fn apply_coupling_gate(rho: &mut DensityMatrix, i: usize, j: usize, theta: f64) -> Result<()> {
    let n = rho.n_qubits();
    if i == j || i >= n || j >= n {
        return Err(QrcError::invalid(format!(
            "coupling gate on ({i}, {j}) invalid for {n} qubits"
        )));
    }
    rho.apply_two_qubit(i, j, &coupling_gate_local(theta));
    Ok(())
}

/// Fully connected transverse-field Ising model `Σ_{i<j} J_ij X_i X_j + h Σ Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingHamiltonian {
    n_qubits: usize,
    /// Row-major `n × n`, symmetric with zero diagonal.
    couplings: Vec<f64>,
    field: f64,
    energy_scale: f64,
}

impl IsingHamiltonian {
    pub fn new(n_qubits: usize, couplings: Vec<f64>, field: f64, energy_scale: f64) -> Result<Self> {
        if !(energy_scale > 0.0) {
            return Err(QrcError::invalid("energy scale J_s must be positive"));
        }
        if couplings.len() != n_qubits * n_qubits {
            return Err(QrcError::DimensionMismatch(format!(
                "{n_qubits} qubits need {} couplings, got {}",
                n_qubits * n_qubits,
                couplings.len()
            )));
        }
        if !field.is_finite() {
            return Err(QrcError::invalid("field must be finite"));
        }
        let bound = energy_scale / 2.0;
        for i in 0..n_qubits {
            if couplings[i * n_qubits + i] != 0.0 {
                return Err(QrcError::invalid("coupling matrix needs a zero diagonal"));
            }
            for j in i + 1..n_qubits {
                let a = couplings[i * n_qubits + j];
                if a != couplings[j * n_qubits + i] {
                    return Err(QrcError::invalid("coupling matrix must be symmetric"));
                }
                if !(a.abs() <= bound) {
                    return Err(QrcError::invalid(format!(
                        "|J_{i}{j}| = {} exceeds J_s/2 = {bound}",
                        a.abs()
                    )));
                }
            }
        }
        Ok(Self {
            n_qubits,
            couplings,
            field,
            energy_scale,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n_qubits + j]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn energy_scale(&self) -> f64 {
        self.energy_scale
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let n = self.n_qubits;
        let dim = 1usize << n;
        let mut h = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            let z_sum: f64 = (0..n)
                .map(|q| if r & qubit_mask(n, q) == 0 { 1.0 } else { -1.0 })
                .sum();
            h[(r, r)] = C64::new(self.field * z_sum, 0.0);
            for i in 0..n {
                for j in i + 1..n {
                    let jij = self.coupling(i, j);
                    if jij != 0.0 {
                        let flipped = r ^ qubit_mask(n, i) ^ qubit_mask(n, j);
                        h[(flipped, r)] += C64::new(jij, 0.0);
                    }
                }
            }
        }
        h
    }
}

/// Ratio of the transverse field to `J_s` used for sampled reservoirs.
pub const FIELD_OVER_ENERGY_SCALE: f64 = 5.0;

/// Random couplings i.i.d. uniform on `[-J_s/2, J_s/2]` and `h = 5 J_s`.
pub fn sample_couplings(n_qubits: usize, j_s: f64, seed: u64) -> Result<IsingHamiltonian> {
    if !(j_s > 0.0) || !j_s.is_finite() {
        return Err(QrcError::invalid("energy scale J_s must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut couplings = vec![0.0; n_qubits * n_qubits];
    let half = j_s / 2.0;
    for i in 0..n_qubits {
        for j in i + 1..n_qubits {
            let v = rng.random_range(-half..=half);
            couplings[i * n_qubits + j] = v;
            couplings[j * n_qubits + i] = v;
        }
    }
    IsingHamiltonian::new(n_qubits, couplings, FIELD_OVER_ENERGY_SCALE * j_s, j_s)
}

/// `U_res = exp(-iHΔt)`.
pub fn build_reservoir_unitary(h: &IsingHamiltonian, dt: f64) -> Result<ComplexMatrix> {
    herm_expm(&h.matrix(), -dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementBasis {
    Z,
    X,
}

/// Weak measurement of every qubit in one basis: off-diagonal entries (in
/// that basis) are attenuated by `e^{-g²/2}` per differing qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakMeasurementChannel {
    pub strength: f64,
    pub basis: MeasurementBasis,
}

impl WeakMeasurementChannel {
    pub fn new(strength: f64, basis: MeasurementBasis) -> Result<Self> {
        if !(strength >= 0.0) || !strength.is_finite() {
            return Err(QrcError::invalid(format!(
                "measurement strength must be finite and non-negative, got {strength}"
            )));
        }
        Ok(Self { strength, basis })
    }

    pub fn attenuation(&self) -> f64 {
        (-self.strength * self.strength / 2.0).exp()
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let mut out = rho.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, rho: &mut DensityMatrix) {
        let att = self.attenuation();
        if att == 1.0 {
            return;
        }
        let n = rho.n_qubits();
        let d = rho.dim();
        match self.basis {
            MeasurementBasis::Z => {
                // M = M̃^{⊗N}: entry (r, c) picks up att^{popcount(r ^ c)}.
                let powers: Vec<f64> = (0..=n as i32).map(|k| att.powi(k)).collect();
                let data = rho.data_mut();
                for r in 0..d {
                    for (c, v) in data[r * d..(r + 1) * d].iter_mut().enumerate() {
                        let k = (r ^ c).count_ones() as usize;
                        if k > 0 {
                            *v *= powers[k];
                        }
                    }
                }
            }
            MeasurementBasis::X => {
                // Per qubit, H M̃ H acts as ρ → p ρ + (1 - p) X_q ρ X_q.
                let keep = (1.0 + att) / 2.0;
                let swap = 1.0 - keep;
                let data = rho.data_mut();
                for q in 0..n {
                    let m = qubit_mask(n, q);
                    for r in (0..d).filter(|r| r & m == 0) {
                        for c in 0..d {
                            let a = r * d + c;
                            let b = (r | m) * d + (c ^ m);
                            let (va, vb) = (data[a], data[b]);
                            data[a] = va * keep + vb * swap;
                            data[b] = vb * keep + va * swap;
                        }
                    }
                }
            }
        }
    }
}

pub fn apply_weak_measurement(rho: &DensityMatrix, ch: &WeakMeasurementChannel) -> DensityMatrix {
    ch.apply(rho)
}

/// `Tr[P ρ]`; the imaginary rounding residue is discarded.
pub fn expectation(rho: &DensityMatrix, obs: &PauliString) -> Result<f64> {
    Ok(pauli_trace(rho, obs)?.re)
}

/// `⟨Z_q⟩` (or `⟨X_q⟩`) for every qubit, in qubit order.
pub fn single_qubit_expectations(rho: &DensityMatrix, basis: MeasurementBasis) -> Vec<f64> {
    let n = rho.n_qubits();
    let d = rho.dim();
    let data = rho.data();
    (0..n)
        .map(|q| {
            let m = qubit_mask(n, q);
            match basis {
                MeasurementBasis::Z => (0..d)
                    .map(|r| {
                        let p = data[r * d + r].re;
                        if r & m == 0 {
                            p
                        } else {
                            -p
                        }
                    })
                    .sum(),
                MeasurementBasis::X => (0..d).map(|r| data[r * d + (r ^ m)].re).sum(),
            }
        })
        .collect()
}

/// Number of ensemble members averaged per expectation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleSize {
    Finite(u64),
    Infinite,
}

impl EnsembleSize {
    pub fn is_infinite(&self) -> bool {
        matches!(self, EnsembleSize::Infinite)
    }
}

impl fmt::Display for EnsembleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleSize::Finite(n) => write!(f, "{n}"),
            EnsembleSize::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for EnsembleSize {
    type Err = QrcError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(EnsembleSize::Infinite);
        }
        if let Ok(n) = t.parse::<u64>() {
            return Ok(EnsembleSize::Finite(n));
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_infinite() && v > 0.0 => Ok(EnsembleSize::Infinite),
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => {
                Ok(EnsembleSize::Finite(v as u64))
            }
            _ => Err(QrcError::invalid(format!("'{s}' is not an ensemble size"))),
        }
    }
}

impl Serialize for EnsembleSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EnsembleSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(n) => return Ok(EnsembleSize::Finite(n)),
            Raw::Float(v) => v.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableArity {
    Single,
    Pair,
}

/// Worst-case standard deviation of an expectation value estimated from
/// `n_meas` weak measurements of strength `g`.
pub fn measurement_sigma(arity: ObservableArity, g: f64, n_meas: EnsembleSize) -> Result<f64> {
    let n = match n_meas {
        EnsembleSize::Infinite => return Ok(0.0),
        EnsembleSize::Finite(0) => {
            return Err(QrcError::invalid("finite ensemble size must be at least 1"))
        }
        EnsembleSize::Finite(n) => n as f64,
    };
    if !(g > 0.0) || !g.is_finite() {
        return Err(QrcError::invalid(format!(
            "measurement noise diverges for strength g = {g} with a finite ensemble"
        )));
    }
    let g2 = g * g;
    let variance = match arity {
        ObservableArity::Single => (g2 + 1.0) / (g2 * n),
        ObservableArity::Pair => (g2 * g2 + 2.0 * g2 + 1.0) / (g2 * g2 * n),
    };
    Ok(variance.sqrt())
}

/// Gaussian shot noise on expectation values.
///
/// Draw number `k` comes from ChaCha8 seeded with `seed` on stream `k`, so any
/// draw can be regenerated from `(seed, k)` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoiseModel {
    pub n_meas: EnsembleSize,
    pub strength: f64,
    pub seed: u64,
    counter: u64,
}

impl MeasurementNoiseModel {
    pub fn new(n_meas: EnsembleSize, strength: f64, seed: u64) -> Result<Self> {
        measurement_sigma(ObservableArity::Single, strength, n_meas)?;
        Ok(Self {
            n_meas,
            strength,
            seed,
            counter: 0,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            n_meas: EnsembleSize::Infinite,
            strength: 0.0,
            seed: 0,
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.counter = 0;
        self
    }

    pub fn sigma(&self, arity: ObservableArity) -> f64 {
        measurement_sigma(arity, self.strength, self.n_meas).expect("validated at construction")
    }

    /// Standard normal draw number `counter`.
    pub fn standard_normal_at(&self, counter: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(counter);
        rng.sample(StandardNormal)
    }

    pub fn noisy_expectation(&mut self, ideal: f64, arity: ObservableArity) -> f64 {
        if self.n_meas.is_infinite() {
            return ideal;
        }
        let z = self.standard_normal_at(self.counter);
        self.counter += 1;
        ideal + self.sigma(arity) * z
    }
}

pub fn noisy_expectation(ideal: f64, model: &mut MeasurementNoiseModel, arity: ObservableArity) -> f64 {
    model.noisy_expectation(ideal, arity)
}

/// `ε(ρ) = (1-γ)ρ + γ I/2^N`.
pub fn apply_depolarizing(rho: &DensityMatrix, rate: f64) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    depolarize_in_place(&mut out, rate)?;
    Ok(out)
}

pub fn depolarize_in_place(rho: &mut DensityMatrix, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(QrcError::invalid(format!(
            "depolarizing rate must lie in [0, 1], got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(());
    }
    let d = rho.dim();
    let mixed = rate / d as f64;
    let keep = 1.0 - rate;
    let data = rho.data_mut();
    for r in 0..d {
        for c in 0..d {
            let v = &mut data[r * d + c];
            *v *= keep;
            if r == c {
                *v += mixed;
            }
        }
    }
    Ok(())
}
