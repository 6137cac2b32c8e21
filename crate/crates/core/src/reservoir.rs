//! The per-step reservoir protocol: reset the input qubits, encode the input,
//! feed back the previous measurement results, evolve under the Ising
//! unitary, apply depolarizing noise, then weakly measure every qubit in the
//! X and Z bases.

use serde::{Deserialize, Serialize};

use crate::analysis::coherence;
use crate::channels::{
    apply_coupling_gate, coupling_gate_local, build_reservoir_unitary, depolarize_in_place, sample_couplings,
    single_qubit_expectations, EnsembleSize, IsingHamiltonian, MeasurementBasis,
    MeasurementNoiseModel, ObservableArity, WeakMeasurementChannel,
};
use crate::error::{QrcError, Result};
use crate::qmath::{matmul_into, qubit_mask, ComplexMatrix, DensityMatrix, C64, ZERO};
use crate::seeds::SeedStreams;

pub const DEFAULT_QUBITS: usize = 6;
pub const DEFAULT_A_IN: f64 = 0.1;
pub const DEFAULT_G: f64 = 0.3;
pub const DEFAULT_DT: f64 = 10.0;
pub const DEFAULT_ENERGY_SCALE: f64 = 1.0;
/// Measurement strength standing in for projective measurements.
pub const PROJECTIVE_G: f64 = 10.0;

/// Which measured quantity is fed back, and through which nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackObservable {
    Z,
    ZSquared,
    SinZ,
    X,
    XSquared,
    SinX,
    None,
}

impl FeedbackObservable {
    pub const ALL: [FeedbackObservable; 7] = [
        FeedbackObservable::Z,
        FeedbackObservable::ZSquared,
        FeedbackObservable::SinZ,
        FeedbackObservable::X,
        FeedbackObservable::XSquared,
        FeedbackObservable::SinX,
        FeedbackObservable::None,
    ];

    /// Basis whose expectation values are fed back.
    pub fn source_basis(self) -> MeasurementBasis {
        match self {
            FeedbackObservable::X | FeedbackObservable::XSquared | FeedbackObservable::SinX => {
                MeasurementBasis::X
            }
            _ => MeasurementBasis::Z,
        }
    }

    pub fn transform(self, value: f64) -> f64 {
        match self {
            FeedbackObservable::Z | FeedbackObservable::X => value,
            FeedbackObservable::ZSquared | FeedbackObservable::XSquared => value * value,
            FeedbackObservable::SinZ | FeedbackObservable::SinX => value.sin(),
            FeedbackObservable::None => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeedbackObservable::Z => "z",
            FeedbackObservable::ZSquared => "z_squared",
            FeedbackObservable::SinZ => "sin_z",
            FeedbackObservable::X => "x",
            FeedbackObservable::XSquared => "x_squared",
            FeedbackObservable::SinX => "sin_x",
            FeedbackObservable::None => "none",
        }
    }
}

impl std::fmt::Display for FeedbackObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeedbackObservable {
    type Err = QrcError;

    fn from_str(s: &str) -> Result<Self> {
        FeedbackObservable::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| QrcError::invalid(format!("unknown feedback observable '{s}'")))
    }
}

/// Per-value feedback nonlinearity; the gate angle is `a_fb` times this.
pub fn feedback_angle(value: f64, kind: FeedbackObservable) -> f64 {
    kind.transform(value)
}

/// Order in which the two weak measurements act within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementOrder {
    #[default]
    XThenZ,
    ZThenX,
}

/// Physical and protocol parameters of one reservoir.
///
/// Qubit indices are zero-based, so the default input pair is `(0, 1)` and
/// the default feedback register is `{2, 3, 4, 5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_qubits: usize,
    pub input_qubits: (usize, usize),
    pub feedback_qubits: Vec<usize>,
    /// Input scaling (radians per unit input).
    pub a_in: f64,
    /// Feedback strength (radians per unit feedback value).
    pub a_fb: f64,
    /// Weak-measurement strength.
    pub g: f64,
    pub hamiltonian: IsingHamiltonian,
    pub dt: f64,
    pub noise: MeasurementNoiseModel,
    pub depolarizing_rate: f64,
    pub feedback_observable: FeedbackObservable,
    /// Qubit pair driven by each fed-back value; one entry per qubit.
    pub feedback_pairing: Vec<(usize, usize)>,
    pub measurement_order: MeasurementOrder,
}

/// Lexicographic unordered pairs of `qubits`, cycled to length `count`.
pub fn default_pairing(qubits: &[usize], count: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, &i) in qubits.iter().enumerate() {
        for &j in &qubits[a + 1..] {
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Vec::new();
    }
    pairs.iter().copied().cycle().take(count).collect()
}

impl ReservoirConfig {
    /// Defaults around a given Hamiltonian: inputs on the first two qubits,
    /// the rest as feedback register, `a_in = 0.1`, no feedback, `g = 0.3`,
    /// noiseless readout.
    pub fn with_hamiltonian(hamiltonian: IsingHamiltonian) -> Self {
        let n = hamiltonian.n_qubits();
        let feedback_qubits: Vec<usize> = (2..n).collect();
        let feedback_pairing = default_pairing(&feedback_qubits, n);
        Self {
            n_qubits: n,
            input_qubits: (0, 1),
            feedback_qubits,
            a_in: DEFAULT_A_IN,
            a_fb: 0.0,
            g: DEFAULT_G,
            hamiltonian,
            dt: DEFAULT_DT,
            noise: MeasurementNoiseModel::noiseless(),
            depolarizing_rate: 0.0,
            feedback_observable: FeedbackObservable::Z,
            feedback_pairing,
            measurement_order: MeasurementOrder::XThenZ,
        }
    }

    /// Six qubits with couplings drawn from `seed`.
    pub fn standard(seed: u64) -> Result<Self> {
        let h = sample_couplings(DEFAULT_QUBITS, DEFAULT_ENERGY_SCALE, seed)?;
        Ok(Self::with_hamiltonian(h))
    }

    /// Redraws the couplings and reseeds the measurement noise for one
    /// realization, keeping every other parameter.
    pub fn for_realization(&self, seeds: &SeedStreams) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.hamiltonian = sample_couplings(
            self.n_qubits,
            self.hamiltonian.energy_scale(),
            seeds.coupling,
        )?;
        cfg.noise = self.noise.clone().with_seed(seeds.noise);
        Ok(cfg)
    }

    pub fn set_ensemble(&mut self, n_meas: EnsembleSize) -> Result<()> {
        self.noise = MeasurementNoiseModel::new(n_meas, self.g, self.noise.seed)?;
        Ok(())
    }

    /// Whether any feedback gate can act.
    pub fn feedback_active(&self) -> bool {
        self.a_fb != 0.0 && self.feedback_observable != FeedbackObservable::None
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits;
        if n < 2 {
            return Err(QrcError::invalid("reservoir needs at least two qubits"));
        }
        if self.hamiltonian.n_qubits() != n {
            return Err(QrcError::invalid(format!(
                "Hamiltonian acts on {} qubits, config has {n}",
                self.hamiltonian.n_qubits()
            )));
        }
        let (a, b) = self.input_qubits;
        if a == b || a >= n || b >= n {
            return Err(QrcError::invalid(format!("invalid input qubits ({a}, {b})")));
        }
        if self.feedback_qubits.iter().any(|&q| q >= n) {
            return Err(QrcError::invalid("feedback qubit out of range"));
        }
        if self.feedback_qubits.contains(&a) || self.feedback_qubits.contains(&b) {
            return Err(QrcError::invalid(
                "input and feedback qubit sets must be disjoint",
            ));
        }
        if self.feedback_pairing.len() != n {
            return Err(QrcError::invalid(format!(
                "feedback pairing needs {n} entries (one per fed-back value), got {}",
                self.feedback_pairing.len()
            )));
        }
        for &(i, j) in &self.feedback_pairing {
            if i == j || !self.feedback_qubits.contains(&i) || !self.feedback_qubits.contains(&j)
            {
                return Err(QrcError::invalid(format!(
                    "feedback pair ({i}, {j}) must be two distinct feedback qubits"
                )));
            }
        }
        for (name, v) in [("a_in", self.a_in), ("a_fb", self.a_fb), ("dt", self.dt)] {
            if !v.is_finite() {
                return Err(QrcError::invalid(format!("{name} must be finite")));
            }
        }
        WeakMeasurementChannel::new(self.g, MeasurementBasis::Z)?;
        if !(0.0..=1.0).contains(&self.depolarizing_rate) {
            return Err(QrcError::invalid(format!(
                "depolarizing rate must lie in [0, 1], got {}",
                self.depolarizing_rate
            )));
        }
        if !self.noise.n_meas.is_infinite() && self.noise.strength != self.g {
            return Err(QrcError::invalid(
                "measurement noise model strength differs from g",
            ));
        }
        Ok(())
    }
}

/// Everything recorded at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// One-based step index `k`.
    pub step_index: usize,
    /// `[⟨X_1⟩, ⟨Z_1⟩, …, ⟨X_N⟩, ⟨Z_N⟩]`, noisy when the ensemble is finite.
    pub readout: Vec<f64>,
    /// Values handed to the next step's feedback gates.
    pub feedback_values: Vec<f64>,
    /// Coherence right after the reservoir unitary.
    pub coherence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub rho: DensityMatrix,
    pub last_feedback: Vec<f64>,
    pub step: usize,
    pub noise: MeasurementNoiseModel,
}

/// `ρ₀ = |0…0⟩⟨0…0|`, zero feedback, step 0.
pub fn initial_state(cfg: &ReservoirConfig) -> ReservoirState {
    ReservoirState {
        rho: DensityMatrix::ground(cfg.n_qubits),
        last_feedback: vec![0.0; cfg.n_qubits],
        step: 0,
        noise: cfg.noise.clone(),
    }
}

/// `|00⟩⟨00| ⊗ Tr_in[ρ]` with the fresh qubits at the input positions.
pub fn reset_input_qubits(rho: &DensityMatrix, cfg: &ReservoirConfig) -> Result<DensityMatrix> {
    let n = rho.n_qubits();
    let (a, b) = cfg.input_qubits;
    if a == b || a >= n || b >= n {
        return Err(QrcError::invalid(format!("invalid input qubits ({a}, {b})")));
    }
    let mut out = rho.clone();
    reset_in_place(&mut out, qubit_mask(n, a) | qubit_mask(n, b));
    Ok(out)
}

fn reset_in_place(rho: &mut DensityMatrix, input_mask: usize) {
    let d = rho.dim();
    let patterns: Vec<usize> = (0..d).filter(|p| p & !input_mask == 0).collect();
    let src = rho.data().to_vec();
    let data = rho.data_mut();
    for r in 0..d {
        for c in 0..d {
            data[r * d + c] = if r & input_mask == 0 && c & input_mask == 0 {
                patterns.iter().map(|&p| src[(r | p) * d + (c | p)]).sum()
            } else {
                ZERO
            };
        }
    }
}

/// A reservoir with its unitary precomputed.
#[derive(Debug, Clone)]
pub struct Reservoir {
    cfg: ReservoirConfig,
    unitary: ComplexMatrix,
    /// Full-register index of (input bits `a`, remaining bits `m`) at
    /// `a * 2^(N-2) + m`.
    embed: Vec<usize>,
    /// Feedback pairs relabelled to positions among the non-input qubits.
    rest_pairing: Vec<(usize, usize)>,
}

impl Reservoir {
    pub fn new(cfg: ReservoirConfig) -> Result<Self> {
        cfg.validate()?;
        let unitary = build_reservoir_unitary(&cfg.hamiltonian, cfg.dt)?;
        let n = cfg.n_qubits;
        let (ia, ib) = cfg.input_qubits;
        let rest: Vec<usize> = (0..n).filter(|&q| q != ia && q != ib).collect();
        let dr = 1usize << rest.len();
        let mut embed = Vec::with_capacity(4 * dr);
        for a in 0..4usize {
            let input_bits = (if a & 2 != 0 { qubit_mask(n, ia) } else { 0 })
                | (if a & 1 != 0 { qubit_mask(n, ib) } else { 0 });
            for m in 0..dr {
                let rest_bits = rest
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| m & (1 << (rest.len() - 1 - p)) != 0)
                    .fold(0, |acc, (_, &q)| acc | qubit_mask(n, q));
                embed.push(input_bits | rest_bits);
            }
        }
        let position = |q: usize| rest.iter().position(|&r| r == q).expect("validated");
        let rest_pairing = cfg
            .feedback_pairing
            .iter()
            .map(|&(i, j)| (position(i), position(j)))
            .collect();
        Ok(Self {
            cfg,
            unitary,
            embed,
            rest_pairing,
        })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.cfg
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn initial_state(&self) -> ReservoirState {
        initial_state(&self.cfg)
    }

    /// One protocol step with input `s_k`.
    pub fn step(&self, state: ReservoirState, input: f64) -> Result<(ReservoirState, StepRecord)> {
        if !input.is_finite() {
            return Err(QrcError::invalid(format!("input {input} is not finite")));
        }
        let cfg = &self.cfg;
        let ReservoirState {
            mut rho,
            last_feedback,
            step,
            mut noise,
        } = state;

        // After the reset the state is |00⟩⟨00| ⊗ σ. The input gate only
        // touches the input pair and the feedback gates only touch σ, so
        // the pre-evolution state is ψψ† ⊗ σ' and the evolved state is
        // K σ' K† with K = U (ψ ⊗ I).
        let mut sigma = self.trace_out_inputs(&rho)?;
        if cfg.feedback_active() {
            for (&(i, j), &z) in self.rest_pairing.iter().zip(&last_feedback) {
                let theta = cfg.a_fb * feedback_angle(z, cfg.feedback_observable);
                apply_coupling_gate(&mut sigma, i, j, theta)?;
            }
        }
        let gate = coupling_gate_local(cfg.a_in * input);
        let psi: [C64; 4] = std::array::from_fn(|a| gate[a][0]);
        self.evolve_product_state(&psi, &sigma, &mut rho);
        let qc = coherence(&rho);

        depolarize_in_place(&mut rho, cfg.depolarizing_rate)?;

        let order = match cfg.measurement_order {
            MeasurementOrder::XThenZ => [MeasurementBasis::X, MeasurementBasis::Z],
            MeasurementOrder::ZThenX => [MeasurementBasis::Z, MeasurementBasis::X],
        };
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for basis in order {
            WeakMeasurementChannel::new(cfg.g, basis)?.apply_in_place(&mut rho);
            let values: Vec<f64> = single_qubit_expectations(&rho, basis)
                .into_iter()
                .map(|v| noise.noisy_expectation(v, ObservableArity::Single))
                .collect();
            match basis {
                MeasurementBasis::X => xs = values,
                MeasurementBasis::Z => zs = values,
            }
        }

        let readout = xs.iter().zip(&zs).flat_map(|(&x, &z)| [x, z]).collect();
        let feedback_values = match cfg.feedback_observable.source_basis() {
            MeasurementBasis::X => xs,
            MeasurementBasis::Z => zs,
        };
        let record = StepRecord {
            step_index: step + 1,
            readout,
            feedback_values: feedback_values.clone(),
            coherence: qc,
        };
        let next = ReservoirState {
            rho,
            last_feedback: feedback_values,
            step: step + 1,
            noise,
        };
        Ok((next, record))
    }

    fn trace_out_inputs(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let d = rho.dim();
        let dr = d / 4;
        let data = rho.data();
        let mut sigma = vec![ZERO; dr * dr];
        for a in 0..4 {
            let emb = &self.embed[a * dr..(a + 1) * dr];
            for (m, &r) in emb.iter().enumerate() {
                let row = &data[r * d..(r + 1) * d];
                for (out, &c) in sigma[m * dr..(m + 1) * dr].iter_mut().zip(emb) {
                    *out += row[c];
                }
            }
        }
        DensityMatrix::from_raw(self.cfg.n_qubits - 2, ComplexMatrix::new(dr, dr, sigma)?)
    }

    /// Writes `U (ψψ† ⊗ σ) U†` into `out`.
    fn evolve_product_state(&self, psi: &[C64; 4], sigma: &DensityMatrix, out: &mut DensityMatrix) {
        let d = out.dim();
        let dr = d / 4;
        let u = self.unitary.data();
        let mut k = vec![ZERO; d * dr];
        for r in 0..d {
            let urow = &u[r * d..(r + 1) * d];
            let krow = &mut k[r * dr..(r + 1) * dr];
            for (a, &p) in psi.iter().enumerate() {
                if p == ZERO {
                    continue;
                }
                for (kv, &c) in krow.iter_mut().zip(&self.embed[a * dr..(a + 1) * dr]) {
                    *kv += urow[c] * p;
                }
            }
        }
        let mut k_dag = vec![ZERO; dr * d];
        for r in 0..d {
            for m in 0..dr {
                k_dag[m * d + r] = k[r * dr + m].conj();
            }
        }
        let mut ks = vec![ZERO; d * dr];
        matmul_into(&k, sigma.data(), &mut ks, d, dr, dr);
        matmul_into(&ks, &k_dag, out.data_mut(), d, dr, d);
    }

    /// Runs `inputs` from the initial state.
    pub fn run(&self, inputs: &[f64]) -> Result<Vec<StepRecord>> {
        self.run_from(self.initial_state(), inputs).map(|(records, _)| records)
    }

    /// Runs `inputs` from `state`, returning the records and the final state.
    pub fn run_from(
        &self,
        mut state: ReservoirState,
        inputs: &[f64],
    ) -> Result<(Vec<StepRecord>, ReservoirState)> {
        let mut records = Vec::with_capacity(inputs.len());
        for &s in inputs {
            let (next, record) = self.step(state, s)?;
            records.push(record);
            state = next;
        }
        Ok((records, state))
    }
}

/// Single step without a cached reservoir; rebuilds the unitary each call.
pub fn step(
    state: ReservoirState,
    input: f64,
    cfg: &ReservoirConfig,
) -> Result<(ReservoirState, StepRecord)> {
    Reservoir::new(cfg.clone())?.step(state, input)
}

pub fn run_sequence(inputs: &[f64], cfg: &ReservoirConfig) -> Result<Vec<StepRecord>> {
    if let Some(bad) = inputs.iter().find(|s| !s.is_finite()) {
        return Err(QrcError::invalid(format!("input {bad} is not finite")));
    }
    Reservoir::new(cfg.clone())?.run(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{coupling_gate, gate_matrix, GateSpec};
    use crate::qmath::{kron, partial_trace, pauli_trace, Pauli, PauliString, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_inputs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn initial_state_properties() {
        let cfg = ReservoirConfig::standard(1).unwrap();
        let s = initial_state(&cfg);
        assert_eq!(s.rho.trace(), C64::new(1.0, 0.0));
        let z = single_qubit_expectations(&s.rho, MeasurementBasis::Z);
        assert!(z.iter().all(|&v| v == 1.0));
        assert_eq!(coherence(&s.rho), 0.0);
        assert_eq!(s.last_feedback, vec![0.0; 6]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn default_pairing_is_lexicographic() {
        let cfg = ReservoirConfig::standard(1).unwrap();
        assert_eq!(
            cfg.feedback_pairing,
            vec![(2, 3), (2, 4), (2, 5), (3, 4), (3, 5), (4, 5)]
        );
        assert_eq!(cfg.feedback_qubits, vec![2, 3, 4, 5]);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let base = ReservoirConfig::standard(1).unwrap();
        let mut cfg = base.clone();
        cfg.feedback_qubits.push(1);
        assert!(cfg.validate().is_err());
        let mut cfg = base.clone();
        cfg.feedback_pairing.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = base.clone();
        cfg.feedback_pairing[0] = (2, 2);
        assert!(cfg.validate().is_err());
        let mut cfg = base.clone();
        cfg.depolarizing_rate = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = base.clone();
        cfg.input_qubits = (0, 0);
        assert!(cfg.validate().is_err());
        let mut cfg = base;
        cfg.g = 0.0;
        assert!(cfg.set_ensemble(EnsembleSize::Finite(1000)).is_err());
    }

    #[test]
    fn reset_factorized_case() {
        let cfg = ReservoirConfig::standard(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let ab = DensityMatrix::random(2, &mut rng);
        let rest = DensityMatrix::random(4, &mut rng);
        let rho = DensityMatrix::new(6, kron(ab.matrix(), rest.matrix())).unwrap();
        let out = reset_input_qubits(&rho, &cfg).unwrap();
        let expected = kron(DensityMatrix::ground(2).matrix(), rest.matrix());
        assert!(out.matrix().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn reset_matches_partial_trace_oracle_and_is_idempotent() {
        let cfg = ReservoirConfig::standard(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rho = DensityMatrix::random(6, &mut rng);
        let out = reset_input_qubits(&rho, &cfg).unwrap();
        let oracle = kron(
            DensityMatrix::ground(2).matrix(),
            partial_trace(&rho, &[0, 1]).unwrap().matrix(),
        );
        assert!(out.matrix().max_abs_diff(&oracle) < 1e-15);
        let twice = reset_input_qubits(&out, &cfg).unwrap();
        assert_eq!(twice, out);
    }

    #[test]
    fn feedback_angle_kinds() {
        assert_eq!(feedback_angle(0.5, FeedbackObservable::Z), 0.5);
        assert_eq!(feedback_angle(0.5, FeedbackObservable::X), 0.5);
        assert_eq!(feedback_angle(-0.5, FeedbackObservable::ZSquared), 0.25);
        let s = feedback_angle(std::f64::consts::PI / 6.0, FeedbackObservable::SinZ);
        assert!((s - 0.5).abs() < 1e-15);
        assert_eq!(feedback_angle(0.7, FeedbackObservable::None), 0.0);
        for kind in FeedbackObservable::ALL {
            assert_eq!(feedback_angle(0.0, kind), 0.0);
            assert_eq!(kind.name().parse::<FeedbackObservable>().unwrap(), kind);
        }
    }

    #[test]
    fn identity_pipeline_keeps_state() {
        let h = IsingHamiltonian::new(6, vec![0.0; 36], 0.0, 1.0).unwrap();
        let mut cfg = ReservoirConfig::with_hamiltonian(h);
        cfg.a_in = 0.0;
        cfg.g = 0.0;
        let reservoir = Reservoir::new(cfg).unwrap();
        let records = reservoir.run(&[0.3, 0.9, 0.1]).unwrap();
        assert!(records.windows(2).all(|w| w[0].readout == w[1].readout));
        assert_eq!(records[0].readout[1], 1.0);
    }

    #[test]
    fn no_feedback_is_independent_of_feedback_settings() {
        let inputs = uniform_inputs(40, 3);
        let base = ReservoirConfig::standard(4).unwrap();
        let reference = run_sequence(&inputs, &base).unwrap();
        let mut other = base.clone();
        other.feedback_observable = FeedbackObservable::SinX;
        other.feedback_pairing.reverse();
        let readouts = |recs: &[StepRecord]| -> Vec<Vec<f64>> {
            recs.iter().map(|r| r.readout.clone()).collect()
        };
        let alt = run_sequence(&inputs, &other).unwrap();
        assert_eq!(readouts(&alt), readouts(&reference));
        // Output does not depend on the carried feedback vector either.
        let reservoir = Reservoir::new(base).unwrap();
        let mut state = reservoir.initial_state();
        state.last_feedback = vec![0.9; 6];
        let (_, rec) = reservoir.step(state, inputs[0]).unwrap();
        assert_eq!(rec.readout, reference[0].readout);
    }

    /// Straight-line pipeline with dense matrices only.
    fn oracle_step(rho: &ComplexMatrix, cfg: &ReservoirConfig, input: f64, z_prev: &[f64]) -> (ComplexMatrix, Vec<f64>) {
        let n = cfg.n_qubits;
        let state = DensityMatrix::new(n, rho.clone()).unwrap();
        let mut m = if cfg.input_qubits == (0, 1) {
            let rest = partial_trace(&state, &[0, 1]).unwrap();
            kron(DensityMatrix::ground(2).matrix(), rest.matrix())
        } else {
            reset_input_qubits(&state, cfg).unwrap().into_matrix()
        };
        let conj = |m: &ComplexMatrix, u: &ComplexMatrix| u.matmul(m).unwrap().matmul(&u.adjoint()).unwrap();
        let (ia, ib) = cfg.input_qubits;
        m = conj(&m, &coupling_gate(ia, ib, cfg.a_in * input, n).unwrap());
        for (&(i, j), &z) in cfg.feedback_pairing.iter().zip(z_prev) {
            m = conj(&m, &coupling_gate(i, j, cfg.a_fb * z, n).unwrap());
        }
        let h = cfg.hamiltonian.matrix();
        let u = crate::qmath::herm_expm(&h, -cfg.dt).unwrap();
        m = conj(&m, &u);
        // X-basis weak measurement through Hadamards.
        let att = (-cfg.g * cfg.g / 2.0).exp();
        let mask = |m: &ComplexMatrix| {
            ComplexMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)] * att.powi((r ^ c).count_ones() as i32))
        };
        let mut had = ComplexMatrix::identity(1 << n);
        for q in 0..n {
            had = had.matmul(&gate_matrix(&GateSpec::hadamard(q), n).unwrap()).unwrap();
        }
        m = conj(&mask(&conj(&m, &had)), &had);
        let ev = |m: &ComplexMatrix, letter: Pauli| -> Vec<f64> {
            let st = DensityMatrix::new(n, m.clone()).unwrap();
            (0..n)
                .map(|q| pauli_trace(&st, &PauliString::single(n, q, letter)).unwrap().re)
                .collect()
        };
        let xs = ev(&m, Pauli::X);
        m = mask(&m);
        let zs = ev(&m, Pauli::Z);
        let readout = xs.iter().zip(&zs).flat_map(|(&x, &z)| [x, z]).collect();
        (m, readout)
    }

    #[test]
    fn first_step_matches_straight_line_oracle() {
        let mut cfg = ReservoirConfig::standard(5).unwrap();
        cfg.a_in = 0.1;
        cfg.g = 0.3;
        let reservoir = Reservoir::new(cfg.clone()).unwrap();
        let (state, rec) = reservoir.step(reservoir.initial_state(), 1.0).unwrap();
        let (m, readout) = oracle_step(DensityMatrix::ground(6).matrix(), &cfg, 1.0, &[0.0; 6]);
        for (a, b) in rec.readout.iter().zip(&readout) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(state.rho.matrix().max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn feedback_steps_match_straight_line_oracle() {
        let mut cfg = ReservoirConfig::standard(6).unwrap();
        cfg.a_fb = 0.4;
        check_against_oracle(&cfg);
    }

    #[test]
    fn relabelled_registers_match_straight_line_oracle() {
        let mut cfg = ReservoirConfig::standard(16).unwrap();
        cfg.a_fb = 0.7;
        cfg.input_qubits = (4, 1);
        cfg.feedback_qubits = vec![0, 2, 3, 5];
        cfg.feedback_pairing = default_pairing(&cfg.feedback_qubits, 6);
        cfg.feedback_pairing.swap(0, 5);
        cfg.feedback_pairing[1] = (5, 0);
        check_against_oracle(&cfg);
    }

    fn check_against_oracle(cfg: &ReservoirConfig) {
        let reservoir = Reservoir::new(cfg.clone()).unwrap();
        let inputs = [0.2, 0.7, 0.5];
        let mut state = reservoir.initial_state();
        let mut m = DensityMatrix::ground(6).into_matrix();
        let mut z_prev = vec![0.0; 6];
        for &s in &inputs {
            let (next, rec) = reservoir.step(state, s).unwrap();
            let (om, readout) = oracle_step(&m, cfg, s, &z_prev);
            for (a, b) in rec.readout.iter().zip(&readout) {
                assert!((a - b).abs() < 1e-10);
            }
            z_prev = readout.iter().skip(1).step_by(2).copied().collect();
            assert_eq!(rec.feedback_values.len(), 6);
            for (a, b) in rec.feedback_values.iter().zip(&z_prev) {
                assert!((a - b).abs() < 1e-10);
            }
            m = om;
            state = next;
        }
    }

    #[test]
    fn run_sequence_basic_contracts() {
        let cfg = ReservoirConfig::standard(7).unwrap();
        assert!(run_sequence(&[], &cfg).unwrap().is_empty());
        let inputs = uniform_inputs(30, 8);
        let a = run_sequence(&inputs, &cfg).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, run_sequence(&inputs, &cfg).unwrap());
        assert_eq!(a[29].step_index, 30);
        assert!(run_sequence(&[0.1, f64::NAN], &cfg).is_err());
    }

    #[test]
    fn noisy_run_is_reproducible_and_feeds_back_noisy_values() {
        let mut cfg = ReservoirConfig::standard(9).unwrap();
        cfg.a_fb = 0.2;
        cfg.set_ensemble(EnsembleSize::Finite(10_000)).unwrap();
        let inputs = uniform_inputs(20, 10);
        let a = run_sequence(&inputs, &cfg).unwrap();
        assert_eq!(a, run_sequence(&inputs, &cfg).unwrap());
        for rec in &a {
            let zs: Vec<f64> = rec.readout.iter().skip(1).step_by(2).copied().collect();
            assert_eq!(zs, rec.feedback_values);
        }
        let mut ideal = cfg.clone();
        ideal.set_ensemble(EnsembleSize::Infinite).unwrap();
        assert_ne!(a, run_sequence(&inputs, &ideal).unwrap());
    }

    #[test]
    fn states_stay_physical() {
        let mut cfg = ReservoirConfig::standard(11).unwrap();
        cfg.a_fb = 0.5;
        let reservoir = Reservoir::new(cfg).unwrap();
        let mut state = reservoir.initial_state();
        for &s in &uniform_inputs(15, 12) {
            let (next, rec) = reservoir.step(state, s).unwrap();
            next.rho.validate().unwrap();
            assert!(rec.readout.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            state = next;
        }
    }

    #[test]
    fn measurement_order_matters() {
        let mut cfg = ReservoirConfig::standard(13).unwrap();
        let inputs = uniform_inputs(10, 14);
        let xz = run_sequence(&inputs, &cfg).unwrap();
        cfg.measurement_order = MeasurementOrder::ZThenX;
        let zx = run_sequence(&inputs, &cfg).unwrap();
        assert_ne!(xz, zx);
    }
}
