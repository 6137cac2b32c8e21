//! Dense complex linear algebra and N-qubit primitives.
//!
//! Qubit indices are zero-based and qubit 0 is the leftmost (most significant)
//! tensor factor: in an `n`-qubit basis index, qubit `q` lives at bit
//! `n - 1 - q`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QrcError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity and unit-trace tolerance for density matrices.
pub const STATE_TOLERANCE: f64 = 1e-10;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-9;

/// Largest register for which the full Pauli expansion is computed.
pub const PAULI_EXPANSION_MAX_QUBITS: usize = 4;

/// Bit mask of qubit `q` in an `n`-qubit basis index.
#[inline]
pub fn qubit_mask(n_qubits: usize, q: usize) -> usize {
    1 << (n_qubits - 1 - q)
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(QrcError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real row slices; handy for small literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(QrcError::DimensionMismatch("ragged rows".into()));
            }
            data.extend(row.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::new(n_rows, n_cols, data)
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(QrcError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        matmul_into(&self.data, &rhs.data, &mut out.data, self.rows, self.cols, rhs.cols);
        Ok(out)
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &ComplexMatrix, f: impl Fn(C64, C64) -> C64) -> Result<ComplexMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(QrcError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: C64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    /// Largest entrywise modulus of `self - other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                let d = (self.data[r * n + c] - self.data[c * n + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Largest entrywise modulus of `U†U - I`.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let prod = self.adjoint().matmul(self).expect("square");
        prod.max_abs_diff(&ComplexMatrix::identity(self.rows))
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

/// `out = a * b` for row-major `a` (n×m) and `b` (m×p).
pub(crate) fn matmul_into(a: &[C64], b: &[C64], out: &mut [C64], n: usize, m: usize, p: usize) {
    assert!(a.len() >= n * m && b.len() >= m * p && out.len() >= n * p);
    // SAFETY: `Complex<f64>` is `repr(C)` with layout `[re, im]`, the slices
    // are long enough for the given row-major shapes and `out` aliases neither.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            n,
            m,
            p,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            m as isize,
            1,
            b.as_ptr() as *const [f64; 2],
            p as isize,
            1,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            p as isize,
            1,
        );
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let av = a.data[ar * a.cols + ac];
            if av == ZERO {
                continue;
            }
            for br in 0..b.rows {
                let dst = (ar * b.rows + br) * cols + ac * b.cols;
                let src = &b.data[br * b.cols..(br + 1) * b.cols];
                for (o, &bv) in out.data[dst..dst + b.cols].iter_mut().zip(src) {
                    *o = av * bv;
                }
            }
        }
    }
    out
}

/// Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !h.is_square() {
        return Err(QrcError::invalid("eigendecomposition needs a square matrix"));
    }
    let defect = h.hermiticity_defect();
    if defect > STATE_TOLERANCE {
        return Err(QrcError::invalid(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let eig = h.to_nalgebra().symmetric_eigen();
    let n = h.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `exp(i * scale * h)` for Hermitian `h`, via its spectral decomposition.
///
/// A time-evolution operator `exp(-iHt)` is `herm_expm(H, -t)`.
pub fn herm_expm(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eigen(h)?;
    let n = h.rows;
    let phases: Vec<C64> = values
        .iter()
        .map(|&l| C64::from_polar(1.0, scale * l))
        .collect();
    let scaled = ComplexMatrix::from_fn(n, n, |r, c| vectors.data[r * n + c] * phases[c]);
    scaled.matmul(&vectors.adjoint())
}

/// An N-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates shape, Hermiticity, unit trace and positivity.
    pub fn new(n_qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::from_raw(n_qubits, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape check only; the caller vouches for the physical invariants.
    pub(crate) fn from_raw(n_qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.rows != dim || matrix.cols != dim {
            return Err(QrcError::DimensionMismatch(format!(
                "{n_qubits} qubits need a {dim}x{dim} matrix, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        Ok(Self { n_qubits, matrix })
    }

    /// `|0…0⟩⟨0…0|`.
    pub fn ground(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut matrix = ComplexMatrix::zeros(dim, dim);
        matrix.data[0] = ONE;
        Self { n_qubits, matrix }
    }

    /// `I / 2^N`.
    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let matrix = ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0));
        Self { n_qubits, matrix }
    }

    /// Projector onto a normalized state vector.
    pub fn from_pure(amplitudes: &[C64]) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(QrcError::invalid(format!(
                "state vector length {dim} is not a power of two"
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_TOLERANCE {
            return Err(QrcError::invalid(format!("state vector norm² is {norm}")));
        }
        let matrix = ComplexMatrix::from_fn(dim, dim, |r, c| amplitudes[r] * amplitudes[c].conj());
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            matrix,
        })
    }

    /// Random full-rank state `GG†/Tr(GG†)` with complex Gaussian `G`.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        let dim = 1usize << n_qubits;
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let mut gg = g.matmul(&g.adjoint()).expect("square");
        let tr = gg.trace().re;
        for x in gg.data.iter_mut() {
            *x /= tr;
        }
        // Exact Hermiticity after rounding.
        for r in 0..dim {
            gg.data[r * dim + r].im = 0.0;
            for c in r + 1..dim {
                gg.data[c * dim + r] = gg.data[r * dim + c].conj();
            }
        }
        Self {
            n_qubits,
            matrix: gg,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub(crate) fn data(&self) -> &[C64] {
        &self.matrix.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.matrix.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.matrix[(r, c)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.matrix.hermiticity_defect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = self.matrix.to_nalgebra();
        // Symmetrize so tiny rounding asymmetries do not leak into the spectrum.
        let h = (&h + h.adjoint()).scale(0.5);
        let mut values: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > STATE_TOLERANCE {
            return Err(QrcError::invalid(format!(
                "density matrix not Hermitian (defect {defect:e})"
            )));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > STATE_TOLERANCE {
            return Err(QrcError::invalid(format!("density matrix trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < PSD_FLOOR {
            return Err(QrcError::invalid(format!(
                "density matrix not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(())
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<DensityMatrix> {
        if u.rows != self.dim() || u.cols != self.dim() {
            return Err(QrcError::DimensionMismatch(format!(
                "unitary is {}x{}, state is {}x{}",
                u.rows,
                u.cols,
                self.dim(),
                self.dim()
            )));
        }
        let mut out = self.clone();
        out.conjugate_in_place(u, &u.adjoint());
        Ok(out)
    }

    /// `ρ ← U ρ U†` with a precomputed adjoint.
    pub(crate) fn conjugate_in_place(&mut self, u: &ComplexMatrix, u_dag: &ComplexMatrix) {
        let d = self.dim();
        let mut tmp = vec![ZERO; d * d];
        matmul_into(&u.data, &self.matrix.data, &mut tmp, d, d, d);
        matmul_into(&tmp, &u_dag.data, &mut self.matrix.data, d, d, d);
    }

    /// `ρ ← G ρ G†` for a 2×2 gate acting on qubit `q`.
    pub fn apply_single_qubit(&mut self, q: usize, gate: &[[C64; 2]; 2]) {
        let n = self.n_qubits;
        let d = self.dim();
        let m = qubit_mask(n, q);
        let data = &mut self.matrix.data;
        // Left multiplication, column by column.
        for c in 0..d {
            for r0 in (0..d).filter(|r| r & m == 0) {
                let r1 = r0 | m;
                let a = data[r0 * d + c];
                let b = data[r1 * d + c];
                data[r0 * d + c] = gate[0][0] * a + gate[0][1] * b;
                data[r1 * d + c] = gate[1][0] * a + gate[1][1] * b;
            }
        }
        // Right multiplication by G†.
        for r in 0..d {
            let row = &mut data[r * d..(r + 1) * d];
            for c0 in (0..d).filter(|c| c & m == 0) {
                let c1 = c0 | m;
                let a = row[c0];
                let b = row[c1];
                row[c0] = a * gate[0][0].conj() + b * gate[0][1].conj();
                row[c1] = a * gate[1][0].conj() + b * gate[1][1].conj();
            }
        }
    }

    /// `ρ ← G ρ G†` for a 4×4 gate on qubits `(hi, lo)`, where `hi` is the
    /// more significant factor of the gate's local basis `|b_hi b_lo⟩`.
    pub fn apply_two_qubit(&mut self, hi: usize, lo: usize, gate: &[[C64; 4]; 4]) {
        let n = self.n_qubits;
        let d = self.dim();
        let mh = qubit_mask(n, hi);
        let ml = qubit_mask(n, lo);
        let offsets = [0, ml, mh, mh | ml];
        let data = &mut self.matrix.data;
        let bases: Vec<usize> = (0..d).filter(|i| i & (mh | ml) == 0).collect();
        let mut scratch = vec![ZERO; 4 * d];
        left_apply_two_qubit(data, d, &bases, &offsets, gate, &mut scratch);
        let gate_dag: [[C64; 4]; 4] =
            std::array::from_fn(|a| std::array::from_fn(|k| gate[a][k].conj()));
        for r in 0..d {
            let row = &mut data[r * d..(r + 1) * d];
            for &b in &bases {
                let old = offsets.map(|o| row[b | o]);
                for (a, &o) in offsets.iter().enumerate() {
                    let g = gate_dag[a];
                    row[b | o] = old[0] * g[0] + old[1] * g[1] + old[2] * g[2] + old[3] * g[3];
                }
            }
        }
    }
}

/// `M ← G M` for a two-qubit gate given by its local row offsets.
fn left_apply_two_qubit(
    data: &mut [C64],
    d: usize,
    bases: &[usize],
    offsets: &[usize; 4],
    gate: &[[C64; 4]; 4],
    old: &mut [C64],
) {
    for &b in bases {
        for (a, &o) in offsets.iter().enumerate() {
            old[a * d..(a + 1) * d].copy_from_slice(&data[(b | o) * d..((b | o) + 1) * d]);
        }
        let (o0, rest) = old.split_at(d);
        let (o1, rest) = rest.split_at(d);
        let (o2, o3) = rest.split_at(d);
        for (a, &o) in offsets.iter().enumerate() {
            let g = gate[a];
            let row = &mut data[(b | o) * d..(b | o) * d + d];
            for (c, v) in row.iter_mut().enumerate() {
                *v = g[0] * o0[c] + g[1] * o1[c] + g[2] * o2[c] + g[3] * o3[c];
            }
        }
    }
}

/// Traces out `traced_qubits`, keeping the remaining qubits in their order.
pub fn partial_trace(rho: &DensityMatrix, traced_qubits: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    if traced_qubits.is_empty() {
        return Err(QrcError::invalid("partial trace over an empty qubit set"));
    }
    let mut traced = traced_qubits.to_vec();
    traced.sort_unstable();
    traced.dedup();
    if let Some(&q) = traced.iter().find(|&&q| q >= n) {
        return Err(QrcError::invalid(format!(
            "qubit {q} out of range for a {n}-qubit state"
        )));
    }
    if traced.len() == n {
        return Err(QrcError::invalid("partial trace over every qubit"));
    }
    let kept: Vec<usize> = (0..n).filter(|q| !traced.contains(q)).collect();
    let scatter = |qubits: &[usize]| -> Vec<usize> {
        let k = qubits.len();
        (0..1usize << k)
            .map(|local| {
                qubits.iter().enumerate().fold(0, |acc, (pos, &q)| {
                    if local & (1 << (k - 1 - pos)) != 0 {
                        acc | qubit_mask(n, q)
                    } else {
                        acc
                    }
                })
            })
            .collect()
    };
    let kept_idx = scatter(&kept);
    let traced_idx = scatter(&traced);
    let d = rho.dim();
    let out_dim = kept_idx.len();
    let src = rho.data();
    let matrix = ComplexMatrix::from_fn(out_dim, out_dim, |r, c| {
        traced_idx
            .iter()
            .map(|&t| src[(kept_idx[r] | t) * d + (kept_idx[c] | t)])
            .sum()
    });
    DensityMatrix::from_raw(kept.len(), matrix)
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> ComplexMatrix {
        let m = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        ComplexMatrix::new(2, 2, m.to_vec()).expect("2x2")
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of Pauli letters, leftmost letter on qubit 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::new(vec![Pauli::I; n_qubits])
    }

    /// `letter` on qubit `q`, identity elsewhere.
    pub fn single(n_qubits: usize, q: usize, letter: Pauli) -> Self {
        let mut letters = vec![Pauli::I; n_qubits];
        letters[q] = letter;
        Self::new(letters)
    }

    /// All `4^n` strings, lexicographic over `I < X < Y < Z`.
    pub fn all(n_qubits: usize) -> impl Iterator<Item = PauliString> {
        (0..1usize << (2 * n_qubits)).map(move |code| {
            let letters = (0..n_qubits)
                .map(|q| Pauli::ALL[(code >> (2 * (n_qubits - 1 - q))) & 3])
                .collect();
            PauliString::new(letters)
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn letter(&self, q: usize) -> Pauli {
        self.letters[q]
    }

    pub fn with_letter(&self, q: usize, letter: Pauli) -> PauliString {
        let mut letters = self.letters.clone();
        letters[q] = letter;
        Self::new(letters)
    }

    /// Masks describing `P|r⟩ = i^{n_y} (-1)^{|r & sign|} |r ^ flip⟩`.
    fn action(&self) -> PauliAction {
        let n = self.letters.len();
        let mut flip = 0;
        let mut sign = 0;
        let mut n_y = 0;
        for (q, &l) in self.letters.iter().enumerate() {
            let m = qubit_mask(n, q);
            match l {
                Pauli::I => {}
                Pauli::X => flip |= m,
                Pauli::Y => {
                    flip |= m;
                    sign |= m;
                    n_y += 1;
                }
                Pauli::Z => sign |= m,
            }
        }
        let global = match n_y % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        PauliAction { flip, sign, global }
    }
}

struct PauliAction {
    flip: usize,
    sign: usize,
    global: C64,
}

impl PauliAction {
    #[inline]
    fn phase(&self, r: usize) -> C64 {
        if (r & self.sign).count_ones() % 2 == 0 {
            self.global
        } else {
            -self.global
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = QrcError;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(QrcError::invalid(format!("'{other}' is not a Pauli letter"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(QrcError::invalid("empty Pauli string"));
        }
        Ok(Self::new(letters))
    }
}

/// Dense `2^N × 2^N` matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliString) -> ComplexMatrix {
    let dim = 1usize << p.n_qubits();
    let act = p.action();
    let mut m = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        m.data[(r ^ act.flip) * dim + r] = act.phase(r);
    }
    m
}

/// `Tr[P ρ]`, including any imaginary rounding residue.
pub fn pauli_trace(rho: &DensityMatrix, p: &PauliString) -> Result<C64> {
    if p.n_qubits() != rho.n_qubits {
        return Err(QrcError::DimensionMismatch(format!(
            "{}-qubit observable on a {}-qubit state",
            p.n_qubits(),
            rho.n_qubits
        )));
    }
    let d = rho.dim();
    let act = p.action();
    let data = rho.data();
    Ok((0..d).map(|r| act.phase(r) * data[r * d + (r ^ act.flip)]).sum())
}

/// Coefficients `a_i = Tr[P_i ρ]` over all `4^N` Pauli strings.
pub fn pauli_coefficients(rho: &DensityMatrix) -> Result<BTreeMap<PauliString, f64>> {
    let n = rho.n_qubits;
    if n > PAULI_EXPANSION_MAX_QUBITS {
        return Err(QrcError::SizeLimit {
            what: "Pauli expansion",
            max: PAULI_EXPANSION_MAX_QUBITS,
            got: n,
        });
    }
    PauliString::all(n)
        .map(|p| pauli_trace(rho, &p).map(|v| (p, v.re)))
        .collect()
}

/// `(1/2^N) Σ a_i P_i`.
pub fn pauli_reconstruct(n_qubits: usize, coefficients: &BTreeMap<PauliString, f64>) -> ComplexMatrix {
    let dim = 1usize << n_qubits;
    let mut m = ComplexMatrix::zeros(dim, dim);
    let norm = 1.0 / dim as f64;
    for (p, &a) in coefficients {
        let act = p.action();
        for r in 0..dim {
            m.data[(r ^ act.flip) * dim + r] += act.phase(r) * (a * norm);
        }
    }
    m
}
