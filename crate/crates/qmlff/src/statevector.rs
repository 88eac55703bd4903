//! Exact dense statevector simulation for up to 8 qubits.
//!
//! States are immutable from the caller's point of view: every operation
//! returns a new [`StateVector`]. Qubit indices are 1-based and qubit 1 is
//! the most significant bit of a basis index, matching the ket notation
//! |q1 q2 … qN⟩ ↦ Σ_i q_i·2^(N−i). Observables are real-weighted sums of
//! Pauli strings and therefore Hermitian by construction.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest qubit count the dense simulator accepts.
pub const MAX_QUBITS: usize = 8;

/// Tolerance for the unitarity check on gate construction.
pub const UNITARITY_TOL: f64 = 1e-12;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_num_qubits(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::QubitCount(num_qubits));
    }
    Ok(())
}

fn check_qubit(num_qubits: usize, qubit: usize) -> Result<()> {
    if qubit == 0 || qubit > num_qubits {
        return Err(Error::QubitIndex {
            index: qubit,
            num_qubits,
        });
    }
    Ok(())
}

/// Bit mask selecting qubit `qubit` inside an `num_qubits`-qubit basis index.
#[inline]
pub(crate) fn bit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - qubit)
}

/// Dense complex amplitude vector over `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state |b1 b2 … bN⟩.
    pub fn basis(num_qubits: usize, bits: &[u8]) -> Result<Self> {
        check_num_qubits(num_qubits)?;
        if bits.len() != num_qubits {
            return Err(Error::BitstringLength {
                expected: num_qubits,
                got: bits.len(),
            });
        }
        let mut index = 0usize;
        for (i, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(Error::BitstringLength {
                    expected: num_qubits,
                    got: bits.len(),
                });
            }
            index |= (b as usize) << (num_qubits - 1 - i);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { num_qubits, amps })
    }

    /// Tensor product of two-qubit singlets (|0_i 1_j⟩ − |1_i 0_j⟩)/√2 on the
    /// given pairs, with the remaining qubits in the given basis bits
    /// (assigned in increasing qubit order).
    ///
    /// Amplitudes are assigned directly rather than through a preparation
    /// circuit, so the state is exactly rotation-invariant on each pair.
    pub fn singlet_pairs(num_qubits: usize, pairs: &[(usize, usize)], rest: &[u8]) -> Result<Self> {
        check_num_qubits(num_qubits)?;
        let mut seen = vec![false; num_qubits + 1];
        for &(i, j) in pairs {
            check_qubit(num_qubits, i)?;
            check_qubit(num_qubits, j)?;
            if i == j {
                return Err(Error::DuplicateQubit(i));
            }
            for q in [i, j] {
                if seen[q] {
                    return Err(Error::DuplicateQubit(q));
                }
                seen[q] = true;
            }
        }
        let unpaired: Vec<usize> = (1..=num_qubits).filter(|&q| !seen[q]).collect();
        if rest.len() != unpaired.len() {
            return Err(Error::BitstringLength {
                expected: unpaired.len(),
                got: rest.len(),
            });
        }

        let dim = 1 << num_qubits;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        let norm = FRAC_1_SQRT_2.powi(pairs.len() as i32);
        'outer: for k in 0..dim {
            for (&q, &b) in unpaired.iter().zip(rest) {
                if (k & bit_mask(num_qubits, q) != 0) != (b != 0) {
                    continue 'outer;
                }
            }
            let mut sign = 1.0;
            for &(i, j) in pairs {
                let bi = k & bit_mask(num_qubits, i) != 0;
                let bj = k & bit_mask(num_qubits, j) != 0;
                match (bi, bj) {
                    (false, true) => {}
                    (true, false) => sign = -sign,
                    _ => continue 'outer,
                }
            }
            amps[k] = Complex64::new(sign * norm, 0.0);
        }
        Ok(StateVector { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        debug_assert_eq!(self.num_qubits, other.num_qubits);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩| — the global-phase-insensitive overlap. Two normalized
    /// states are considered equal iff this exceeds 1 − 1e-12.
    pub fn overlap_abs(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    /// Apply a gate, returning the new state.
    pub fn apply(&self, gate: &GateAction) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_mut(gate)?;
        Ok(out)
    }

    /// In-place gate application; used by the hot loops of evaluation and
    /// differentiation.
    pub fn apply_mut(&mut self, gate: &GateAction) -> Result<()> {
        for &q in gate.targets() {
            check_qubit(self.num_qubits, q)?;
        }
        self.apply_raw(gate.targets(), gate.matrix());
        Ok(())
    }

    /// Apply a small matrix on target qubits without a unitarity check.
    /// Derivative matrices of gates are applied through this path.
    pub(crate) fn apply_raw(&mut self, targets: &[usize], matrix: &GateMatrix) {
        match (matrix, targets) {
            (GateMatrix::One(u), &[q]) => {
                let mask = bit_mask(self.num_qubits, q);
                for k in 0..self.amps.len() {
                    if k & mask == 0 {
                        let a = self.amps[k];
                        let b = self.amps[k | mask];
                        self.amps[k] = u[0][0] * a + u[0][1] * b;
                        self.amps[k | mask] = u[1][0] * a + u[1][1] * b;
                    }
                }
            }
            (GateMatrix::Two(u), &[q1, q2]) => {
                let m1 = bit_mask(self.num_qubits, q1);
                let m2 = bit_mask(self.num_qubits, q2);
                for k in 0..self.amps.len() {
                    if k & (m1 | m2) == 0 {
                        let idx = [k, k | m2, k | m1, k | m1 | m2];
                        let a = [
                            self.amps[idx[0]],
                            self.amps[idx[1]],
                            self.amps[idx[2]],
                            self.amps[idx[3]],
                        ];
                        for r in 0..4 {
                            self.amps[idx[r]] =
                                u[r][0] * a[0] + u[r][1] * a[1] + u[r][2] * a[2] + u[r][3] * a[3];
                        }
                    }
                }
            }
            _ => unreachable!("target arity must match matrix dimension"),
        }
    }

    #[cfg(test)]
    pub(crate) fn set_amplitudes_for_tests(&mut self, amps: Vec<Complex64>) {
        assert_eq!(amps.len(), self.amps.len());
        self.amps = amps;
    }

    /// All-zero (non-physical) vector; scratch space for adjoint sweeps.
    pub(crate) fn zeros(num_qubits: usize) -> StateVector {
        StateVector {
            num_qubits,
            amps: vec![Complex64::new(0.0, 0.0); 1 << num_qubits],
        }
    }

    pub(crate) fn add_assign(&mut self, other: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += b;
        }
    }

    pub(crate) fn sub_assign(&mut self, other: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a -= b;
        }
    }

    /// Clone-and-apply convenience for non-unitary small matrices.
    pub(crate) fn with_small_matrix(&self, targets: &[usize], matrix: &GateMatrix) -> StateVector {
        let mut out = self.clone();
        out.apply_raw(targets, matrix);
        out
    }

    /// ⟨ψ|O|ψ⟩. The imaginary residue of the contraction is below 1e-12 for
    /// Hermitian observables; only the real part is returned.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (coeff, pauli) in &obs.terms {
            let masks = pauli.masks(self.num_qubits)?;
            let mut term = Complex64::new(0.0, 0.0);
            for j in 0..self.amps.len() {
                let k = j ^ masks.flip;
                term += self.amps[j].conj() * masks.phase(k) * self.amps[k];
            }
            acc += coeff * term;
        }
        debug_assert!(acc.im.abs() < 1e-12, "imaginary residue {}", acc.im);
        Ok(acc.re)
    }
}

/// Single-qubit Pauli factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PauliOp {
    X,
    Y,
    Z,
}

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PauliOp::X => write!(f, "X"),
            PauliOp::Y => write!(f, "Y"),
            PauliOp::Z => write!(f, "Z"),
        }
    }
}

/// Tensor product of Pauli factors, identity on unlisted qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    factors: BTreeMap<usize, PauliOp>,
}

pub(crate) struct PauliMasks {
    /// Bits flipped by X and Y factors.
    pub flip: usize,
    /// Bits carrying a Y factor.
    pub y: usize,
    /// Bits carrying a Z factor.
    pub z: usize,
    /// i^(#Y) prefactor.
    pub y_phase: Complex64,
}

impl PauliMasks {
    /// Phase picked up by basis state `k` under the string: P|k⟩ = phase·|k ^ flip⟩.
    #[inline]
    pub fn phase(&self, k: usize) -> Complex64 {
        let parity = (k & (self.y | self.z)).count_ones() & 1;
        if parity == 1 {
            -self.y_phase
        } else {
            self.y_phase
        }
    }
}

impl PauliString {
    pub fn new(factors: impl IntoIterator<Item = (usize, PauliOp)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (q, op) in factors {
            if q == 0 {
                return Err(Error::QubitIndex {
                    index: q,
                    num_qubits: MAX_QUBITS,
                });
            }
            if map.insert(q, op).is_some() {
                return Err(Error::DuplicateQubit(q));
            }
        }
        Ok(PauliString { factors: map })
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, PauliOp)> + '_ {
        self.factors.iter().map(|(&q, &op)| (q, op))
    }

    /// Largest qubit index touched by the string (0 for the identity).
    pub fn max_qubit(&self) -> usize {
        self.factors.keys().next_back().copied().unwrap_or(0)
    }

    pub(crate) fn masks(&self, num_qubits: usize) -> Result<PauliMasks> {
        let mut flip = 0usize;
        let mut y = 0usize;
        let mut z = 0usize;
        let mut ny = 0u32;
        for (&q, &op) in &self.factors {
            check_qubit(num_qubits, q)?;
            let m = bit_mask(num_qubits, q);
            match op {
                PauliOp::X => flip |= m,
                PauliOp::Y => {
                    flip |= m;
                    y |= m;
                    ny += 1;
                }
                PauliOp::Z => z |= m,
            }
        }
        let y_phase = match ny % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        Ok(PauliMasks {
            flip,
            y,
            z,
            y_phase,
        })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "I");
        }
        let mut first = true;
        for (&q, &op) in &self.factors {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{op}{q}")?;
            first = false;
        }
        Ok(())
    }
}

/// Real-weighted sum of Pauli strings; Hermitian by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(terms: Vec<(f64, PauliString)>) -> Self {
        Observable { terms }
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// The exchange operator σ^(i)·σ^(j) = X_iX_j + Y_iY_j + Z_iZ_j.
    pub fn exchange(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::DuplicateQubit(i));
        }
        let terms = [PauliOp::X, PauliOp::Y, PauliOp::Z]
            .into_iter()
            .map(|op| Ok((1.0, PauliString::new([(i, op), (j, op)])?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Observable::new(terms))
    }

    /// (σ^(i)·σ^(j))·Z_q — the exchange operator tensored with a Z factor.
    pub fn exchange_with_z(i: usize, j: usize, q: usize) -> Result<Self> {
        if i == j || i == q || j == q {
            return Err(Error::DuplicateQubit(q));
        }
        let terms = [PauliOp::X, PauliOp::Y, PauliOp::Z]
            .into_iter()
            .map(|op| {
                Ok((
                    1.0,
                    PauliString::new([(i, op), (j, op), (q, PauliOp::Z)])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observable::new(terms))
    }

    pub fn single(coeff: f64, qubit: usize, op: PauliOp) -> Result<Self> {
        Ok(Observable::new(vec![(
            coeff,
            PauliString::new([(qubit, op)])?,
        )]))
    }

    /// O|ψ⟩ as a (generally unnormalized) vector; the adjoint sweep seeds its
    /// costate with this.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let n = state.num_qubits;
        let mut amps = vec![Complex64::new(0.0, 0.0); state.amps.len()];
        for (coeff, pauli) in &self.terms {
            let masks = pauli.masks(n)?;
            for (j, amp) in amps.iter_mut().enumerate() {
                let k = j ^ masks.flip;
                *amp += coeff * masks.phase(k) * state.amps[k];
            }
        }
        Ok(StateVector { num_qubits: n, amps })
    }

    /// Dense matrix representation on `num_qubits` qubits.
    pub fn dense_matrix(&self, num_qubits: usize) -> Result<DMatrix<Complex64>> {
        check_num_qubits(num_qubits)?;
        let dim = 1 << num_qubits;
        let mut mat = DMatrix::<Complex64>::zeros(dim, dim);
        for (coeff, pauli) in &self.terms {
            let masks = pauli.masks(num_qubits)?;
            for col in 0..dim {
                mat[(col ^ masks.flip, col)] += coeff * masks.phase(col);
            }
        }
        Ok(mat)
    }

    /// Exact extreme eigenvalues of the observable's dense Hermitian matrix.
    ///
    /// Every expectation value on a normalized state lies in this interval.
    /// The Hermitian eigenproblem is solved through the real symmetric
    /// embedding [[A, −B], [B, A]] of H = A + iB.
    pub fn spectral_range(&self, num_qubits: usize) -> Result<(f64, f64)> {
        let h = self.dense_matrix(num_qubits)?;
        let dim = h.nrows();
        let mut real = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
        for r in 0..dim {
            for c in 0..dim {
                let v = h[(r, c)];
                real[(r, c)] = v.re;
                real[(r + dim, c + dim)] = v.re;
                real[(r, c + dim)] = -v.im;
                real[(r + dim, c)] = v.im;
            }
        }
        let eigen = SymmetricEigen::new(real);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &ev in eigen.eigenvalues.iter() {
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        Ok((lo, hi))
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (coeff, pauli)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{coeff:+} {pauli}")?;
        }
        Ok(())
    }
}

/// Small complex matrix backing a gate or a gate derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum GateMatrix {
    One([[Complex64; 2]; 2]),
    Two([[Complex64; 4]; 4]),
}

impl GateMatrix {
    pub fn dim(&self) -> usize {
        match self {
            GateMatrix::One(_) => 2,
            GateMatrix::Two(_) => 4,
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        match self {
            GateMatrix::One(u) => u[r][c],
            GateMatrix::Two(u) => u[r][c],
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> GateMatrix {
        match self {
            GateMatrix::One(u) => {
                let mut a = [[Complex64::new(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        a[r][c] = u[c][r].conj();
                    }
                }
                GateMatrix::One(a)
            }
            GateMatrix::Two(u) => {
                let mut a = [[Complex64::new(0.0, 0.0); 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        a[r][c] = u[c][r].conj();
                    }
                }
                GateMatrix::Two(a)
            }
        }
    }

    /// Max-norm deviation of U†U from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.entry(k, r).conj() * self.entry(k, c);
                }
                let expect = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((acc - Complex64::new(expect, 0.0)).norm());
            }
        }
        worst
    }

    /// Entrywise self + other.
    pub fn added(&self, other: &GateMatrix) -> GateMatrix {
        match (self, other) {
            (GateMatrix::One(a), GateMatrix::One(b)) => {
                let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        m[r][c] = a[r][c] + b[r][c];
                    }
                }
                GateMatrix::One(m)
            }
            (GateMatrix::Two(a), GateMatrix::Two(b)) => {
                let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        m[r][c] = a[r][c] + b[r][c];
                    }
                }
                GateMatrix::Two(m)
            }
            _ => unreachable!("mismatched matrix dimensions"),
        }
    }

    /// Entrywise scalar multiple.
    pub fn scaled(&self, s: Complex64) -> GateMatrix {
        match self {
            GateMatrix::One(u) => {
                let mut m = *u;
                for row in &mut m {
                    for v in row {
                        *v *= s;
                    }
                }
                GateMatrix::One(m)
            }
            GateMatrix::Two(u) => {
                let mut m = *u;
                for row in &mut m {
                    for v in row {
                        *v *= s;
                    }
                }
                GateMatrix::Two(m)
            }
        }
    }

    /// Left-multiply: self · other.
    pub fn matmul(&self, other: &GateMatrix) -> GateMatrix {
        match (self, other) {
            (GateMatrix::One(a), GateMatrix::One(b)) => {
                let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        for k in 0..2 {
                            m[r][c] += a[r][k] * b[k][c];
                        }
                    }
                }
                GateMatrix::One(m)
            }
            (GateMatrix::Two(a), GateMatrix::Two(b)) => {
                let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        for k in 0..4 {
                            m[r][c] += a[r][k] * b[k][c];
                        }
                    }
                }
                GateMatrix::Two(m)
            }
            _ => unreachable!("mismatched matrix dimensions"),
        }
    }
}

/// A unitary bound to one or two target qubits. The first target is the most
/// significant bit of the matrix's sub-basis; a two-qubit gate may carry an
/// ancilla as its second target.
#[derive(Clone, Debug, PartialEq)]
pub struct GateAction {
    targets: Vec<usize>,
    matrix: GateMatrix,
}

impl GateAction {
    pub fn new(targets: Vec<usize>, matrix: GateMatrix) -> Result<Self> {
        match (&matrix, targets.len()) {
            (GateMatrix::One(_), 1) | (GateMatrix::Two(_), 2) => {}
            _ => {
                return Err(Error::InvalidTargets(format!(
                    "{} targets for a {}x{} matrix",
                    targets.len(),
                    matrix.dim(),
                    matrix.dim()
                )))
            }
        }
        for &q in &targets {
            if q == 0 {
                return Err(Error::QubitIndex {
                    index: q,
                    num_qubits: MAX_QUBITS,
                });
            }
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::DuplicateQubit(targets[0]));
        }
        let dev = matrix.unitarity_deviation();
        if dev >= UNITARITY_TOL {
            return Err(Error::NonUnitary(dev));
        }
        Ok(GateAction { targets, matrix })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &GateMatrix {
        &self.matrix
    }

    /// The inverse gate U†.
    pub fn adjoint(&self) -> GateAction {
        GateAction {
            targets: self.targets.clone(),
            matrix: self.matrix.adjoint(),
        }
    }
}
