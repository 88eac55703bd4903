//! Gate families and group representations used by the models.
//!
//! All gate matrices come from closed forms (spectral decomposition for the
//! Heisenberg exchange, cos/sin form for the encodings); a generic matrix
//! exponential exists only as a test oracle. The Euler axis convention is
//! X–Z–X for both the data-space and Hilbert-space representations: the
//! rotation r(ψ,θ,φ) = r_x(ψ)·r_z(θ)·r_x(φ) on ℝ³ is paired with
//! R_X(ψ)R_Z(θ)R_X(φ) on each qubit, which is what makes the encoding
//! conjugation identity Φ(r·x) = R Φ(x) R† hold.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::statevector::{GateAction, GateMatrix};

/// Euler angles (radians) in the X–Z–X convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerRotation {
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EulerRotation {
    pub fn new(psi: f64, theta: f64, phi: f64) -> Self {
        EulerRotation { psi, theta, phi }
    }
}

/// Trainable multiplier on Cartesian coordinates inside encoding gates
/// (1/angstrom, since it turns lengths into angles).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodingScale(pub f64);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// 4x4 matrix of exp(−iJ(XX+YY+ZZ)) via the spectral form
/// e^{−iJ}·P_triplet + e^{+3iJ}·P_singlet.
pub(crate) fn heisenberg_matrix(j: f64) -> GateMatrix {
    let et = Complex64::from_polar(1.0, -j); // triplet phase
    let es = Complex64::from_polar(1.0, 3.0 * j); // singlet phase
    let diag = (et + es) / 2.0;
    let off = (et - es) / 2.0;
    GateMatrix::Two([
        [et, ZERO, ZERO, ZERO],
        [ZERO, diag, off, ZERO],
        [ZERO, off, diag, ZERO],
        [ZERO, ZERO, ZERO, et],
    ])
}

/// ∂/∂J of [`heisenberg_matrix`]: −i(XX+YY+ZZ)·U in closed form.
pub(crate) fn heisenberg_matrix_derivative(j: f64) -> GateMatrix {
    let det = c(0.0, -1.0) * Complex64::from_polar(1.0, -j);
    let des = c(0.0, 3.0) * Complex64::from_polar(1.0, 3.0 * j);
    let diag = (det + des) / 2.0;
    let off = (det - des) / 2.0;
    GateMatrix::Two([
        [det, ZERO, ZERO, ZERO],
        [ZERO, diag, off, ZERO],
        [ZERO, off, diag, ZERO],
        [ZERO, ZERO, ZERO, det],
    ])
}

/// SU(2)-equivariant trainable block exp(−iJ σ^(i)·σ^(j)) on qubits (i, j).
pub fn heisenberg_gate(i: usize, j: usize, coupling: f64) -> Result<GateAction> {
    if i == j {
        return Err(Error::DuplicateQubit(i));
    }
    GateAction::new(vec![i, j], heisenberg_matrix(coupling))
}

/// n·σ for a unit vector n.
fn dot_sigma(n: [f64; 3]) -> [[Complex64; 2]; 2] {
    [
        [c(n[2], 0.0), c(n[0], -n[1])],
        [c(n[0], n[1]), c(-n[2], 0.0)],
    ]
}

/// 2x2 matrix of exp(−iα x·σ) = cos(α‖x‖)·I − i·sin(α‖x‖)·(x·σ)/‖x‖.
pub(crate) fn su2_encoding_matrix(x: [f64; 3], alpha: f64) -> GateMatrix {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r == 0.0 {
        return GateMatrix::One([[c(1.0, 0.0), ZERO], [ZERO, c(1.0, 0.0)]]);
    }
    let theta = alpha * r;
    let (cs, sn) = (theta.cos(), theta.sin());
    let n = [x[0] / r, x[1] / r, x[2] / r];
    let ns = dot_sigma(n);
    let mut u = [[ZERO; 2]; 2];
    for row in 0..2 {
        for col in 0..2 {
            let ident = if row == col { c(cs, 0.0) } else { ZERO };
            u[row][col] = ident - c(0.0, sn) * ns[row][col];
        }
    }
    GateMatrix::One(u)
}

/// SU(2)-equivariant encoding of a single data point on qubit `i`.
pub fn su2_encoding_gate(i: usize, x: [f64; 3], alpha: EncodingScale) -> Result<GateAction> {
    GateAction::new(vec![i], su2_encoding_matrix(x, alpha.0))
}

/// 4x4 matrix of exp(−iα x·σ ⊗ X) using (x·σ⊗X)² = ‖x‖²·I:
/// cos(α‖x‖)·I − i·sin(α‖x‖)·((x·σ)/‖x‖ ⊗ X).
pub(crate) fn reflect_encoding_matrix(x: [f64; 3], alpha: f64) -> GateMatrix {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let mut u = [[ZERO; 4]; 4];
    if r == 0.0 {
        for (row, urow) in u.iter_mut().enumerate() {
            urow[row] = c(1.0, 0.0);
        }
        return GateMatrix::Two(u);
    }
    let theta = alpha * r;
    let (cs, sn) = (theta.cos(), theta.sin());
    let n = [x[0] / r, x[1] / r, x[2] / r];
    let ns = dot_sigma(n);
    // kron(n·σ, X): index = 2*(qubit i bit) + (ancilla bit).
    for row in 0..4 {
        for col in 0..4 {
            let (ri, ra) = (row >> 1, row & 1);
            let (ci, ca) = (col >> 1, col & 1);
            let gen = if ra != ca { ns[ri][ci] } else { ZERO };
            let ident = if row == col { c(cs, 0.0) } else { ZERO };
            u[row][col] = ident - c(0.0, sn) * gen;
        }
    }
    GateMatrix::Two(u)
}

/// Reflection-equivariant encoding on qubit `i` with ancilla qubit `ancilla`:
/// exp(−iα x·σ^(i) X^(ancilla)). Satisfies gate(−x) = Z_anc · gate(x) · Z_anc.
pub fn reflect_encoding_gate(
    i: usize,
    ancilla: usize,
    x: [f64; 3],
    alpha: EncodingScale,
) -> Result<GateAction> {
    if i == ancilla {
        return Err(Error::DuplicateQubit(i));
    }
    GateAction::new(vec![i, ancilla], reflect_encoding_matrix(x, alpha.0))
}

/// diag(e^{−iε/2}, e^{+iε/2}).
pub(crate) fn rz_matrix(angle: f64) -> GateMatrix {
    GateMatrix::One([
        [Complex64::from_polar(1.0, -angle / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, angle / 2.0)],
    ])
}

/// ∂/∂ε of [`rz_matrix`]: −(i/2)Z·U.
pub(crate) fn rz_matrix_derivative(angle: f64) -> GateMatrix {
    GateMatrix::One([
        [
            c(0.0, -0.5) * Complex64::from_polar(1.0, -angle / 2.0),
            ZERO,
        ],
        [ZERO, c(0.0, 0.5) * Complex64::from_polar(1.0, angle / 2.0)],
    ])
}

/// R_Z rotation of a single qubit.
pub fn rz_gate(qubit: usize, angle: f64) -> Result<GateAction> {
    GateAction::new(vec![qubit], rz_matrix(angle))
}

/// Equal-angle R_Z(ε) on every listed qubit — the symmetry-breaking layer.
pub fn symmetry_breaking_layer(qubits: &[usize], epsilon: f64) -> Result<Vec<GateAction>> {
    if qubits.is_empty() {
        return Err(Error::InvalidTargets("empty qubit list".into()));
    }
    qubits.iter().map(|&q| rz_gate(q, epsilon)).collect()
}

fn rx_matrix(angle: f64) -> GateMatrix {
    let (cs, sn) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    GateMatrix::One([[c(cs, 0.0), c(0.0, -sn)], [c(0.0, -sn), c(cs, 0.0)]])
}

/// The per-qubit rotation representation R_X(ψ)R_Z(θ)R_X(φ) as a single 2x2
/// product matrix.
pub fn rotation_matrix_hilbert(rot: EulerRotation) -> GateMatrix {
    rx_matrix(rot.psi)
        .matmul(&rz_matrix(rot.theta))
        .matmul(&rx_matrix(rot.phi))
}

/// The tensor rotation representation: the same three-rotation product on
/// every listed qubit.
pub fn rotation_rep_hilbert(qubits: &[usize], rot: EulerRotation) -> Result<Vec<GateAction>> {
    let m = rotation_matrix_hilbert(rot);
    qubits
        .iter()
        .map(|&q| GateAction::new(vec![q], m.clone()))
        .collect()
}

/// Data-space rotation r_x(ψ)·r_z(θ)·r_x(φ) as a 3x3 orthogonal matrix with
/// determinant +1.
pub fn rotation_rep_data(rot: EulerRotation) -> [[f64; 3]; 3] {
    let rx = |a: f64| {
        [
            [1.0, 0.0, 0.0],
            [0.0, a.cos(), -a.sin()],
            [0.0, a.sin(), a.cos()],
        ]
    };
    let rz = |a: f64| {
        [
            [a.cos(), -a.sin(), 0.0],
            [a.sin(), a.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ]
    };
    mat3_mul(&mat3_mul(&rx(rot.psi), &rz(rot.theta)), &rx(rot.phi))
}

pub fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            for k in 0..3 {
                m[r][col] += a[r][k] * b[k][col];
            }
        }
    }
    m
}

pub fn mat3_apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// SWAP gates on each (disjoint) pair.
pub fn swap_rep(pairs: &[(usize, usize)]) -> Result<Vec<GateAction>> {
    let mut seen = std::collections::BTreeSet::new();
    for &(i, j) in pairs {
        if i == j || !seen.insert(i) || !seen.insert(j) {
            return Err(Error::DuplicateQubit(if i == j || !seen.contains(&i) {
                i
            } else {
                j
            }));
        }
    }
    pairs
        .iter()
        .map(|&(i, j)| {
            let one = c(1.0, 0.0);
            GateAction::new(
                vec![i, j],
                GateMatrix::Two([
                    [one, ZERO, ZERO, ZERO],
                    [ZERO, ZERO, one, ZERO],
                    [ZERO, one, ZERO, ZERO],
                    [ZERO, ZERO, ZERO, one],
                ]),
            )
        })
        .collect()
}

/// The reflection representation on the Hilbert space: Z on the ancilla.
pub fn reflection_rep(ancilla: usize) -> Result<GateAction> {
    let one = c(1.0, 0.0);
    GateAction::new(
        vec![ancilla],
        GateMatrix::One([[one, ZERO], [ZERO, -one]]),
    )
}
