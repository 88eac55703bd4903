//! The three model architectures: assembly into layered circuits, evaluation,
//! parameter bookkeeping, and force prediction on raw atom positions.
//!
//! Every model is a re-uploading circuit with D trainable layers interleaved
//! with D+1 encoding layers, evaluated as ⟨ψ0|M†OM|ψ0⟩ on a singlet-product
//! initial state with an exchange-type observable:
//!
//! * diatomic (4 qubits): both centered atom positions encoded twice per
//!   encoding layer with one shared scale; trainable layer of three
//!   Heisenberg gates per block.
//! * triatomic (4 qubits): the two hydrogen positions relative to the unique
//!   atom; the trainable layer gains a fourth Heisenberg gate that shares its
//!   weight with the third, which makes the layer hydrogen-swap equivariant.
//! * dimer (7 qubits): six reflection-equivariant encodings with one scale
//!   per atom type sharing an ancilla; the trainable layer pairs two
//!   Heisenberg gates across the molecules, couples the two unique atoms, and
//!   rotates the ancilla. The block count is fixed at 1 because all four
//!   operations commute.
//!
//! Symmetry breaking, when enabled, appends an equal-angle Z-rotation on all
//! qubits directly after each trainable layer.

use serde::{Deserialize, Serialize};

use crate::autodiff;
use crate::blocks::{
    heisenberg_gate, reflect_encoding_gate, rz_gate, su2_encoding_gate, EncodingScale,
};
use crate::error::{Error, Result};
use crate::statevector::{GateAction, Observable, StateVector};
use crate::train::Scaler;

/// Tolerance on the centering constraint of model inputs (angstrom).
pub const CENTERING_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Diatomic,
    Triatomic,
    Dimer,
}

impl System {
    pub fn num_qubits(self) -> usize {
        match self {
            System::Diatomic | System::Triatomic => 4,
            System::Dimer => 7,
        }
    }

    /// Number of atoms in a raw configuration.
    pub fn num_atoms(self) -> usize {
        match self {
            System::Diatomic => 2,
            System::Triatomic => 3,
            System::Dimer => 6,
        }
    }

    /// Number of Cartesian vectors fed to the circuit after centering.
    pub fn num_model_coords(self) -> usize {
        match self {
            System::Diatomic | System::Triatomic => 2,
            System::Dimer => 6,
        }
    }

    /// Number of trainable encoding scales.
    pub fn num_enc_scales(self) -> usize {
        match self {
            System::Diatomic | System::Triatomic => 1,
            System::Dimer => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Diatomic => "diatomic",
            System::Triatomic => "triatomic",
            System::Dimer => "dimer",
        }
    }

    /// The invariant observable measured by the model.
    pub fn observable(self) -> Observable {
        match self {
            System::Diatomic | System::Triatomic => Observable::exchange(1, 2).unwrap(),
            System::Dimer => Observable::exchange_with_z(1, 4, 7).unwrap(),
        }
    }

    /// The invariant initial state.
    pub fn initial_state(self) -> StateVector {
        match self {
            System::Diatomic | System::Triatomic => {
                StateVector::singlet_pairs(4, &[(1, 2), (3, 4)], &[]).unwrap()
            }
            System::Dimer => {
                StateVector::singlet_pairs(7, &[(2, 3), (5, 6), (4, 1)], &[0]).unwrap()
            }
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diatomic" => Ok(System::Diatomic),
            "triatomic" => Ok(System::Triatomic),
            "dimer" => Ok(System::Dimer),
            other => Err(Error::InvalidArchitecture(format!(
                "unknown system '{other}'"
            ))),
        }
    }
}

/// Full structural description of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub system: System,
    pub depth: usize,
    pub blocks: usize,
    pub symmetry_breaking: bool,
}

impl ArchitectureSpec {
    pub fn new(
        system: System,
        depth: usize,
        blocks: usize,
        symmetry_breaking: bool,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArchitecture(
                "depth must be at least 1".into(),
            ));
        }
        if blocks == 0 {
            return Err(Error::InvalidArchitecture(
                "block count must be at least 1".into(),
            ));
        }
        if system == System::Dimer && blocks != 1 {
            return Err(Error::InvalidArchitecture(
                "the dimer trainable layer commutes with itself; repeating blocks only \
                 reparameterizes it, so the block count is fixed at 1"
                    .into(),
            ));
        }
        Ok(ArchitectureSpec {
            system,
            depth,
            blocks,
            symmetry_breaking,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.system.num_qubits()
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let sb = if self.symmetry_breaking { self.depth } else { 0 };
        self.depth * self.blocks * 3 + sb + self.system.num_enc_scales()
    }

    /// Flat index of the layer weight (d, b, k).
    pub(crate) fn weight_index(&self, d: usize, b: usize, k: usize) -> usize {
        (d * self.blocks + b) * 3 + k
    }

    /// Flat index of the symmetry-breaking angle of layer d.
    pub(crate) fn sb_index(&self, d: usize) -> usize {
        debug_assert!(self.symmetry_breaking);
        self.depth * self.blocks * 3 + d
    }

    /// Flat index of encoding scale t.
    pub(crate) fn enc_index(&self, t: usize) -> usize {
        let sb = if self.symmetry_breaking { self.depth } else { 0 };
        self.depth * self.blocks * 3 + sb + t
    }
}

/// Trainable parameters shaped to an [`ArchitectureSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    /// Heisenberg couplings per layer and block.
    pub layer_weights: Vec<Vec<[f64; 3]>>,
    /// Symmetry-breaking angle per layer; empty when symmetry breaking is off.
    pub sb_angles: Vec<f64>,
    /// Encoding scales: one shared scale, or two (unique-atom, common-atom)
    /// for the dimer.
    pub enc_scales: Vec<f64>,
}

impl WeightSet {
    pub fn zeros(spec: &ArchitectureSpec) -> Self {
        WeightSet {
            layer_weights: vec![vec![[0.0; 3]; spec.blocks]; spec.depth],
            sb_angles: if spec.symmetry_breaking {
                vec![0.0; spec.depth]
            } else {
                Vec::new()
            },
            enc_scales: vec![0.0; spec.system.num_enc_scales()],
        }
    }

    pub fn validate(&self, spec: &ArchitectureSpec) -> Result<()> {
        let sb_len = if spec.symmetry_breaking { spec.depth } else { 0 };
        if self.layer_weights.len() != spec.depth
            || self.layer_weights.iter().any(|l| l.len() != spec.blocks)
            || self.sb_angles.len() != sb_len
            || self.enc_scales.len() != spec.system.num_enc_scales()
        {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} layer weights, {} sb angles, {} encoding scales; \
                 got {} layers, {} sb angles, {} scales",
                spec.depth,
                spec.blocks,
                sb_len,
                spec.system.num_enc_scales(),
                self.layer_weights.len(),
                self.sb_angles.len(),
                self.enc_scales.len(),
            )));
        }
        if !self.flat_iter().all(|v| v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn flat_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layer_weights
            .iter()
            .flat_map(|l| l.iter().flat_map(|j| j.iter().copied()))
            .chain(self.sb_angles.iter().copied())
            .chain(self.enc_scales.iter().copied())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flat_iter().collect()
    }

    pub fn from_flat(spec: &ArchitectureSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                flat.len()
            )));
        }
        let mut w = WeightSet::zeros(spec);
        for d in 0..spec.depth {
            for b in 0..spec.blocks {
                for k in 0..3 {
                    w.layer_weights[d][b][k] = flat[spec.weight_index(d, b, k)];
                }
            }
        }
        if spec.symmetry_breaking {
            for d in 0..spec.depth {
                w.sb_angles[d] = flat[spec.sb_index(d)];
            }
        }
        for t in 0..spec.system.num_enc_scales() {
            w.enc_scales[t] = flat[spec.enc_index(t)];
        }
        Ok(w)
    }
}

/// Centered Cartesian inputs of one configuration.
///
/// Diatomic: (x1, x2) with x1 = −x2. Triatomic: the two hydrogen positions,
/// the unique atom sits at the origin. Dimer: six vectors ordered
/// (O¹, H1¹, H2¹, O², H1², H2²) with x_O¹ = −x_O².
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub coords: Vec<[f64; 3]>,
}

impl ModelInput {
    pub fn new(system: System, coords: Vec<[f64; 3]>) -> Result<Self> {
        let expected = system.num_model_coords();
        if coords.len() != expected {
            return Err(Error::AtomCount {
                expected,
                got: coords.len(),
            });
        }
        let centering_dev = match system {
            System::Diatomic => max_abs3(add3(coords[0], coords[1])),
            System::Triatomic => 0.0,
            System::Dimer => max_abs3(add3(coords[0], coords[3])),
        };
        if centering_dev > CENTERING_TOL {
            return Err(Error::Centering(centering_dev));
        }
        Ok(ModelInput { coords })
    }

    /// Apply a linear map (e.g. a rotation) to every coordinate.
    pub fn transformed(&self, m: &[[f64; 3]; 3]) -> ModelInput {
        ModelInput {
            coords: self
                .coords
                .iter()
                .map(|&v| crate::blocks::mat3_apply(m, v))
                .collect(),
        }
    }

    /// The reflected configuration −X.
    pub fn negated(&self) -> ModelInput {
        ModelInput {
            coords: self
                .coords
                .iter()
                .map(|v| [-v[0], -v[1], -v[2]])
                .collect(),
        }
    }

    /// Reorder coordinates; `perm[i]` is the source index of slot i.
    pub fn permuted(&self, perm: &[usize]) -> ModelInput {
        ModelInput {
            coords: perm.iter().map(|&i| self.coords[i]).collect(),
        }
    }
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn max_abs3(v: [f64; 3]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// How one circuit operation depends on trainable parameters and input
/// coordinates. `param` indices refer to the flat parameter layout of
/// [`WeightSet::to_flat`]; `atom` indices refer to model coordinates.
#[derive(Clone, Debug)]
pub enum OpBinding {
    Heisenberg {
        param: usize,
        coupling: f64,
    },
    ZRotation {
        param: usize,
        angle: f64,
    },
    Su2Encoding {
        scale_param: usize,
        atom: usize,
        x: [f64; 3],
        alpha: f64,
    },
    ReflectEncoding {
        scale_param: usize,
        atom: usize,
        x: [f64; 3],
        alpha: f64,
    },
}

/// One gate of a built circuit together with its parameter binding.
#[derive(Clone, Debug)]
pub struct CircuitOp {
    pub gate: GateAction,
    pub binding: OpBinding,
}

/// A fully assembled model circuit: ordered gate list, initial state, and
/// observable.
#[derive(Clone, Debug)]
pub struct Circuit {
    pub num_qubits: usize,
    pub ops: Vec<CircuitOp>,
    pub initial_state: StateVector,
    pub observable: Observable,
    pub num_params: usize,
    pub num_coords: usize,
}

impl Circuit {
    /// Run the circuit on its initial state.
    pub fn final_state(&self) -> Result<StateVector> {
        let mut psi = self.initial_state.clone();
        for op in &self.ops {
            psi.apply_mut(&op.gate)?;
        }
        Ok(psi)
    }

    /// The whole-circuit unitary, column by column. Used by equivariance
    /// checks on small qubit counts.
    pub fn unitary_matrix(&self) -> Result<nalgebra::DMatrix<num_complex::Complex64>> {
        let dim = 1usize << self.num_qubits;
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let bits: Vec<u8> = (0..self.num_qubits)
                .map(|i| ((col >> (self.num_qubits - 1 - i)) & 1) as u8)
                .collect();
            let mut psi = StateVector::basis(self.num_qubits, &bits)?;
            for op in &self.ops {
                psi.apply_mut(&op.gate)?;
            }
            for (row, amp) in psi.amplitudes().iter().enumerate() {
                m[(row, col)] = *amp;
            }
        }
        Ok(m)
    }
}

/// Assemble the circuit for one (architecture, weights, input) triple:
/// an encoding layer, then depth repetitions of trainable layer
/// (+ symmetry-breaking layer) followed by another encoding layer.
pub fn build_circuit(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    input: &ModelInput,
) -> Result<Circuit> {
    let input = ModelInput::new(spec.system, input.coords.clone())?;
    build_circuit_unchecked(spec, weights, &input.coords)
}

/// [`build_circuit`] without the centering validation. The model is a
/// well-defined function of unconstrained coordinates; derivative checks
/// (finite differences on single components) need to step off the centered
/// manifold, so this is the surface they differentiate.
pub fn build_circuit_unchecked(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    coords: &[[f64; 3]],
) -> Result<Circuit> {
    weights.validate(spec)?;
    if coords.len() != spec.system.num_model_coords() {
        return Err(Error::AtomCount {
            expected: spec.system.num_model_coords(),
            got: coords.len(),
        });
    }

    let mut ops: Vec<CircuitOp> = Vec::new();
    push_encoding_layer(spec, weights, coords, &mut ops)?;
    for d in 0..spec.depth {
        push_trainable_layer(spec, weights, d, &mut ops)?;
        if spec.symmetry_breaking {
            push_sb_layer(spec, weights, d, &mut ops)?;
        }
        push_encoding_layer(spec, weights, coords, &mut ops)?;
    }

    Ok(Circuit {
        num_qubits: spec.num_qubits(),
        ops,
        initial_state: spec.system.initial_state(),
        observable: spec.system.observable(),
        num_params: spec.param_count(),
        num_coords: spec.system.num_model_coords(),
    })
}

fn push_encoding_layer(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    coords: &[[f64; 3]],
    ops: &mut Vec<CircuitOp>,
) -> Result<()> {
    match spec.system {
        System::Diatomic | System::Triatomic => {
            let alpha = weights.enc_scales[0];
            let scale_param = spec.enc_index(0);
            // Each atom is encoded twice: qubits (1,3) carry atom 1 and
            // qubits (2,4) carry atom 2.
            for (qubit, atom) in [(1, 0), (2, 1), (3, 0), (4, 1)] {
                let x = coords[atom];
                ops.push(CircuitOp {
                    gate: su2_encoding_gate(qubit, x, EncodingScale(alpha))?,
                    binding: OpBinding::Su2Encoding {
                        scale_param,
                        atom,
                        x,
                        alpha,
                    },
                });
            }
        }
        System::Dimer => {
            for atom in 0..6 {
                // Atoms 0 and 3 are the unique (oxygen-like) atoms.
                let type_idx = usize::from(atom != 0 && atom != 3);
                let alpha = weights.enc_scales[type_idx];
                let scale_param = spec.enc_index(type_idx);
                let x = coords[atom];
                ops.push(CircuitOp {
                    gate: reflect_encoding_gate(atom + 1, 7, x, EncodingScale(alpha))?,
                    binding: OpBinding::ReflectEncoding {
                        scale_param,
                        atom,
                        x,
                        alpha,
                    },
                });
            }
        }
    }
    Ok(())
}

fn push_trainable_layer(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    d: usize,
    ops: &mut Vec<CircuitOp>,
) -> Result<()> {
    match spec.system {
        System::Diatomic => {
            for b in 0..spec.blocks {
                let j = weights.layer_weights[d][b];
                for (pair, k) in [((1, 2), 0), ((3, 4), 1), ((2, 3), 2)] {
                    push_heisenberg(spec, d, b, k, pair, j[k], ops)?;
                }
            }
        }
        System::Triatomic => {
            for b in 0..spec.blocks {
                let j = weights.layer_weights[d][b];
                // The third coupling feeds both (2,3) and (1,4); the shared
                // weight is what makes the layer hydrogen-swap equivariant.
                for (pair, k) in [((1, 2), 0), ((3, 4), 1), ((2, 3), 2), ((1, 4), 2)] {
                    push_heisenberg(spec, d, b, k, pair, j[k], ops)?;
                }
            }
        }
        System::Dimer => {
            let j = weights.layer_weights[d][0];
            // One coupling drives the hydrogen pairs of both molecules.
            push_heisenberg(spec, d, 0, 0, (2, 3), j[0], ops)?;
            push_heisenberg(spec, d, 0, 0, (5, 6), j[0], ops)?;
            push_heisenberg(spec, d, 0, 1, (1, 4), j[1], ops)?;
            ops.push(CircuitOp {
                gate: rz_gate(7, j[2])?,
                binding: OpBinding::ZRotation {
                    param: spec.weight_index(d, 0, 2),
                    angle: j[2],
                },
            });
        }
    }
    Ok(())
}

fn push_heisenberg(
    spec: &ArchitectureSpec,
    d: usize,
    b: usize,
    k: usize,
    pair: (usize, usize),
    coupling: f64,
    ops: &mut Vec<CircuitOp>,
) -> Result<()> {
    ops.push(CircuitOp {
        gate: heisenberg_gate(pair.0, pair.1, coupling)?,
        binding: OpBinding::Heisenberg {
            param: spec.weight_index(d, b, k),
            coupling,
        },
    });
    Ok(())
}

fn push_sb_layer(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    d: usize,
    ops: &mut Vec<CircuitOp>,
) -> Result<()> {
    let eps = weights.sb_angles[d];
    let param = spec.sb_index(d);
    for q in 1..=spec.num_qubits() {
        ops.push(CircuitOp {
            gate: rz_gate(q, eps)?,
            binding: OpBinding::ZRotation { param, angle: eps },
        });
    }
    Ok(())
}

/// f_Θ(X) = ⟨ψ0|M†OM|ψ0⟩.
pub fn evaluate(spec: &ArchitectureSpec, weights: &WeightSet, input: &ModelInput) -> Result<f64> {
    let circuit = build_circuit(spec, weights, input)?;
    circuit.final_state()?.expectation(&circuit.observable)
}

/// [`evaluate`] on unconstrained coordinates; see [`build_circuit_unchecked`].
pub fn evaluate_unchecked(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    coords: &[[f64; 3]],
) -> Result<f64> {
    let circuit = build_circuit_unchecked(spec, weights, coords)?;
    circuit.final_state()?.expectation(&circuit.observable)
}

/// Center raw atom positions into a [`ModelInput`], delegating to the
/// per-system centering rules.
pub fn center_positions(system: System, positions: &[[f64; 3]]) -> Result<ModelInput> {
    match system {
        System::Diatomic => crate::data::center_diatomic(positions),
        System::Triatomic => crate::data::center_triatomic(positions),
        System::Dimer => crate::data::center_dimer(positions),
    }
}

/// Energy and per-atom forces for one raw configuration.
///
/// The energy is the unscaled model output; forces are the negative gradient
/// with respect to the raw positions, obtained by chain-ruling the exact
/// input gradient through the (linear) centering map and undoing the label
/// scaling. The unique-atom forces absorb the centering null direction, so
/// the forces sum to zero.
pub fn predict_energy_forces(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    positions: &[[f64; 3]],
    scaler: &Scaler,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if positions.len() != spec.system.num_atoms() {
        return Err(Error::AtomCount {
            expected: spec.system.num_atoms(),
            got: positions.len(),
        });
    }
    let input = center_positions(spec.system, positions)?;
    let circuit = build_circuit(spec, weights, &input)?;
    let grads = autodiff::circuit_gradients(&circuit)?;
    let energy = scaler.unscale(grads.value);
    let raw_grad = raw_position_gradient(spec.system, &grads.coord_grad);
    let forces = raw_grad
        .iter()
        .map(|&v| scale3(v, -1.0 / scaler.slope()))
        .collect();
    Ok((energy, forces))
}

/// Chain rule of a model-coordinate gradient through the linear centering
/// map, yielding the gradient with respect to raw atom positions.
pub(crate) fn raw_position_gradient(system: System, g: &[[f64; 3]]) -> Vec<[f64; 3]> {
    match system {
        System::Diatomic => {
            // x1 = (p1 − p2)/2, x2 = −x1.
            let gp1 = scale3(sub3(g[0], g[1]), 0.5);
            vec![gp1, scale3(gp1, -1.0)]
        }
        System::Triatomic => {
            // x_i = p_Hi − p_O; the unique atom takes the balancing entry.
            let go = scale3(add3(g[0], g[1]), -1.0);
            vec![go, g[0], g[1]]
        }
        System::Dimer => {
            // x_i = p_i − (p_1 + p_4)/2; the two unique atoms each absorb
            // half of the total.
            let total = g.iter().fold([0.0; 3], |acc, &v| add3(acc, v));
            let half = scale3(total, 0.5);
            (0..6)
                .map(|i| {
                    if i == 0 || i == 3 {
                        sub3(g[i], half)
                    } else {
                        g[i]
                    }
                })
                .collect()
        }
    }
}

/// Push a raw-space direction through the centering map; the transpose
/// counterpart of [`raw_position_gradient`]. Used by the force-loss gradient.
pub(crate) fn centered_direction(system: System, raw: &[[f64; 3]]) -> Vec<[f64; 3]> {
    match system {
        System::Diatomic => {
            let m = scale3(add3(raw[0], raw[1]), 0.5);
            vec![sub3(raw[0], m), sub3(raw[1], m)]
        }
        System::Triatomic => vec![sub3(raw[1], raw[0]), sub3(raw[2], raw[0])],
        System::Dimer => {
            let m = scale3(add3(raw[0], raw[3]), 0.5);
            raw.iter().map(|&p| sub3(p, m)).collect()
        }
    }
}
