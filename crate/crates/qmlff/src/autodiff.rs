//! Exact reverse-mode differentiation of model circuits.
//!
//! One forward pass plus one adjoint sweep yields ∂f/∂p for every trainable
//! parameter and ∂f/∂x for every Cartesian input component, at a cost of
//! O(#gates) gate applications. Every per-gate derivative matrix is a closed
//! form; nothing here goes through a parameter-shift rule (the Heisenberg
//! generator has spectrum {1, −3}, so the two-term shift rule would not
//! apply anyway) or a generic matrix exponential.
//!
//! For the force-in-loss training a mixed sweep propagates a tangent lane
//! alongside each state: it returns ∇_Θ(v·∇_x f) exactly for a chosen input
//! direction v, which is the Hessian-vector contraction the force-loss
//! gradient needs.

use num_complex::Complex64;

use crate::blocks::{
    heisenberg_matrix_derivative, reflect_encoding_matrix, rz_matrix_derivative,
    su2_encoding_matrix,
};
use crate::error::Result;
use crate::model::{
    build_circuit_unchecked, ArchitectureSpec, Circuit, ModelInput, OpBinding, WeightSet,
};
use crate::statevector::{GateMatrix, StateVector};

/// Below this input norm the encoding coordinate derivatives switch to their
/// series limit; the cos/sin closed form loses relative accuracy as 1/‖x‖.
pub const SERIES_THRESHOLD: f64 = 1e-8;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Which of the two encoding families a derivative belongs to. They share
/// every formula; only the generator basis differs (σ_k versus σ_k ⊗ X).
#[derive(Clone, Copy)]
enum EncodingKind {
    Su2,
    Reflect,
}

impl EncodingKind {
    /// c_I·I + Σ_k coef[k]·σ̃_k in the right matrix dimension.
    fn build(self, c_ident: Complex64, coef: [Complex64; 3]) -> GateMatrix {
        let zero = c(0.0, 0.0);
        match self {
            EncodingKind::Su2 => {
                let m = [
                    [c_ident + coef[2], coef[0] - c(0.0, 1.0) * coef[1]],
                    [coef[0] + c(0.0, 1.0) * coef[1], c_ident - coef[2]],
                ];
                GateMatrix::One(m)
            }
            EncodingKind::Reflect => {
                // Basis |q_i q_anc⟩; σ̃_k = σ_k ⊗ X flips the ancilla bit.
                let s = [
                    [coef[2], coef[0] - c(0.0, 1.0) * coef[1]],
                    [coef[0] + c(0.0, 1.0) * coef[1], -coef[2]],
                ];
                let mut m = [[zero; 4]; 4];
                for (row, mrow) in m.iter_mut().enumerate() {
                    mrow[row] = c_ident;
                }
                for qi in 0..2 {
                    for qj in 0..2 {
                        m[2 * qi][2 * qj + 1] += s[qi][qj];
                        m[2 * qi + 1][2 * qj] += s[qi][qj];
                    }
                }
                GateMatrix::Two(m)
            }
        }
    }

    fn gate_matrix(self, x: [f64; 3], alpha: f64) -> GateMatrix {
        match self {
            EncodingKind::Su2 => su2_encoding_matrix(x, alpha),
            EncodingKind::Reflect => reflect_encoding_matrix(x, alpha),
        }
    }

    /// ∂U/∂α = −i(x·σ̃)·U = −‖x‖sinθ·I − i‖x‖cosθ·(n·σ̃), θ = α‖x‖.
    fn alpha_derivative(self, x: [f64; 3], alpha: f64) -> GateMatrix {
        let r = norm3(x);
        if r == 0.0 {
            return self.build(c(0.0, 0.0), [c(0.0, 0.0); 3]);
        }
        let theta = alpha * r;
        let (cs, sn) = (theta.cos(), theta.sin());
        let n = [x[0] / r, x[1] / r, x[2] / r];
        let coef = [
            c(0.0, -r * cs * n[0]),
            c(0.0, -r * cs * n[1]),
            c(0.0, -r * cs * n[2]),
        ];
        self.build(c(-r * sn, 0.0), coef)
    }

    /// ∂U/∂x_k with θ = α‖x‖ and n = x/‖x‖:
    /// −α n_k sinθ·I − i[α n_k cosθ·(n·σ̃) + (sinθ/‖x‖)·((e_k − n_k n)·σ̃)],
    /// with the series limit −iα σ̃_k below [`SERIES_THRESHOLD`].
    fn coord_derivative(self, x: [f64; 3], alpha: f64, k: usize) -> GateMatrix {
        let r = norm3(x);
        if r < SERIES_THRESHOLD {
            let mut coef = [c(0.0, 0.0); 3];
            coef[k] = c(0.0, -alpha);
            return self.build(c(0.0, 0.0), coef);
        }
        let theta = alpha * r;
        let (cs, sn) = (theta.cos(), theta.sin());
        let n = [x[0] / r, x[1] / r, x[2] / r];
        let mut coef = [c(0.0, 0.0); 3];
        for (i, coef_i) in coef.iter_mut().enumerate() {
            let e_k = if i == k { 1.0 } else { 0.0 };
            let radial = alpha * n[k] * cs * n[i];
            let tangential = (sn / r) * (e_k - n[k] * n[i]);
            *coef_i = c(0.0, -(radial + tangential));
        }
        self.build(c(-alpha * n[k] * sn, 0.0), coef)
    }

    /// ∂²U/∂α∂x_k = −i·σ̃_k·U − i·(x·σ̃)·(∂U/∂x_k).
    fn mixed_derivative(self, x: [f64; 3], alpha: f64, k: usize) -> GateMatrix {
        let mut e_k = [c(0.0, 0.0); 3];
        e_k[k] = c(1.0, 0.0);
        let sigma_k = self.build(c(0.0, 0.0), e_k);
        let x_sigma = self.build(c(0.0, 0.0), [c(x[0], 0.0), c(x[1], 0.0), c(x[2], 0.0)]);
        let u = self.gate_matrix(x, alpha);
        let du = self.coord_derivative(x, alpha, k);
        sigma_k
            .matmul(&u)
            .added(&x_sigma.matmul(&du))
            .scaled(c(0.0, -1.0))
    }
}

fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Derivative of a gate with respect to its own trainable parameter, as
/// (flat parameter index, ∂U/∂p).
fn param_derivative(binding: &OpBinding) -> Option<(usize, GateMatrix)> {
    match binding {
        OpBinding::Heisenberg { param, coupling } => {
            Some((*param, heisenberg_matrix_derivative(*coupling)))
        }
        OpBinding::ZRotation { param, angle } => Some((*param, rz_matrix_derivative(*angle))),
        OpBinding::Su2Encoding {
            scale_param,
            x,
            alpha,
            ..
        } => Some((*scale_param, EncodingKind::Su2.alpha_derivative(*x, *alpha))),
        OpBinding::ReflectEncoding {
            scale_param,
            x,
            alpha,
            ..
        } => Some((
            *scale_param,
            EncodingKind::Reflect.alpha_derivative(*x, *alpha),
        )),
    }
}

/// Derivatives of a gate with respect to the three components of its encoded
/// coordinate, as (atom, component, ∂U/∂x_k). Empty for trainable gates.
fn coord_derivatives(binding: &OpBinding) -> Vec<(usize, usize, GateMatrix)> {
    match binding {
        OpBinding::Su2Encoding { atom, x, alpha, .. } => (0..3)
            .map(|k| (*atom, k, EncodingKind::Su2.coord_derivative(*x, *alpha, k)))
            .collect(),
        OpBinding::ReflectEncoding { atom, x, alpha, .. } => (0..3)
            .map(|k| {
                (
                    *atom,
                    k,
                    EncodingKind::Reflect.coord_derivative(*x, *alpha, k),
                )
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// dU/dτ along an input direction v: Σ_k v[atom][k]·∂U/∂x_k. None for gates
/// that do not depend on the input.
fn tangent_matrix(binding: &OpBinding, v: &[[f64; 3]]) -> Option<GateMatrix> {
    let (kind, atom, x, alpha) = match binding {
        OpBinding::Su2Encoding { atom, x, alpha, .. } => (EncodingKind::Su2, *atom, *x, *alpha),
        OpBinding::ReflectEncoding { atom, x, alpha, .. } => {
            (EncodingKind::Reflect, *atom, *x, *alpha)
        }
        _ => return None,
    };
    let mut m: Option<GateMatrix> = None;
    for k in 0..3 {
        let w = v[atom][k];
        if w == 0.0 {
            continue;
        }
        let d = kind.coord_derivative(x, alpha, k).scaled(c(w, 0.0));
        m = Some(match m {
            Some(acc) => acc.added(&d),
            None => d,
        });
    }
    m
}

/// d(∂U/∂α)/dτ along v: Σ_k v[atom][k]·∂²U/∂α∂x_k.
fn param_derivative_tangent(binding: &OpBinding, v: &[[f64; 3]]) -> Option<GateMatrix> {
    let (kind, atom, x, alpha) = match binding {
        OpBinding::Su2Encoding { atom, x, alpha, .. } => (EncodingKind::Su2, *atom, *x, *alpha),
        OpBinding::ReflectEncoding { atom, x, alpha, .. } => {
            (EncodingKind::Reflect, *atom, *x, *alpha)
        }
        _ => return None,
    };
    let mut m: Option<GateMatrix> = None;
    for k in 0..3 {
        let w = v[atom][k];
        if w == 0.0 {
            continue;
        }
        let d = kind.mixed_derivative(x, alpha, k).scaled(c(w, 0.0));
        m = Some(match m {
            Some(acc) => acc.added(&d),
            None => d,
        });
    }
    m
}

/// Value and exact first derivatives of a circuit's expectation value.
#[derive(Clone, Debug)]
pub struct CircuitGradients {
    pub value: f64,
    /// ∂f/∂p in the flat parameter layout; shared parameters accumulate over
    /// every gate they feed.
    pub weight_grad: Vec<f64>,
    /// ∂f/∂x per model coordinate, accumulated over every encoding layer in
    /// which the coordinate appears.
    pub coord_grad: Vec<[f64; 3]>,
}

/// One forward pass and one adjoint sweep over the gate list.
pub fn circuit_gradients(circuit: &Circuit) -> Result<CircuitGradients> {
    let mut psi = circuit.initial_state.clone();
    for op in &circuit.ops {
        psi.apply_mut(&op.gate)?;
    }
    let value = psi.expectation(&circuit.observable)?;

    let mut lam = circuit.observable.apply(&psi)?;
    let mut phi = psi;
    let mut weight_grad = vec![0.0; circuit.num_params];
    let mut coord_grad = vec![[0.0; 3]; circuit.num_coords];

    for op in circuit.ops.iter().rev() {
        let adjoint = op.gate.matrix().adjoint();
        phi.apply_raw(op.gate.targets(), &adjoint);

        if let Some((param, d)) = param_derivative(&op.binding) {
            let dphi = phi.with_small_matrix(op.gate.targets(), &d);
            weight_grad[param] += 2.0 * lam.inner(&dphi).re;
        }
        for (atom, k, d) in coord_derivatives(&op.binding) {
            let dphi = phi.with_small_matrix(op.gate.targets(), &d);
            coord_grad[atom][k] += 2.0 * lam.inner(&dphi).re;
        }

        lam.apply_raw(op.gate.targets(), &adjoint);
    }

    Ok(CircuitGradients {
        value,
        weight_grad,
        coord_grad,
    })
}

/// Value, directional input derivative, and the exact mixed second
/// derivatives ∇_Θ(v·∇_x f) along an input direction v.
#[derive(Clone, Debug)]
pub struct MixedGradients {
    pub value: f64,
    /// v·∇_x f.
    pub directional: f64,
    /// ∇_Θ f.
    pub weight_grad: Vec<f64>,
    /// ∇_Θ (v·∇_x f).
    pub mixed_grad: Vec<f64>,
}

/// Tangent-augmented adjoint sweep. Every state carries a τ-tangent for the
/// input perturbation x + τv; the tangent of each parameter contribution is
/// exactly ∂/∂τ ∂f/∂p, so no second finite difference is involved.
pub fn mixed_gradients(circuit: &Circuit, v: &[[f64; 3]]) -> Result<MixedGradients> {
    assert_eq!(v.len(), circuit.num_coords);

    // Forward dual sweep.
    let mut phi = circuit.initial_state.clone();
    let mut phi_dot = StateVector::zeros(circuit.num_qubits);
    for op in &circuit.ops {
        let tangent = tangent_matrix(&op.binding, v);
        if let Some(t) = &tangent {
            let extra = phi.with_small_matrix(op.gate.targets(), t);
            phi.apply_mut(&op.gate)?;
            phi_dot.apply_raw(op.gate.targets(), op.gate.matrix());
            phi_dot.add_assign(&extra);
        } else {
            phi.apply_mut(&op.gate)?;
            phi_dot.apply_raw(op.gate.targets(), op.gate.matrix());
        }
    }

    let value = phi.expectation(&circuit.observable)?;
    let mut lam = circuit.observable.apply(&phi)?;
    let mut lam_dot = circuit.observable.apply(&phi_dot)?;
    // ḟ = 2·Re⟨φ̇|O|φ⟩ = v·∇_x f.
    let directional = 2.0 * phi_dot.inner(&lam).re;

    let mut weight_grad = vec![0.0; circuit.num_params];
    let mut mixed_grad = vec![0.0; circuit.num_params];

    for op in circuit.ops.iter().rev() {
        let targets = op.gate.targets();
        let adjoint = op.gate.matrix().adjoint();
        let tangent = tangent_matrix(&op.binding, v);

        // φ_{g-1} = U†φ_g; φ̇_{g-1} = U†(φ̇_g − V·φ_{g-1}).
        phi.apply_raw(targets, &adjoint);
        if let Some(t) = &tangent {
            let tphi = phi.with_small_matrix(targets, t);
            phi_dot.sub_assign(&tphi);
        }
        phi_dot.apply_raw(targets, &adjoint);

        if let Some((param, d)) = param_derivative(&op.binding) {
            let dphi = phi.with_small_matrix(targets, &d);
            weight_grad[param] += 2.0 * lam.inner(&dphi).re;

            // ∂/∂τ [2Re⟨λ|D|φ⟩] = 2Re[⟨λ̇|D|φ⟩ + ⟨λ|Ḋ|φ⟩ + ⟨λ|D|φ̇⟩].
            let mut tang = lam_dot.inner(&dphi).re;
            tang += lam.inner(&phi_dot.with_small_matrix(targets, &d)).re;
            if let Some(ddot) = param_derivative_tangent(&op.binding, v) {
                tang += lam.inner(&phi.with_small_matrix(targets, &ddot)).re;
            }
            mixed_grad[param] += 2.0 * tang;
        }

        // λ̇_{g-1} = U†λ̇_g + V†λ_g; λ_{g-1} = U†λ_g.
        if let Some(t) = &tangent {
            let tlam = lam.with_small_matrix(targets, &t.adjoint());
            lam_dot.apply_raw(targets, &adjoint);
            lam_dot.add_assign(&tlam);
        } else {
            lam_dot.apply_raw(targets, &adjoint);
        }
        lam.apply_raw(targets, &adjoint);
    }

    Ok(MixedGradients {
        value,
        directional,
        weight_grad,
        mixed_grad,
    })
}

/// ∂f/∂p for every trainable parameter, shaped like the weight set.
pub fn grad_weights(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    input: &ModelInput,
) -> Result<WeightSet> {
    let circuit = crate::model::build_circuit(spec, weights, input)?;
    let grads = circuit_gradients(&circuit)?;
    WeightSet::from_flat(spec, &grads.weight_grad)
}

/// ∂f/∂x for every model coordinate component.
pub fn grad_inputs(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    input: &ModelInput,
) -> Result<Vec<[f64; 3]>> {
    let circuit = crate::model::build_circuit(spec, weights, input)?;
    Ok(circuit_gradients(&circuit)?.coord_grad)
}

/// Central finite differences (f(p+h) − f(p−h)) / 2h per coordinate. The
/// reference oracle for every exact derivative in this module.
pub fn finite_diff_gradient<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0);
    let mut grad = Vec::with_capacity(point.len());
    let mut work = point.to_vec();
    for i in 0..point.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work);
        work[i] = orig - h;
        let minus = f(&work);
        work[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Finite-difference gradient over the weight parameters in the flat layout.
/// Used by tests and by the finite-difference fallback of the force-loss
/// gradient.
pub fn finite_diff_weight_gradient<F>(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    h: f64,
    mut f: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&WeightSet) -> Result<f64>,
{
    let flat = weights.to_flat();
    let mut grad = vec![0.0; flat.len()];
    let mut work = flat.clone();
    for i in 0..flat.len() {
        work[i] = flat[i] + h;
        let plus = f(&WeightSet::from_flat(spec, &work)?)?;
        work[i] = flat[i] - h;
        let minus = f(&WeightSet::from_flat(spec, &work)?)?;
        work[i] = flat[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Gradient of f over unconstrained model coordinates.
pub fn grad_coords_unchecked(
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    coords: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let circuit = build_circuit_unchecked(spec, weights, coords)?;
    Ok(circuit_gradients(&circuit)?.coord_grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{random_input, random_weights};
    use crate::model::{evaluate, evaluate_unchecked, System};
    use crate::testutil;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(system: System, depth: usize, blocks: usize, sb: bool) -> ArchitectureSpec {
        ArchitectureSpec::new(system, depth, blocks, sb).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-8 {
            (a - b).abs()
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn heisenberg_derivative_at_zero_is_generator() {
        // ∂U/∂J at J=0 is −i(XX+YY+ZZ).
        let d = testutil::from_gate_matrix(&heisenberg_matrix_derivative(0.0));
        let expected = testutil::exchange_matrix() * testutil::c(0.0, -1.0);
        assert!(testutil::max_abs_diff(&d, &expected) < 1e-15);
    }

    #[test]
    fn encoding_derivative_series_limit() {
        // At x = 0 the z-component derivative is −iα·Z.
        let d = EncodingKind::Su2.coord_derivative([0.0; 3], 0.7, 2);
        let expected = testutil::pauli('Z') * testutil::c(0.0, -0.7);
        assert!(testutil::max_abs_diff(&testutil::from_gate_matrix(&d), &expected) < 1e-15);
    }

    #[test]
    fn gate_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            ];
            let alpha: f64 = rng.gen_range(-1.5..1.5);
            let j: f64 = rng.gen_range(-2.0..2.0);
            let h = 1e-6;

            let fd = testutil::matrix_fd(
                |t| testutil::from_gate_matrix(&crate::blocks::heisenberg_matrix(t)),
                j,
                h,
            );
            let exact = testutil::from_gate_matrix(&heisenberg_matrix_derivative(j));
            assert!(testutil::max_abs_diff(&fd, &exact) < 1e-7);

            let fd = testutil::matrix_fd(
                |t| testutil::from_gate_matrix(&crate::blocks::rz_matrix(t)),
                j,
                h,
            );
            let exact = testutil::from_gate_matrix(&rz_matrix_derivative(j));
            assert!(testutil::max_abs_diff(&fd, &exact) < 1e-7);

            for kind in [EncodingKind::Su2, EncodingKind::Reflect] {
                let fd = testutil::matrix_fd(
                    |t| testutil::from_gate_matrix(&kind.gate_matrix(x, t)),
                    alpha,
                    h,
                );
                let exact = testutil::from_gate_matrix(&kind.alpha_derivative(x, alpha));
                assert!(testutil::max_abs_diff(&fd, &exact) < 1e-7);

                for k in 0..3 {
                    let fd = testutil::matrix_fd(
                        |t| {
                            let mut xt = x;
                            xt[k] = t;
                            testutil::from_gate_matrix(&kind.gate_matrix(xt, alpha))
                        },
                        x[k],
                        h,
                    );
                    let exact = testutil::from_gate_matrix(&kind.coord_derivative(x, alpha, k));
                    assert!(testutil::max_abs_diff(&fd, &exact) < 1e-7);
                }
            }
        }
    }

    #[test]
    fn mixed_gate_derivative_matches_finite_differences() {
        // ∂²U/∂α∂x_k as the α-derivative of the coordinate derivative.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            ];
            let alpha: f64 = rng.gen_range(-1.5..1.5);
            for kind in [EncodingKind::Su2, EncodingKind::Reflect] {
                for k in 0..3 {
                    let fd = testutil::matrix_fd(
                        |a| testutil::from_gate_matrix(&kind.coord_derivative(x, a, k)),
                        alpha,
                        1e-6,
                    );
                    let exact = testutil::from_gate_matrix(&kind.mixed_derivative(x, alpha, k));
                    assert!(testutil::max_abs_diff(&fd, &exact) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn alpha_gradient_vanishes_at_symmetric_stationary_point() {
        let s = spec(System::Diatomic, 2, 1, false);
        let w = WeightSet::zeros(&s);
        let x = ModelInput::new(System::Diatomic, vec![[0.0; 3]; 2]).unwrap();
        let g = grad_weights(&s, &w, &x).unwrap();
        assert_abs_diff_eq!(g.enc_scales[0], 0.0, epsilon = 1e-14);

        let fd = finite_diff_weight_gradient(&s, &w, 1e-5, |wt| evaluate(&s, wt, &x)).unwrap();
        assert_abs_diff_eq!(fd[s.param_count() - 1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn adjoint_weight_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for system in [System::Diatomic, System::Triatomic, System::Dimer] {
            let s = spec(system, 2, 1, true);
            for _ in 0..3 {
                let w = random_weights(&s, &mut rng);
                let x = random_input(system, &mut rng);
                let exact = grad_weights(&s, &w, &x).unwrap().to_flat();
                let fd =
                    finite_diff_weight_gradient(&s, &w, 1e-5, |wt| evaluate(&s, wt, &x)).unwrap();
                for (e, f) in exact.iter().zip(&fd) {
                    assert!(rel_err(*e, *f) < 1e-5, "exact {e} vs fd {f}");
                }
            }
        }
    }

    #[test]
    fn adjoint_coord_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for system in [System::Diatomic, System::Triatomic, System::Dimer] {
            let s = spec(system, 2, 1, system == System::Dimer);
            for _ in 0..3 {
                let w = random_weights(&s, &mut rng);
                let x = random_input(system, &mut rng);
                let exact = grad_coords_unchecked(&s, &w, &x.coords).unwrap();

                let flat: Vec<f64> = x.coords.iter().flatten().copied().collect();
                let fd = finite_diff_gradient(
                    |p| {
                        let coords: Vec<[f64; 3]> =
                            p.chunks(3).map(|v| [v[0], v[1], v[2]]).collect();
                        evaluate_unchecked(&s, &w, &coords).unwrap()
                    },
                    &flat,
                    1e-5,
                );
                for (i, fd_v) in fd.iter().enumerate() {
                    let e = exact[i / 3][i % 3];
                    assert!(rel_err(e, *fd_v) < 1e-5, "exact {e} vs fd {fd_v}");
                }
            }
        }
    }

    #[test]
    fn coord_gradient_series_branch() {
        // Zero coordinates exercise the series limit; the gradient must be
        // finite and match finite differences taken at a tiny offset.
        let s = spec(System::Triatomic, 2, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_weights(&s, &mut rng);
        let coords = vec![[0.0; 3], [1e-9, -1e-9, 1e-9]];
        let exact = grad_coords_unchecked(&s, &w, &coords).unwrap();
        assert!(exact.iter().flatten().all(|g| g.is_finite()));

        let flat: Vec<f64> = coords.iter().flatten().copied().collect();
        let fd = finite_diff_gradient(
            |p| {
                let cs: Vec<[f64; 3]> = p.chunks(3).map(|v| [v[0], v[1], v[2]]).collect();
                evaluate_unchecked(&s, &w, &cs).unwrap()
            },
            &flat,
            1e-5,
        );
        for (i, fd_v) in fd.iter().enumerate() {
            assert!((exact[i / 3][i % 3] - fd_v).abs() < 1e-4);
        }
    }

    #[test]
    fn gradient_orthogonal_to_rigid_rotations() {
        // Rotation invariance forces the directional derivative along any
        // infinitesimal rotation (ω × x_i)_i to vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for system in [System::Diatomic, System::Triatomic, System::Dimer] {
            let s = spec(system, 2, 1, false);
            let w = random_weights(&s, &mut rng);
            let x = random_input(system, &mut rng);
            let g = grad_inputs(&s, &w, &x).unwrap();
            let omega = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let mut dir_deriv = 0.0;
            for (gi, xi) in g.iter().zip(&x.coords) {
                let cross = [
                    omega[1] * xi[2] - omega[2] * xi[1],
                    omega[2] * xi[0] - omega[0] * xi[2],
                    omega[0] * xi[1] - omega[1] * xi[0],
                ];
                dir_deriv += gi[0] * cross[0] + gi[1] * cross[1] + gi[2] * cross[2];
            }
            assert!(dir_deriv.abs() < 1e-9, "{system:?}: {dir_deriv}");
        }
    }

    #[test]
    fn shared_parameter_gradient_equals_sum_of_split_gradients() {
        // Splitting the shared coupling of the triatomic layer into two
        // independent parameters and summing their gradients reproduces the
        // shared-parameter gradient.
        let s = spec(System::Triatomic, 2, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_weights(&s, &mut rng);
        let x = random_input(System::Triatomic, &mut rng);

        let circuit = crate::model::build_circuit(&s, &w, &x).unwrap();
        let shared = circuit_gradients(&circuit).unwrap();

        let mut split = circuit.clone();
        let mut extra = split.num_params;
        let mut split_map = Vec::new(); // (original, extra) pairs
        let mut uses: std::collections::HashMap<usize, usize> = Default::default();
        for op in &mut split.ops {
            if let OpBinding::Heisenberg { param, .. } = &mut op.binding {
                let count = uses.entry(*param).or_insert(0);
                *count += 1;
                if *count == 2 {
                    // Second use of this parameter: rebind it.
                    split_map.push((*param, extra));
                    *param = extra;
                    extra += 1;
                }
            }
        }
        assert!(!split_map.is_empty());
        split.num_params = extra;
        let split_grads = circuit_gradients(&split).unwrap();
        for (orig, ex) in split_map {
            let sum = split_grads.weight_grad[orig] + split_grads.weight_grad[ex];
            assert_abs_diff_eq!(sum, shared.weight_grad[orig], epsilon = 1e-12);
        }
    }

    #[test]
    fn finite_diff_oracle_basics() {
        let g = finite_diff_gradient(|p| p[0] * p[0], &[3.0], 1e-5);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-9);

        let g = finite_diff_gradient(|p| p[0].sin(), &[0.0], 1e-5);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn linearization_error_decays_quadratically() {
        let s = spec(System::Diatomic, 2, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_weights(&s, &mut rng);
        let x = random_input(System::Diatomic, &mut rng);
        let g = grad_coords_unchecked(&s, &w, &x.coords).unwrap();
        let f0 = evaluate_unchecked(&s, &w, &x.coords).unwrap();

        let delta: Vec<[f64; 3]> = (0..2)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let lin_error = |scale: f64| -> f64 {
            let coords: Vec<[f64; 3]> = x
                .coords
                .iter()
                .zip(&delta)
                .map(|(xi, di)| {
                    [
                        xi[0] + scale * di[0],
                        xi[1] + scale * di[1],
                        xi[2] + scale * di[2],
                    ]
                })
                .collect();
            let f = evaluate_unchecked(&s, &w, &coords).unwrap();
            let mut lin = f0;
            for (gi, di) in g.iter().zip(&delta) {
                lin += scale * (gi[0] * di[0] + gi[1] * di[1] + gi[2] * di[2]);
            }
            (f - lin).abs()
        };
        let e1 = lin_error(2e-3);
        let e2 = lin_error(1e-3);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mixed_gradients_match_finite_differences_of_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for system in [System::Diatomic, System::Dimer] {
            let s = spec(system, 2, 1, system == System::Dimer);
            let w = random_weights(&s, &mut rng);
            let x = random_input(system, &mut rng);
            let v: Vec<[f64; 3]> = (0..system.num_model_coords())
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();

            let circuit = crate::model::build_circuit(&s, &w, &x).unwrap();
            let mixed = mixed_gradients(&circuit, &v).unwrap();

            // Directional derivative agrees with v·∇x f from the plain sweep.
            let plain = circuit_gradients(&circuit).unwrap();
            let vdotg: f64 = plain
                .coord_grad
                .iter()
                .zip(&v)
                .map(|(g, vi)| g[0] * vi[0] + g[1] * vi[1] + g[2] * vi[2])
                .sum();
            assert_abs_diff_eq!(mixed.directional, vdotg, epsilon = 1e-11);
            assert_abs_diff_eq!(mixed.value, plain.value, epsilon = 1e-12);
            for (a, b) in mixed.weight_grad.iter().zip(&plain.weight_grad) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-11);
            }

            // ∇_Θ(v·∇x f) against finite differences over the weights.
            let fd = finite_diff_weight_gradient(&s, &w, 1e-5, |wt| {
                let g = grad_coords_unchecked(&s, wt, &x.coords)?;
                Ok(g.iter()
                    .zip(&v)
                    .map(|(gi, vi)| gi[0] * vi[0] + gi[1] * vi[1] + gi[2] * vi[2])
                    .sum())
            })
            .unwrap();
            for (e, f) in mixed.mixed_grad.iter().zip(&fd) {
                assert!(rel_err(*e, *f) < 1e-4, "mixed {e} vs fd {f}");
            }
        }
    }

    #[test]
    fn finite_diff_matches_adjoint_on_small_model() {
        let s = spec(System::Diatomic, 2, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = random_weights(&s, &mut rng);
        let x = random_input(System::Diatomic, &mut rng);
        let exact = grad_weights(&s, &w, &x).unwrap().to_flat();
        let fd = finite_diff_weight_gradient(&s, &w, 1e-5, |wt| evaluate(&s, wt, &x)).unwrap();
        for (e, f) in exact.iter().zip(&fd) {
            assert!(rel_err(*e, *f) < 1e-5);
        }
    }
}
