//! Exact statevector simulation with the fSim/fSwap gate family.
//!
//! Qubit `q` maps to bit `q` of the basis index (little endian), so the
//! amplitude of `|b_{n-1} ... b_1 b_0>` lives at index `sum_q b_q 2^q`.
//! All gate matrices are normative here; angle conventions elsewhere in the
//! crate are derived from them:
//!
//! ```text
//! RZ(theta)        = diag(e^{-i theta/2}, e^{i theta/2})
//! FSIM(theta, phi) = [[1, 0, 0, 0],
//!                     [0, cos t, -i sin t, 0],
//!                     [0, -i sin t, cos t, 0],
//!                     [0, 0, 0, e^{-i phi}]]
//! FSWAP            = [[1,0,0,0],[0,0,1,0],[0,1,0,0],[0,0,0,-1]]
//! RZZ(phi)   := FSIM(0, phi)
//! RXXYY(t)   := FSWAP * FSIM(t, 0)
//! ```
//!
//! For a two-qubit gate on `(a, b)` the inner block mixes `|b_b b_a> = |01>`
//! and `|10>` and the corner phase acts on `|11>`.

use crate::pauli::{PauliString, PauliSum, QubitLayout};
use num_complex::Complex64;
use std::collections::BTreeMap;

const NORM_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("state norm deviates from 1 by {deviation:e}")]
    NotNormalized { deviation: f64 },
    #[error("amplitude vector length {len} is not a power of two")]
    BadLength { len: usize },
    #[error("operator acts on {obs} qubits but state has {state}")]
    QubitCountMismatch { obs: usize, state: usize },
    #[error("expectation value has imaginary part {imag:e}; observable is not Hermitian")]
    NonHermitianObservable { imag: f64 },
}

/// Normalized complex amplitude vector over `n_qubits`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits`.
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Self { n_qubits, amps }
    }

    /// Computational basis state; bit `q` of `bits` is the occupation of qubit `q`.
    pub fn basis_state(n_qubits: usize, bits: usize) -> Self {
        assert!(bits < (1usize << n_qubits), "basis index out of range");
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[bits] = Complex64::ONE;
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(SimError::BadLength { len });
        }
        let n_qubits = len.trailing_zeros() as usize;
        let state = Self { n_qubits, amps };
        let deviation = (state.norm() - 1.0).abs();
        if deviation > NORM_TOL {
            return Err(SimError::NotNormalized { deviation });
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Embed into a register with extra qubits appended above (in state `|0>`).
    pub fn extended(&self, extra_qubits: usize) -> StateVector {
        let mut amps = vec![Complex64::ZERO; 1 << (self.n_qubits + extra_qubits)];
        amps[..self.amps.len()].copy_from_slice(&self.amps);
        StateVector { n_qubits: self.n_qubits + extra_qubits, amps }
    }
}

/// Gate set used by every circuit in the crate.
///
/// `GlobalPhase` is bookkeeping for evolution constants: occupation terms
/// implemented through `Rz` drop a scalar phase, and restoring it keeps
/// fixed-angle Trotter circuits equal to the exact propagator rather than
/// equal up to a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rz { q: usize, theta: f64 },
    Ry { q: usize, theta: f64 },
    Rzz { a: usize, b: usize, phi: f64 },
    Rxxyy { a: usize, b: usize, theta: f64 },
    Fsim { a: usize, b: usize, theta: f64, phi: f64 },
    Fswap { a: usize, b: usize },
    X { q: usize },
    H { q: usize },
    S { q: usize },
    Cnot { control: usize, target: usize },
    GlobalPhase { alpha: f64 },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Rz { q, .. } | Gate::Ry { q, .. } | Gate::X { q } | Gate::H { q } | Gate::S { q } => {
                vec![q]
            }
            Gate::Rzz { a, b, .. }
            | Gate::Rxxyy { a, b, .. }
            | Gate::Fsim { a, b, .. }
            | Gate::Fswap { a, b } => vec![a, b],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::GlobalPhase { .. } => vec![],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(
            self,
            Gate::Rzz { .. } | Gate::Rxxyy { .. } | Gate::Fsim { .. } | Gate::Fswap { .. } | Gate::Cnot { .. }
        )
    }
}

fn check_qubit(q: usize, n: usize) -> Result<(), SimError> {
    if q >= n {
        Err(SimError::QubitOutOfRange { index: q, n_qubits: n })
    } else {
        Ok(())
    }
}

/// Apply `gate` (or its adjoint when `dagger`) to `state` in place.
fn apply_impl(state: &mut StateVector, gate: &Gate, dagger: bool) -> Result<(), SimError> {
    let n = state.n_qubits;
    for q in gate.qubits() {
        check_qubit(q, n)?;
    }
    let sgn = if dagger { -1.0 } else { 1.0 };
    match *gate {
        Gate::Rz { q, theta } => {
            let theta = sgn * theta;
            let p0 = Complex64::from_polar(1.0, -theta / 2.0);
            let p1 = Complex64::from_polar(1.0, theta / 2.0);
            diagonal_1q(state, q, p0, p1);
        }
        Gate::Ry { q, theta } => {
            let theta = sgn * theta;
            let (s, c) = (theta / 2.0).sin_cos();
            // [[c, -s], [s, c]]
            single_qubit(state, q, c.into(), (-s).into(), s.into(), c.into());
        }
        Gate::X { q } => single_qubit(
            state,
            q,
            Complex64::ZERO,
            Complex64::ONE,
            Complex64::ONE,
            Complex64::ZERO,
        ),
        Gate::H { q } => {
            let h = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
            single_qubit(state, q, h, h, h, -h);
        }
        Gate::S { q } => {
            let i = if dagger { -Complex64::I } else { Complex64::I };
            diagonal_1q(state, q, Complex64::ONE, i);
        }
        Gate::Rzz { a, b, phi } => {
            fsim_block(state, a, b, 0.0, sgn * phi);
        }
        Gate::Fsim { a, b, theta, phi } => {
            fsim_block(state, a, b, sgn * theta, sgn * phi);
        }
        Gate::Fswap { a, b } => fswap(state, a, b),
        Gate::Rxxyy { a, b, theta } => {
            // FSWAP and FSIM(theta, 0) commute, so the adjoint is FSWAP*FSIM(-theta, 0).
            fsim_block(state, a, b, sgn * theta, 0.0);
            fswap(state, a, b);
        }
        Gate::Cnot { control, target } => cnot(state, control, target),
        Gate::GlobalPhase { alpha } => {
            let p = Complex64::from_polar(1.0, sgn * alpha);
            for amp in &mut state.amps {
                *amp *= p;
            }
        }
    }
    Ok(())
}

fn diagonal_1q(state: &mut StateVector, q: usize, p0: Complex64, p1: Complex64) {
    let bit = 1usize << q;
    for (i, amp) in state.amps.iter_mut().enumerate() {
        *amp *= if i & bit == 0 { p0 } else { p1 };
    }
}

fn single_qubit(state: &mut StateVector, q: usize, m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) {
    let bit = 1usize << q;
    let len = state.amps.len();
    let amps = &mut state.amps;
    let mut base = 0;
    while base < len {
        for i0 in base..base + bit {
            let i1 = i0 | bit;
            let a0 = amps[i0];
            let a1 = amps[i1];
            amps[i0] = m00 * a0 + m01 * a1;
            amps[i1] = m10 * a0 + m11 * a1;
        }
        base += bit << 1;
    }
}

/// FSIM(theta, phi) on `(a, b)`: rotate the one-excitation block, phase `|11>`.
fn fsim_block(state: &mut StateVector, a: usize, b: usize, theta: f64, phi: f64) {
    let (s, c) = theta.sin_cos();
    let c = Complex64::from(c);
    let mis = Complex64::new(0.0, -s);
    let corner = Complex64::from_polar(1.0, -phi);
    let ba = 1usize << a;
    let bb = 1usize << b;
    let amps = &mut state.amps;
    for i in 0..amps.len() {
        if i & ba != 0 {
            if i & bb == 0 {
                // |b_a b_b> = |10>; partner |01>
                let j = (i & !ba) | bb;
                let ai = amps[i];
                let aj = amps[j];
                amps[i] = c * ai + mis * aj;
                amps[j] = mis * ai + c * aj;
            } else {
                amps[i] *= corner;
            }
        }
    }
}

fn fswap(state: &mut StateVector, a: usize, b: usize) {
    let ba = 1usize << a;
    let bb = 1usize << b;
    let amps = &mut state.amps;
    for i in 0..amps.len() {
        if i & ba != 0 {
            if i & bb == 0 {
                let j = (i & !ba) | bb;
                amps.swap(i, j);
            } else {
                amps[i] = -amps[i];
            }
        }
    }
}

fn cnot(state: &mut StateVector, control: usize, target: usize) {
    let bc = 1usize << control;
    let bt = 1usize << target;
    let amps = &mut state.amps;
    for i in 0..amps.len() {
        if i & bc != 0 && i & bt == 0 {
            let j = i | bt;
            amps.swap(i, j);
        }
    }
}

/// Apply a single gate, returning the transformed state.
pub fn apply(mut state: StateVector, gate: &Gate) -> Result<StateVector, SimError> {
    apply_impl(&mut state, gate, false)?;
    Ok(state)
}

/// In-place variants used by the hot loops.
pub fn apply_in_place(state: &mut StateVector, gate: &Gate) -> Result<(), SimError> {
    apply_impl(state, gate, false)
}

pub fn apply_inverse_in_place(state: &mut StateVector, gate: &Gate) -> Result<(), SimError> {
    apply_impl(state, gate, true)
}

/// Left-to-right application of a gate list.
pub fn apply_circuit(mut state: StateVector, gates: &[Gate]) -> Result<StateVector, SimError> {
    for gate in gates {
        apply_impl(&mut state, gate, false)?;
    }
    Ok(state)
}

pub fn apply_circuit_in_place(state: &mut StateVector, gates: &[Gate]) -> Result<(), SimError> {
    for gate in gates {
        apply_impl(state, gate, false)?;
    }
    Ok(())
}

/// Apply the adjoint of a gate list (reversed order, each gate inverted).
pub fn apply_circuit_inverse_in_place(state: &mut StateVector, gates: &[Gate]) -> Result<(), SimError> {
    for gate in gates.iter().rev() {
        apply_impl(state, gate, true)?;
    }
    Ok(())
}

/// `<a|b>`.
pub fn inner(a: &StateVector, b: &StateVector) -> Complex64 {
    assert_eq!(a.n_qubits, b.n_qubits, "qubit count mismatch in inner product");
    a.amps
        .iter()
        .zip(&b.amps)
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// `<a| P |b>` for a single Pauli string, without materializing `P|b>`.
pub fn inner_with_string(a: &StateVector, string: &PauliString, b: &StateVector) -> Complex64 {
    assert_eq!(a.n_qubits, b.n_qubits);
    assert_eq!(string.len(), a.n_qubits);
    let (x_mask, zy_mask, n_y) = string.masks();
    let y_prefactor = Complex64::I.powu(n_y as u32);
    let mut acc = Complex64::ZERO;
    for (i, amp_b) in b.amps.iter().enumerate() {
        if amp_b == &Complex64::ZERO {
            continue;
        }
        // P|i> = i^{n_Y} (-1)^{popcount(i & zy_mask)} |i ^ x_mask>
        let sign = if (i & zy_mask).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        acc += a.amps[i ^ x_mask].conj() * amp_b * sign;
    }
    acc * y_prefactor
}

/// `P|state>` for a Pauli string.
pub fn apply_string(state: &StateVector, string: &PauliString) -> StateVector {
    assert_eq!(string.len(), state.n_qubits);
    let (x_mask, zy_mask, n_y) = string.masks();
    let y_prefactor = Complex64::I.powu(n_y as u32);
    let mut amps = vec![Complex64::ZERO; state.amps.len()];
    for (i, amp) in state.amps.iter().enumerate() {
        let sign = if (i & zy_mask).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        amps[i ^ x_mask] = y_prefactor * sign * amp;
    }
    StateVector { n_qubits: state.n_qubits, amps }
}

/// `<state| O |state>` for a Hermitian Pauli sum, identity offset included.
pub fn expectation(state: &StateVector, obs: &PauliSum) -> Result<f64, SimError> {
    if obs.n_qubits() != state.n_qubits {
        return Err(SimError::QubitCountMismatch { obs: obs.n_qubits(), state: state.n_qubits });
    }
    let mut acc = Complex64::from(obs.identity_coeff());
    for (coeff, string) in obs.terms() {
        acc += coeff * inner_with_string(state, string, state);
    }
    if acc.im.abs() > IMAG_TOL {
        return Err(SimError::NonHermitianObservable { imag: acc.im });
    }
    Ok(acc.re)
}

/// Exact probability mass per `(n_up, n_down)` excitation sector.
pub fn sector_probabilities(state: &StateVector, layout: &QubitLayout) -> BTreeMap<(usize, usize), f64> {
    assert!(state.n_qubits >= layout.n_qubits());
    let up_mask = layout.up_mask();
    let down_mask = layout.down_mask();
    let mut out = BTreeMap::new();
    for (i, amp) in state.amps.iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let key = ((i & up_mask).count_ones() as usize, (i & down_mask).count_ones() as usize);
        *out.entry(key).or_insert(0.0) += p;
    }
    out
}

/// Dense unitary of a gate list; test and oracle helper, small registers only.
pub fn circuit_to_dense(gates: &[Gate], n_qubits: usize) -> nalgebra::DMatrix<Complex64> {
    let dim = 1usize << n_qubits;
    let mut cols = Vec::with_capacity(dim);
    for b in 0..dim {
        let mut state = StateVector::basis_state(n_qubits, b);
        apply_circuit_in_place(&mut state, gates).expect("valid gates");
        cols.push(state.amps);
    }
    nalgebra::DMatrix::from_fn(dim, dim, |r, c| cols[c][r])
}

/// Deterministic Haar-ish random state for tests across the crate.
#[cfg(test)]
pub(crate) fn random_state(n_qubits: usize, seed: u64) -> StateVector {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut amps: Vec<Complex64> = (0..1usize << n_qubits)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    StateVector::from_amplitudes(amps).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliLetter;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn dense_gate(gate: &Gate, n: usize) -> DMatrix<Complex64> {
        circuit_to_dense(std::slice::from_ref(gate), n)
    }

    #[test]
    fn fsim_zero_is_identity() {
        let g = Gate::Fsim { a: 0, b: 1, theta: 0.0, phi: 0.0 };
        let m = dense_gate(&g, 2);
        assert!((m - DMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn fswap_squares_to_identity() {
        let gates = [Gate::Fswap { a: 0, b: 1 }, Gate::Fswap { a: 0, b: 1 }];
        let m = circuit_to_dense(&gates, 2);
        assert!((m - DMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn rxxyy_zero_equals_fswap() {
        let a = dense_gate(&Gate::Rxxyy { a: 0, b: 1, theta: 0.0 }, 2);
        let b = dense_gate(&Gate::Fswap { a: 0, b: 1 }, 2);
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn fswap_fsim_fusion_identity() {
        // FSWAP * FSIM(t, 0) = FSIM(t + 3pi/2, 0) * (Z x Z) * (S x S)
        let theta = 0.7391;
        let lhs = circuit_to_dense(
            &[Gate::Fsim { a: 0, b: 1, theta, phi: 0.0 }, Gate::Fswap { a: 0, b: 1 }],
            2,
        );
        let rhs = circuit_to_dense(
            &[
                Gate::S { q: 0 },
                Gate::S { q: 1 },
                Gate::Rz { q: 0, theta: std::f64::consts::PI },
                Gate::GlobalPhase { alpha: std::f64::consts::FRAC_PI_2 },
                Gate::Rz { q: 1, theta: std::f64::consts::PI },
                Gate::GlobalPhase { alpha: std::f64::consts::FRAC_PI_2 },
                Gate::Fsim { a: 0, b: 1, theta: theta + 1.5 * std::f64::consts::PI, phi: 0.0 },
            ],
            2,
        );
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn every_gate_is_unitary() {
        let gates = [
            Gate::Rz { q: 0, theta: 0.3 },
            Gate::Ry { q: 1, theta: -1.2 },
            Gate::Rzz { a: 0, b: 1, phi: 0.8 },
            Gate::Rxxyy { a: 1, b: 2, theta: 0.5 },
            Gate::Fsim { a: 0, b: 1, theta: 0.4, phi: -0.9 },
            Gate::Fswap { a: 1, b: 2 },
            Gate::X { q: 2 },
            Gate::H { q: 0 },
            Gate::S { q: 1 },
            Gate::Cnot { control: 0, target: 2 },
            Gate::GlobalPhase { alpha: 0.17 },
        ];
        for gate in &gates {
            let m = dense_gate(gate, 3);
            let err = (m.adjoint() * &m - DMatrix::identity(8, 8)).norm();
            assert!(err < 1e-14, "{gate:?} unitarity error {err}");
        }
    }

    #[test]
    fn inverse_round_trips() {
        let gates = [
            Gate::Rz { q: 0, theta: 0.3 },
            Gate::Ry { q: 1, theta: -1.2 },
            Gate::Rzz { a: 0, b: 1, phi: 0.8 },
            Gate::Rxxyy { a: 1, b: 2, theta: 0.5 },
            Gate::S { q: 1 },
            Gate::Cnot { control: 0, target: 2 },
            Gate::H { q: 2 },
            Gate::GlobalPhase { alpha: -0.4 },
        ];
        let mut state = random_state(3, 11);
        let original = state.clone();
        apply_circuit_in_place(&mut state, &gates).unwrap();
        apply_circuit_inverse_in_place(&mut state, &gates).unwrap();
        let overlap = inner(&original, &state);
        assert_abs_diff_eq!(overlap.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(overlap.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_circuit_is_identity() {
        let state = StateVector::basis_state(2, 0b10);
        let out = apply_circuit(state.clone(), &[]).unwrap();
        assert_eq!(state, out);
    }

    #[test]
    fn expectation_identity_and_z() {
        let state = StateVector::zero_state(2);
        let id = PauliSum::identity(2, 2.5);
        assert_abs_diff_eq!(expectation(&state, &id).unwrap(), 2.5, epsilon = 1e-15);

        let mut z0 = PauliSum::identity(2, 0.0);
        z0.add_term(1.0, PauliString::single(2, 0, PauliLetter::Z));
        assert_abs_diff_eq!(expectation(&state, &z0).unwrap(), 1.0, epsilon = 1e-15);

        let one = apply(state, &Gate::X { q: 0 }).unwrap();
        assert_abs_diff_eq!(expectation(&one, &z0).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn expectation_matches_dense_quadratic_form() {
        let state = random_state(3, 5);
        let mut obs = PauliSum::identity(3, 0.4);
        obs.add_term(0.7, PauliString::from_letters(&[PauliLetter::X, PauliLetter::Z, PauliLetter::Y]));
        obs.add_term(-1.3, PauliString::from_letters(&[PauliLetter::Z, PauliLetter::I, PauliLetter::Z]));
        obs.add_term(0.2, PauliString::from_letters(&[PauliLetter::Y, PauliLetter::Y, PauliLetter::I]));
        let dense = obs.to_dense().unwrap();
        let v = nalgebra::DVector::from_column_slice(state.amps());
        let want = (v.adjoint() * &dense * &v)[(0, 0)];
        let got = expectation(&state, &obs).unwrap();
        assert_abs_diff_eq!(got, want.re, epsilon = 1e-12);
        assert!(want.im.abs() < 1e-12);
    }

    #[test]
    fn inner_adjoint_identity() {
        let psi = random_state(3, 1);
        let phi = random_state(3, 2);
        let gate = Gate::Fsim { a: 0, b: 1, theta: 0.6, phi: 0.3 };
        // <psi|U phi> = <U^dag psi|phi>
        let lhs = inner(&psi, &apply(phi.clone(), &gate).unwrap());
        let mut psi_dag = psi.clone();
        apply_inverse_in_place(&mut psi_dag, &gate).unwrap();
        let rhs = inner(&psi_dag, &phi);
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn sector_probabilities_basics() {
        let layout = QubitLayout::new(1); // 4 qubits: wires (1,s)(0,s)(0,sb)(1,sb)
        let state = StateVector::zero_state(4);
        let probs = sector_probabilities(&state, &layout);
        assert_eq!(probs.len(), 1);
        assert_abs_diff_eq!(probs[&(0, 0)], 1.0, epsilon = 1e-15);

        let up_imp = layout.impurity_qubit(crate::pauli::Spin::Up);
        let one_up = apply(StateVector::zero_state(4), &Gate::X { q: up_imp }).unwrap();
        let probs = sector_probabilities(&one_up, &layout);
        assert_abs_diff_eq!(probs[&(1, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_preserved_over_long_random_sequences() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 5;
        let mut state = random_state(n, 3);
        for _ in 0..10_000 {
            let a = rng.gen_range(0..n - 1);
            let g = match rng.gen_range(0..5) {
                0 => Gate::Rz { q: a, theta: rng.gen_range(-3.0..3.0) },
                1 => Gate::Ry { q: a, theta: rng.gen_range(-3.0..3.0) },
                2 => Gate::Rzz { a, b: a + 1, phi: rng.gen_range(-3.0..3.0) },
                3 => Gate::Rxxyy { a, b: a + 1, theta: rng.gen_range(-3.0..3.0) },
                _ => Gate::Fsim { a, b: a + 1, theta: rng.gen_range(-3.0..3.0), phi: rng.gen_range(-3.0..3.0) },
            };
            apply_in_place(&mut state, &g).unwrap();
        }
        assert!((state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn number_conserving_gates_fix_sector_probabilities() {
        let layout = QubitLayout::new(1);
        let mut state = random_state(4, 9);
        let before = sector_probabilities(&state, &layout);
        let gates = [
            Gate::Rxxyy { a: 0, b: 1, theta: 0.37 },
            Gate::Rzz { a: 1, b: 2, phi: -0.9 },
            Gate::Rz { q: 3, theta: 1.4 },
            Gate::Fsim { a: 2, b: 3, theta: 0.21, phi: 0.11 },
        ];
        apply_circuit_in_place(&mut state, &gates).unwrap();
        let after = sector_probabilities(&state, &layout);
        for (key, p) in &before {
            assert_abs_diff_eq!(after.get(key).copied().unwrap_or(0.0), *p, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_range_qubit_rejected() {
        let state = StateVector::zero_state(2);
        let err = apply(state, &Gate::X { q: 2 });
        assert!(matches!(err, Err(SimError::QubitOutOfRange { .. })));
    }

    pub(crate) fn random_state(n_qubits: usize, seed: u64) -> StateVector {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::from_amplitudes(amps).unwrap()
    }
}
