//! Circuit builders: the second-order Trotter step, the cone-shaped
//! Hamiltonian variational ansatz, excitation-initialization prefixes and
//! the probe layer of Y rotations.
//!
//! The step layout (and therefore the ansatz layer) is, in application
//! order: impurity RZZ, hybridization RXXYY sweep outward (fSwaps fused),
//! one RZ on every wire at the cone edge, the mirrored sweep inward, and
//! the closing impurity RZZ. The builder tracks the wire-to-mode
//! permutation induced by the embedded fSwaps and emits the mirrored sweep
//! so each step ends on the identity permutation.

use crate::model::SiamParams;
use crate::pauli::QubitLayout;
use crate::sim::{self, Gate, SimError, StateVector};

#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("excitation count ({n_up},{n_down}) out of range for B={b}")]
    ExcitationOutOfRange { n_up: usize, n_down: usize, b: usize },
    #[error("superposed initialization needs |n_up - n_down| = 1, got ({n_up},{n_down})")]
    NotASuperpositionPair { n_up: usize, n_down: usize },
    #[error("parameter vector has {got} entries, circuit expects {expected}")]
    ParameterCountMismatch { got: usize, expected: usize },
}

/// Parametrized gate template (angle supplied at application time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamGateKind {
    Rz { q: usize },
    Ry { q: usize },
    Rzz { a: usize, b: usize },
    Rxxyy { a: usize, b: usize },
}

impl ParamGateKind {
    pub fn bind(&self, angle: f64) -> Gate {
        match *self {
            ParamGateKind::Rz { q } => Gate::Rz { q, theta: angle },
            ParamGateKind::Ry { q } => Gate::Ry { q, theta: angle },
            ParamGateKind::Rzz { a, b } => Gate::Rzz { a, b, phi: angle },
            ParamGateKind::Rxxyy { a, b } => Gate::Rxxyy { a, b, theta: angle },
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, ParamGateKind::Rzz { .. } | ParamGateKind::Rxxyy { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircuitElement {
    Fixed(Gate),
    Param { kind: ParamGateKind, slot: usize },
}

/// Ordered gate sequence with named parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    n_qubits: usize,
    n_params: usize,
    elements: Vec<CircuitElement>,
}

impl ParamCircuit {
    pub fn new(n_qubits: usize, elements: Vec<CircuitElement>) -> Self {
        let mut seen = Vec::new();
        for e in &elements {
            if let CircuitElement::Param { slot, .. } = e {
                if seen.len() <= *slot {
                    seen.resize(slot + 1, false);
                }
                seen[*slot] = true;
            }
        }
        assert!(seen.iter().all(|s| *s), "parameter slots must be dense");
        Self { n_qubits, n_params: seen.len(), elements }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn elements(&self) -> &[CircuitElement] {
        &self.elements
    }

    /// Slot kinds in slot order (for gradient generator classification).
    pub fn slot_kinds(&self) -> Vec<ParamGateKind> {
        let mut kinds = vec![None; self.n_params];
        for e in &self.elements {
            if let CircuitElement::Param { kind, slot } = e {
                kinds[*slot] = Some(*kind);
            }
        }
        kinds.into_iter().map(|k| k.expect("dense slots")).collect()
    }

    pub fn check_params(&self, params: &[f64]) -> Result<(), CircuitError> {
        if params.len() != self.n_params {
            return Err(CircuitError::ParameterCountMismatch {
                got: params.len(),
                expected: self.n_params,
            });
        }
        Ok(())
    }

    pub fn apply_to(&self, state: &mut StateVector, params: &[f64]) -> Result<(), SimError> {
        debug_assert_eq!(params.len(), self.n_params);
        for e in &self.elements {
            let gate = match e {
                CircuitElement::Fixed(g) => *g,
                CircuitElement::Param { kind, slot } => kind.bind(params[*slot]),
            };
            sim::apply_in_place(state, &gate)?;
        }
        Ok(())
    }

    pub fn apply_inverse_to(&self, state: &mut StateVector, params: &[f64]) -> Result<(), SimError> {
        debug_assert_eq!(params.len(), self.n_params);
        for e in self.elements.iter().rev() {
            let gate = match e {
                CircuitElement::Fixed(g) => *g,
                CircuitElement::Param { kind, slot } => kind.bind(params[*slot]),
            };
            sim::apply_inverse_in_place(state, &gate)?;
        }
        Ok(())
    }

    pub fn bind(&self, params: &[f64]) -> Vec<Gate> {
        debug_assert_eq!(params.len(), self.n_params);
        self.elements
            .iter()
            .map(|e| match e {
                CircuitElement::Fixed(g) => *g,
                CircuitElement::Param { kind, slot } => kind.bind(params[*slot]),
            })
            .collect()
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| match e {
                CircuitElement::Fixed(g) => g.is_two_qubit(),
                CircuitElement::Param { kind, .. } => kind.is_two_qubit(),
            })
            .count()
    }

    /// Concatenation with `other` appended; `other`'s slots are shifted.
    pub fn then(&self, other: &ParamCircuit) -> ParamCircuit {
        assert_eq!(self.n_qubits, other.n_qubits);
        let mut elements = self.elements.clone();
        for e in &other.elements {
            elements.push(match e {
                CircuitElement::Fixed(g) => CircuitElement::Fixed(*g),
                CircuitElement::Param { kind, slot } => {
                    CircuitElement::Param { kind: *kind, slot: slot + self.n_params }
                }
            });
        }
        ParamCircuit::new(self.n_qubits, elements)
    }

    /// Line-oriented dump: one gate per line, `KIND q[,q'] angle|slot:k`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            match e {
                CircuitElement::Fixed(g) => out.push_str(&gate_line(g)),
                CircuitElement::Param { kind, slot } => {
                    let (name, wires) = match kind {
                        ParamGateKind::Rz { q } => ("RZ", format!("{q}")),
                        ParamGateKind::Ry { q } => ("RY", format!("{q}")),
                        ParamGateKind::Rzz { a, b } => ("RZZ", format!("{a},{b}")),
                        ParamGateKind::Rxxyy { a, b } => ("RXXYY", format!("{a},{b}")),
                    };
                    out.push_str(&format!("{name} {wires} slot:{slot}\n"));
                }
            }
        }
        out
    }
}

fn gate_line(gate: &Gate) -> String {
    match *gate {
        Gate::Rz { q, theta } => format!("RZ {q} {theta}\n"),
        Gate::Ry { q, theta } => format!("RY {q} {theta}\n"),
        Gate::Rzz { a, b, phi } => format!("RZZ {a},{b} {phi}\n"),
        Gate::Rxxyy { a, b, theta } => format!("RXXYY {a},{b} {theta}\n"),
        Gate::Fsim { a, b, theta, phi } => format!("FSIM {a},{b} {theta},{phi}\n"),
        Gate::Fswap { a, b } => format!("FSWAP {a},{b}\n"),
        Gate::X { q } => format!("X {q}\n"),
        Gate::H { q } => format!("H {q}\n"),
        Gate::S { q } => format!("S {q}\n"),
        Gate::Cnot { control, target } => format!("CNOT {control},{target}\n"),
        Gate::GlobalPhase { alpha } => format!("GPHASE {alpha}\n"),
    }
}

/// Fixed-angle gate list dump, same format as [`ParamCircuit::dump`].
pub fn dump_gates(gates: &[Gate]) -> String {
    gates.iter().map(gate_line).collect()
}

/// Cone-shaped ansatz geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AnsatzSpec {
    pub bath_sites: usize,
    pub layers: usize,
}

impl AnsatzSpec {
    pub fn new(bath_sites: usize, layers: usize) -> Self {
        assert!(layers >= 1, "ansatz needs at least one layer");
        Self { bath_sites, layers }
    }

    pub fn layout(&self) -> QubitLayout {
        QubitLayout::new(self.bath_sites)
    }
}

/// What a gate slot within one layer stands for; used to bind Trotter angles.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotRole {
    /// `exp(-i phi n_up n_down)` with phi = U dt/2 per half step.
    ImpurityZz,
    /// Hop to bath site `p` (1-based) at dt/2 per sweep passage.
    Hop { p: usize },
    /// `exp(-i c dt n)` on the wire holding the impurity at the cone edge.
    ImpurityZ,
    /// Same for the wire holding bath site `p`.
    BathZ { p: usize },
}

/// One layer of the cone pattern: `(template, role)` in application order.
fn layer_template(b: usize) -> Vec<(ParamGateKind, SlotRole)> {
    let layout = QubitLayout::new(b);
    let imp_up = layout.impurity_qubit(crate::pauli::Spin::Up);
    let imp_down = layout.impurity_qubit(crate::pauli::Spin::Down);
    let mut entries = Vec::new();
    entries.push((ParamGateKind::Rzz { a: imp_up, b: imp_down }, SlotRole::ImpurityZz));
    for k in 1..=b {
        entries.push((ParamGateKind::Rxxyy { a: b - k, b: b - k + 1 }, SlotRole::Hop { p: k }));
        entries.push((ParamGateKind::Rxxyy { a: b + k, b: b + k + 1 }, SlotRole::Hop { p: k }));
    }
    // Cone edge: wire 0 holds the up impurity, wire w in 1..=B bath B+1-w,
    // wire B+k bath k, wire 2B+1 the down impurity. For B = 0 the impurities
    // never move.
    for wire in 0..2 * b + 2 {
        let role = if b == 0 {
            SlotRole::ImpurityZ
        } else if wire == 0 || wire == 2 * b + 1 {
            SlotRole::ImpurityZ
        } else if wire <= b {
            SlotRole::BathZ { p: b + 1 - wire }
        } else {
            SlotRole::BathZ { p: wire - b }
        };
        entries.push((ParamGateKind::Rz { q: wire }, role));
    }
    for k in (1..=b).rev() {
        entries.push((ParamGateKind::Rxxyy { a: b - k, b: b - k + 1 }, SlotRole::Hop { p: k }));
        entries.push((ParamGateKind::Rxxyy { a: b + k, b: b + k + 1 }, SlotRole::Hop { p: k }));
    }
    entries.push((ParamGateKind::Rzz { a: imp_up, b: imp_down }, SlotRole::ImpurityZz));
    entries
}

fn role_angle(role: SlotRole, siam: &SiamParams, dt: f64) -> f64 {
    match role {
        SlotRole::ImpurityZz => siam.u * dt / 2.0,
        SlotRole::Hop { p } => siam.bath[p - 1].coupling * dt / 2.0,
        SlotRole::ImpurityZ => siam.mu * dt,
        SlotRole::BathZ { p } => -siam.bath[p - 1].energy * dt,
    }
}

/// Fixed-angle second-order Trotter step for `exp(-i H_SIAM dt)`.
///
/// The closing `GlobalPhase` restores the scalar dropped by implementing
/// occupation terms through `Rz`; the emitted circuit matches the exact
/// propagator to third order in `dt` including constants.
pub fn trotter_step(siam: &SiamParams, dt: f64, layout: &QubitLayout) -> Vec<Gate> {
    assert_eq!(siam.bath_sites(), layout.bath_sites());
    let mut gates: Vec<Gate> = layer_template(layout.bath_sites())
        .into_iter()
        .map(|(kind, role)| kind.bind(role_angle(role, siam, dt)))
        .collect();
    let eps_sum: f64 = siam.bath.iter().map(|s| s.energy).sum();
    gates.push(Gate::GlobalPhase { alpha: dt * (siam.mu - eps_sum) });
    gates
}

/// The Hamiltonian variational ansatz: `layers` parametrized copies of the
/// Trotter-step pattern with independent parameters per gate per layer.
pub fn hva_ansatz(spec: &AnsatzSpec) -> ParamCircuit {
    let b = spec.bath_sites;
    let mut elements = Vec::new();
    let mut slot = 0;
    for _ in 0..spec.layers {
        for (kind, _) in layer_template(b) {
            elements.push(CircuitElement::Param { kind, slot });
            slot += 1;
        }
    }
    ParamCircuit::new(2 * b + 2, elements)
}

/// Parameter vector that makes [`hva_ansatz`] act as a single Trotter step:
/// the first layer carries the step angles, all further layers are zero
/// (a zero layer telescopes to the identity).
pub fn trotter_angles(siam: &SiamParams, dt: f64, spec: &AnsatzSpec) -> Vec<f64> {
    assert_eq!(siam.bath_sites(), spec.bath_sites);
    let template = layer_template(spec.bath_sites);
    let mut angles: Vec<f64> = template
        .iter()
        .map(|(_, role)| role_angle(*role, siam, dt))
        .collect();
    angles.resize(template.len() * spec.layers, 0.0);
    angles
}

/// Ground-state initialization prefix and its bookkeeping for the reduced
/// compression cost (`x_qubits` is the set `M_ini` of wires carrying X gates).
#[derive(Debug, Clone, PartialEq)]
pub struct InitCircuit {
    pub gates: Vec<Gate>,
    pub x_qubits: Vec<usize>,
    pub label: SectorLabel,
}

/// Which excitation sector(s) an initialization targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SectorLabel {
    Definite { n_up: usize, n_down: usize },
    /// Equal-weight pair `(n_up, n_down)` and `(n_down, n_up)`.
    Superposed { n_up: usize, n_down: usize },
}

impl SectorLabel {
    pub fn total_excitations(&self) -> usize {
        match self {
            SectorLabel::Definite { n_up, n_down } | SectorLabel::Superposed { n_up, n_down } => {
                n_up + n_down
            }
        }
    }
}

/// X gates filling each sector from the impurity outward.
pub fn excitation_init(
    n_up: usize,
    n_down: usize,
    layout: &QubitLayout,
) -> Result<InitCircuit, CircuitError> {
    let b = layout.bath_sites();
    if n_up > b + 1 || n_down > b + 1 {
        return Err(CircuitError::ExcitationOutOfRange { n_up, n_down, b });
    }
    let mut x_qubits = Vec::new();
    for site in 0..n_up {
        x_qubits.push(layout.qubit(site, crate::pauli::Spin::Up));
    }
    for site in 0..n_down {
        x_qubits.push(layout.qubit(site, crate::pauli::Spin::Down));
    }
    let gates = x_qubits.iter().map(|&q| Gate::X { q }).collect();
    Ok(InitCircuit { gates, x_qubits, label: SectorLabel::Definite { n_up, n_down } })
}

/// Initialization of `(|n_up, n_down> + |n_down, n_up>)/sqrt(2)` for a
/// spin-mirrored pair with `|n_up - n_down| = 1`.
///
/// The shared excitation is created on the adjacent impurity pair by
/// `S_j fSim(pi/4, 0)_{i,j} X_i`; the common excitations go onto bath
/// qubits through plain X gates.
pub fn excitation_init_superposed(
    n_up: usize,
    n_down: usize,
    layout: &QubitLayout,
) -> Result<InitCircuit, CircuitError> {
    let b = layout.bath_sites();
    if n_up.abs_diff(n_down) != 1 {
        return Err(CircuitError::NotASuperpositionPair { n_up, n_down });
    }
    let n_min = n_up.min(n_down);
    if n_up.max(n_down) > b + 1 || n_min > b {
        return Err(CircuitError::ExcitationOutOfRange { n_up, n_down, b });
    }
    let mut gates = Vec::new();
    let mut x_qubits = Vec::new();
    for site in 1..=n_min {
        for spin in crate::pauli::Spin::BOTH {
            let q = layout.qubit(site, spin);
            gates.push(Gate::X { q });
            x_qubits.push(q);
        }
    }
    let i = layout.impurity_qubit(crate::pauli::Spin::Up);
    let j = layout.impurity_qubit(crate::pauli::Spin::Down);
    gates.push(Gate::X { q: i });
    gates.push(Gate::Fsim { a: i, b: j, theta: std::f64::consts::FRAC_PI_4, phi: 0.0 });
    gates.push(Gate::S { q: j });
    x_qubits.push(i);
    Ok(InitCircuit {
        gates,
        x_qubits,
        label: SectorLabel::Superposed { n_up: n_min + 1, n_down: n_min },
    })
}

/// One parametrized Y rotation per wire; the occupation probe for phase-1 VQE.
pub fn ry_probe_layer(layout: &QubitLayout) -> ParamCircuit {
    let n = layout.n_qubits();
    let elements = (0..n)
        .map(|q| CircuitElement::Param { kind: ParamGateKind::Ry { q }, slot: q })
        .collect();
    ParamCircuit::new(n, elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BathSite, SiamParams};
    use crate::oracle;
    use crate::pauli::{jwt_siam, Spin};
    use crate::sim::{apply_circuit_in_place, circuit_to_dense, inner, sector_probabilities};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn test_siam() -> SiamParams {
        SiamParams {
            u: 4.0,
            mu: 1.3,
            bath: vec![BathSite { energy: -0.6, coupling: 0.75 }],
        }
    }

    fn exact_propagator_dense(siam: &SiamParams, t: f64) -> nalgebra::DMatrix<Complex64> {
        let layout = QubitLayout::new(siam.bath_sites());
        let h = jwt_siam(siam, &layout);
        let spec = oracle::diagonalize(&h, &layout).unwrap();
        let dim = 1 << layout.n_qubits();
        let mut u = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        for (e, state) in spec.energies().iter().zip(spec.states()) {
            let v = nalgebra::DVector::from_column_slice(state.amps());
            u += (&v * v.adjoint()).scale(1.0) * Complex64::from_polar(1.0, -e * t);
        }
        u
    }

    #[test]
    fn trotter_error_is_third_order() {
        let siam = test_siam();
        let layout = QubitLayout::new(1);
        let err = |dt: f64| {
            let gates = trotter_step(&siam, dt, &layout);
            let u_trot = circuit_to_dense(&gates, layout.n_qubits());
            let u_exact = exact_propagator_dense(&siam, dt);
            (u_trot - u_exact).norm()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((6.0..=10.0).contains(&ratio), "halving ratio {ratio}");
    }

    #[test]
    fn pure_hopping_step_is_exact() {
        let siam = SiamParams { u: 0.0, mu: 0.0, bath: vec![BathSite { energy: 0.0, coupling: 0.8 }] };
        let layout = QubitLayout::new(1);
        let gates = trotter_step(&siam, 0.7, &layout);
        let u_trot = circuit_to_dense(&gates, layout.n_qubits());
        let u_exact = exact_propagator_dense(&siam, 0.7);
        assert!((u_trot - u_exact).norm() < 1e-12);
    }

    #[test]
    fn zero_dt_step_is_identity() {
        let siam = test_siam();
        let layout = QubitLayout::new(1);
        let gates = trotter_step(&siam, 0.0, &layout);
        let u = circuit_to_dense(&gates, layout.n_qubits());
        assert!((u - nalgebra::DMatrix::identity(16, 16)).norm() < 1e-13);
    }

    #[test]
    fn hva_two_qubit_count_is_2_plus_4b() {
        for b in 1..=4 {
            let circuit = hva_ansatz(&AnsatzSpec::new(b, 1));
            assert_eq!(circuit.two_qubit_gate_count(), 2 + 4 * b);
            let three = hva_ansatz(&AnsatzSpec::new(b, 3));
            assert_eq!(three.two_qubit_gate_count(), 3 * (2 + 4 * b));
        }
    }

    #[test]
    fn hva_zero_parameters_telescopes_to_identity() {
        let spec = AnsatzSpec::new(2, 2);
        let circuit = hva_ansatz(&spec);
        let params = vec![0.0; circuit.n_params()];
        let mut state = crate::sim::tests::random_state(6, 21);
        let original = state.clone();
        circuit.apply_to(&mut state, &params).unwrap();
        assert!((inner(&original, &state).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hva_at_trotter_angles_matches_the_step() {
        let siam = SiamParams {
            u: 4.0,
            mu: 2.0,
            bath: vec![
                BathSite { energy: -0.5, coupling: 0.6 },
                BathSite { energy: 0.7, coupling: 0.4 },
            ],
        };
        let spec = AnsatzSpec::new(2, 3);
        let layout = spec.layout();
        let circuit = hva_ansatz(&spec);
        let angles = trotter_angles(&siam, 0.1, &spec);
        let mut via_ansatz = crate::sim::tests::random_state(6, 4);
        let mut via_step = via_ansatz.clone();
        circuit.apply_to(&mut via_ansatz, &angles).unwrap();
        apply_circuit_in_place(&mut via_step, &trotter_step(&siam, 0.1, &layout)).unwrap();
        let fidelity = inner(&via_step, &via_ansatz).norm_sqr();
        assert!(1.0 - fidelity < 1e-12, "fidelity deficit {}", 1.0 - fidelity);
    }

    #[test]
    fn hva_conserves_sector_probabilities() {
        use rand::prelude::*;
        let spec = AnsatzSpec::new(2, 2);
        let layout = spec.layout();
        let circuit = hva_ansatz(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params: Vec<f64> = (0..circuit.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let init = excitation_init(2, 1, &layout).unwrap();
        let mut state = StateVectorFor(&layout);
        apply_circuit_in_place(&mut state, &init.gates).unwrap();
        circuit.apply_to(&mut state, &params).unwrap();
        let probs = sector_probabilities(&state, &layout);
        assert_abs_diff_eq!(probs[&(2, 1)], 1.0, epsilon = 1e-12);
    }

    #[allow(non_snake_case)]
    fn StateVectorFor(layout: &QubitLayout) -> crate::sim::StateVector {
        crate::sim::StateVector::zero_state(layout.n_qubits())
    }

    #[test]
    fn final_parametrized_gate_is_impurity_rzz_and_does_not_commute_with_x() {
        let spec = AnsatzSpec::new(2, 2);
        let layout = spec.layout();
        let circuit = hva_ansatz(&spec);
        let last = circuit
            .elements()
            .iter()
            .rev()
            .find_map(|e| match e {
                CircuitElement::Param { kind, .. } => Some(*kind),
                _ => None,
            })
            .unwrap();
        let (iu, id) = (layout.impurity_qubit(Spin::Up), layout.impurity_qubit(Spin::Down));
        assert_eq!(last, ParamGateKind::Rzz { a: iu, b: id });

        let rzz = circuit_to_dense(&[last.bind(0.7)], layout.n_qubits());
        let x = circuit_to_dense(&[Gate::X { q: iu }], layout.n_qubits());
        let comm = (&rzz * &x - &x * &rzz).norm();
        assert!(comm > 1e-3, "final RZZ must not commute with X, comm = {comm}");
    }

    #[test]
    fn emitted_two_qubit_gates_touch_adjacent_wires_only() {
        for b in 0..=3 {
            let siam = SiamParams {
                u: 4.0,
                mu: 1.0,
                bath: (0..b)
                    .map(|p| BathSite { energy: 0.2 * p as f64 - 0.3, coupling: 0.5 })
                    .collect(),
            };
            let layout = QubitLayout::new(b);
            for gate in trotter_step(&siam, 0.1, &layout) {
                let qs = gate.qubits();
                if qs.len() == 2 {
                    assert_eq!(qs[0].abs_diff(qs[1]), 1, "{gate:?}");
                }
            }
        }
    }

    #[test]
    fn excitation_init_examples() {
        let layout = QubitLayout::new(2);
        let empty = excitation_init(0, 0, &layout).unwrap();
        assert!(empty.gates.is_empty());

        let pair = excitation_init(1, 1, &layout).unwrap();
        assert_eq!(pair.gates.len(), 2);
        let innermost = [layout.impurity_qubit(Spin::Up), layout.impurity_qubit(Spin::Down)];
        assert_eq!(pair.x_qubits, innermost);
        let mut state = StateVectorFor(&layout);
        apply_circuit_in_place(&mut state, &pair.gates).unwrap();
        let probs = sector_probabilities(&state, &layout);
        assert_abs_diff_eq!(probs[&(1, 1)], 1.0, epsilon = 1e-15);

        assert!(excitation_init(4, 0, &layout).is_err());
    }

    #[test]
    fn superposed_init_splits_evenly() {
        let layout = QubitLayout::new(2);
        let init = excitation_init_superposed(2, 1, &layout).unwrap();
        let mut state = StateVectorFor(&layout);
        apply_circuit_in_place(&mut state, &init.gates).unwrap();
        let probs = sector_probabilities(&state, &layout);
        assert_abs_diff_eq!(probs[&(2, 1)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(probs[&(1, 2)], 0.5, epsilon = 1e-12);
        assert_eq!(init.x_qubits.len(), 3); // |M_ini| = total excitations

        assert!(excitation_init_superposed(2, 2, &layout).is_err());
    }

    #[test]
    fn superposed_pair_has_positive_relative_phase() {
        // The Appendix-C sequence produces (|1,0> + |0,1>)/sqrt(2) exactly.
        let layout = QubitLayout::new(0);
        let init = excitation_init_superposed(1, 0, &layout).unwrap();
        let mut state = StateVectorFor(&layout);
        apply_circuit_in_place(&mut state, &init.gates).unwrap();
        let i = layout.impurity_qubit(Spin::Up);
        let j = layout.impurity_qubit(Spin::Down);
        let amp_i = state.amps()[1 << i];
        let amp_j = state.amps()[1 << j];
        assert!((amp_i - Complex64::from(std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((amp_j - Complex64::from(std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn ry_probe_layer_basics() {
        let layout = QubitLayout::new(1);
        let layer = ry_probe_layer(&layout);
        assert_eq!(layer.n_params(), 4);
        let mut state = StateVectorFor(&layout);
        layer.apply_to(&mut state, &[0.0; 4]).unwrap();
        assert!((state.amps()[0].re - 1.0).abs() < 1e-15);

        let mut flipped = StateVectorFor(&layout);
        layer
            .apply_to(&mut flipped, &[std::f64::consts::PI, 0.0, 0.0, 0.0])
            .unwrap();
        let probs = sector_probabilities(&flipped, &layout);
        // Wire 0 is bath site 1 of the up sector.
        assert_abs_diff_eq!(probs[&(1, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dump_round_trip_format() {
        let spec = AnsatzSpec::new(1, 1);
        let circuit = hva_ansatz(&spec);
        let dump = circuit.dump();
        let first = dump.lines().next().unwrap();
        assert_eq!(first, "RZZ 1,2 slot:0");
        assert!(dump.lines().all(|l| !l.trim().is_empty()));

        let gates = trotter_step(&test_siam(), 0.25, &QubitLayout::new(1));
        let text = dump_gates(&gates);
        assert!(text.lines().last().unwrap().starts_with("GPHASE "));
    }
}
