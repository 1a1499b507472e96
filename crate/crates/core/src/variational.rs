//! The two optimization engines: VQE ground-state preparation and iterative
//! time-evolution compression, both driven by parameter-shift gradients.
//!
//! Ground-state preparation runs in two phases. Phase 1 trains a probe layer
//! of Y rotations in front of the ansatz and reads off the excitation
//! sectors that appear. Phase 2 re-encodes each candidate sector through a
//! fixed X-gate prefix, re-optimizes warm-started, and keeps the
//! lowest-energy setup; spin-mirrored degenerate candidates are both
//! retained.
//!
//! Compression trains `V(theta_n)` so that it acts like one more reference
//! step applied to `V(theta_{n-1})` on the two states `|GS>` and
//! `X_{0,s}|GS>` simultaneously, which pins the relative phase between them.

use crate::circuits::{
    excitation_init, excitation_init_superposed, hva_ansatz, ry_probe_layer, trotter_angles,
    trotter_step, AnsatzSpec, CircuitError, InitCircuit, ParamCircuit, ParamGateKind, SectorLabel,
};
use crate::model::SiamParams;
use crate::opt::{adam_minimize, AdamOptions, StopReason};
use crate::oracle::Spectrum;
use crate::pauli::{jwt_siam, PauliLetter, PauliString, PauliSum, QubitLayout, Spin};
use crate::sim::{
    self, apply_string, expectation, inner, sector_probabilities, Gate, SimError, StateVector,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum VariationalError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("t_max/dt = {ratio} is not an integral number of steps")]
    NonIntegralSteps { ratio: f64 },
    #[error("superposed ground state requested but no degenerate mirror sector was found")]
    NoDegenerateMirror,
}

// ---------------------------------------------------------------------------
// Parameter-shift gradients
// ---------------------------------------------------------------------------

/// Shift-rule family of a parametrized gate's generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorClass {
    /// Eigenvalues {-1, +1} after normalization (RZ, RY, and RZZ up to an
    /// identity shift): two-term rule with shifts of pi/2.
    TwoTerm,
    /// Eigenvalues {-1, 0, +1} (the XX+YY generator): four-term rule.
    FourTerm,
}

pub fn generator_class(kind: ParamGateKind) -> GeneratorClass {
    match kind {
        ParamGateKind::Rz { .. } | ParamGateKind::Ry { .. } | ParamGateKind::Rzz { .. } => {
            GeneratorClass::TwoTerm
        }
        ParamGateKind::Rxxyy { .. } => GeneratorClass::FourTerm,
    }
}

const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;
const FRAC_PI_4: f64 = std::f64::consts::FRAC_PI_4;

/// `(shift, weight)` pairs such that dC/dtheta = sum_k w_k C(theta + s_k).
fn shift_table(class: GeneratorClass) -> &'static [(f64, f64)] {
    // Four-term coefficients: d/dt = [C(+pi/4) - C(-pi/4)]
    //                              + (1 - sqrt 2)/2 [C(+pi/2) - C(-pi/2)]
    const TWO: [(f64, f64); 2] = [(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)];
    const W: f64 = -0.20710678118654757; // (1 - sqrt 2)/2
    const FOUR: [(f64, f64); 4] = [(FRAC_PI_4, 1.0), (-FRAC_PI_4, -1.0), (FRAC_PI_2, W), (-FRAC_PI_2, -W)];
    match class {
        GeneratorClass::TwoTerm => &TWO,
        GeneratorClass::FourTerm => &FOUR,
    }
}

/// Exact partial derivative of `cost` with respect to one slot.
pub fn parameter_shift_grad(
    cost: &(impl Fn(&[f64]) -> f64 + Sync),
    params: &[f64],
    slot: usize,
    class: GeneratorClass,
) -> f64 {
    let mut shifted = params.to_vec();
    shift_table(class)
        .iter()
        .map(|&(shift, weight)| {
            shifted[slot] = params[slot] + shift;
            let value = weight * cost(&shifted);
            shifted[slot] = params[slot];
            value
        })
        .sum()
}

/// Full gradient; the shifted evaluations run in parallel.
pub fn parameter_shift_gradient(
    cost: &(impl Fn(&[f64]) -> f64 + Sync),
    params: &[f64],
    kinds: &[ParamGateKind],
) -> Vec<f64> {
    let evals: Vec<(usize, f64, f64)> = kinds
        .iter()
        .enumerate()
        .flat_map(|(slot, &kind)| {
            shift_table(generator_class(kind))
                .iter()
                .map(move |&(shift, weight)| (slot, shift, weight))
        })
        .collect();
    let contributions: Vec<(usize, f64)> = evals
        .par_iter()
        .map(|&(slot, shift, weight)| {
            let mut shifted = params.to_vec();
            shifted[slot] += shift;
            (slot, weight * cost(&shifted))
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    for (slot, value) in contributions {
        grad[slot] += value;
    }
    grad
}

// ---------------------------------------------------------------------------
// Ground-state preparation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqeOptions {
    /// Optimizer budget of the phase-2 refinements.
    pub adam: AdamOptions,
    /// Optimizer budget of the phase-1 occupation probe.
    pub probe_adam: AdamOptions,
    /// Keep phase-1 sectors with at least this probability.
    pub sector_threshold: f64,
    /// Step size whose Trotter angles seed the ansatz parameters.
    pub init_dt: f64,
    /// Probe Y-rotation angles start uniformly in (-scale, scale).
    pub ry_init_scale: f64,
    pub seed: u64,
    /// Prepare the symmetric superposition of a degenerate mirrored pair.
    pub degenerate_superposition: bool,
}

impl Default for VqeOptions {
    fn default() -> Self {
        let energy_adam = AdamOptions {
            learning_rate: 0.02,
            max_iters: 1200,
            // Energies are unbounded below; only plateaus stop the run.
            cost_tol: f64::NEG_INFINITY,
            plateau_rel_tol: 1e-11,
            plateau_window: 40,
            max_decays: 6,
            decay_factor: 0.4,
            ..AdamOptions::default()
        };
        Self {
            adam: energy_adam.clone(),
            probe_adam: AdamOptions { max_iters: 400, learning_rate: 0.05, ..energy_adam },
            sector_threshold: 1e-3,
            init_dt: 0.1,
            ry_init_scale: 0.1,
            seed: 0x5eed,
            degenerate_superposition: false,
        }
    }
}

/// One phase-2 candidate: a sector with its optimized setup.
#[derive(Debug, Clone)]
pub struct SectorCandidate {
    pub label: SectorLabel,
    pub probability: f64,
    pub params: Vec<f64>,
    pub energy: f64,
    pub stagnated: bool,
}

/// The converged ground-state preparation `U_GS = U(theta) U_ini`.
#[derive(Debug, Clone)]
pub struct GroundStatePrep {
    pub ansatz_spec: AnsatzSpec,
    pub init: InitCircuit,
    pub ansatz: ParamCircuit,
    pub params: Vec<f64>,
    pub energy: f64,
    pub sector: SectorLabel,
    pub candidates: Vec<SectorCandidate>,
    pub stagnated: bool,
}

impl GroundStatePrep {
    pub fn layout(&self) -> QubitLayout {
        self.ansatz_spec.layout()
    }

    /// `U_GS |0...0>`.
    pub fn prepare(&self) -> StateVector {
        let mut state = StateVector::zero_state(self.ansatz.n_qubits());
        sim::apply_circuit_in_place(&mut state, &self.init.gates).expect("valid init");
        self.ansatz.apply_to(&mut state, &self.params).expect("valid ansatz");
        state
    }

    /// `X_{0,spin} U_GS |0...0>`.
    pub fn prepare_excited(&self, spin: Spin) -> StateVector {
        let state = self.prepare();
        apply_string(&state, &impurity_x_string(&self.layout(), spin))
    }

    /// Apply `U_GS^dag` in place.
    pub fn apply_ugs_inverse(&self, state: &mut StateVector) {
        self.ansatz.apply_inverse_to(state, &self.params).expect("valid ansatz");
        sim::apply_circuit_inverse_in_place(state, &self.init.gates).expect("valid init");
    }

    /// Full gate list of `U_GS` (initialization prefix plus bound ansatz).
    pub fn gate_list(&self) -> Vec<Gate> {
        let mut gates = self.init.gates.clone();
        gates.extend(self.ansatz.bind(&self.params));
        gates
    }

    /// The set `M_ini` of wires carrying initialization X gates.
    pub fn m_ini(&self) -> &[usize] {
        &self.init.x_qubits
    }
}

pub fn impurity_x_string(layout: &QubitLayout, spin: Spin) -> PauliString {
    PauliString::single(layout.n_qubits(), layout.impurity_qubit(spin), PauliLetter::X)
}

pub fn impurity_y_string(layout: &QubitLayout, spin: Spin) -> PauliString {
    PauliString::single(layout.n_qubits(), layout.impurity_qubit(spin), PauliLetter::Y)
}

/// VQE cost: `<state|H|state>`.
pub fn cost_ground(h: &PauliSum, state: &StateVector) -> Result<f64, SimError> {
    expectation(state, h)
}

struct EnergyObjective<'a> {
    h: &'a PauliSum,
    init_gates: &'a [Gate],
    circuit: &'a ParamCircuit,
}

impl EnergyObjective<'_> {
    fn energy(&self, params: &[f64]) -> f64 {
        let mut state = StateVector::zero_state(self.circuit.n_qubits());
        sim::apply_circuit_in_place(&mut state, self.init_gates).expect("valid init");
        self.circuit.apply_to(&mut state, params).expect("valid circuit");
        expectation(&state, self.h).expect("Hermitian Hamiltonian")
    }
}

fn minimize_energy(
    objective: &EnergyObjective<'_>,
    initial: &[f64],
    adam: &AdamOptions,
) -> crate::opt::AdamOutcome {
    let kinds = objective.circuit.slot_kinds();
    let cost = |p: &[f64]| objective.energy(p);
    adam_minimize(
        |p| {
            let grad = parameter_shift_gradient(&cost, p, &kinds);
            (cost(p), grad)
        },
        initial,
        adam,
    )
}

/// Two-phase VQE ground-state preparation.
///
/// When `warm` is given, phase 1 is skipped and the previous sector and
/// parameters seed the refinement directly (the mid-loop DMFT path).
pub fn vqe_ground_state(
    siam: &SiamParams,
    spec: &AnsatzSpec,
    options: &VqeOptions,
    warm: Option<&GroundStatePrep>,
) -> Result<GroundStatePrep, VariationalError> {
    assert_eq!(siam.bath_sites(), spec.bath_sites, "ansatz does not match bath count");
    let layout = spec.layout();
    let h = jwt_siam(siam, &layout);
    let ansatz = hva_ansatz(spec);

    let mut sector_seeds: Vec<(SectorLabel, f64, Vec<f64>)> = Vec::new();
    if let Some(prev) = warm {
        sector_seeds.push((prev.sector, 1.0, prev.params.clone()));
    } else {
        // Phase 1: probe occupations with a leading RY layer.
        let probe = ry_probe_layer(&layout).then(&ansatz);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
        let n_ry = layout.n_qubits();
        let mut init = Vec::with_capacity(probe.n_params());
        for _ in 0..n_ry {
            init.push(rng.gen_range(-options.ry_init_scale..options.ry_init_scale));
        }
        init.extend(trotter_angles(siam, options.init_dt, spec));
        let objective = EnergyObjective { h: &h, init_gates: &[], circuit: &probe };
        let outcome = minimize_energy(&objective, &init, &options.probe_adam);

        let mut probed = StateVector::zero_state(layout.n_qubits());
        probe.apply_to(&mut probed, &outcome.params).expect("valid probe");
        let mut sectors: Vec<((usize, usize), f64)> = sector_probabilities(&probed, &layout)
            .into_iter()
            .filter(|(_, p)| *p >= options.sector_threshold)
            .collect();
        sectors.sort_by(|a, b| b.1.total_cmp(&a.1));
        sectors.truncate(6);
        if sectors.is_empty() {
            sectors.push(((0, 0), 1.0));
        }
        let hva_part = outcome.params[n_ry..].to_vec();
        for ((n_up, n_down), p) in sectors {
            sector_seeds.push((SectorLabel::Definite { n_up, n_down }, p, hva_part.clone()));
        }
    }

    // Phase 2: fixed excitation prefixes, warm-started refinement.
    let mut candidates = Vec::new();
    for (label, probability, seed_params) in sector_seeds {
        let init = match label {
            SectorLabel::Definite { n_up, n_down } => excitation_init(n_up, n_down, &layout)?,
            SectorLabel::Superposed { n_up, n_down } => {
                excitation_init_superposed(n_up, n_down, &layout)?
            }
        };
        let objective = EnergyObjective { h: &h, init_gates: &init.gates, circuit: &ansatz };
        let outcome = minimize_energy(&objective, &seed_params, &options.adam);
        candidates.push(SectorCandidate {
            label: init.label,
            probability,
            params: outcome.params,
            energy: outcome.cost,
            stagnated: outcome.stop_reason == StopReason::MaxIters,
        });
    }
    candidates.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| sector_sort_key(a.label).cmp(&sector_sort_key(b.label)))
    });

    if options.degenerate_superposition {
        let winner = candidates[0].label;
        let has_mirror = candidates.iter().skip(1).any(|c| {
            is_mirror(winner, c.label) && (c.energy - candidates[0].energy).abs() < 1e-6
        });
        if has_mirror {
            if let SectorLabel::Definite { n_up, n_down } = winner {
                let (hi, lo) = (n_up.max(n_down), n_up.min(n_down));
                let init = excitation_init_superposed(hi, lo, &layout)?;
                let objective = EnergyObjective { h: &h, init_gates: &init.gates, circuit: &ansatz };
                let outcome = minimize_energy(&objective, &candidates[0].params, &options.adam);
                candidates.insert(
                    0,
                    SectorCandidate {
                        label: init.label,
                        probability: candidates[0].probability,
                        params: outcome.params,
                        energy: outcome.cost,
                        stagnated: outcome.stop_reason == StopReason::MaxIters,
                    },
                );
            }
        } else if !is_self_mirror(winner) {
            return Err(VariationalError::NoDegenerateMirror);
        }
    }

    let winner = candidates[0].clone();
    let init = match winner.label {
        SectorLabel::Definite { n_up, n_down } => excitation_init(n_up, n_down, &layout)?,
        SectorLabel::Superposed { n_up, n_down } => {
            excitation_init_superposed(n_up, n_down, &layout)?
        }
    };
    Ok(GroundStatePrep {
        ansatz_spec: *spec,
        init,
        ansatz,
        params: winner.params.clone(),
        energy: winner.energy,
        sector: winner.label,
        stagnated: winner.stagnated,
        candidates,
    })
}

fn sector_sort_key(label: SectorLabel) -> (usize, usize, usize) {
    match label {
        SectorLabel::Definite { n_up, n_down } => (0, n_up, n_down),
        SectorLabel::Superposed { n_up, n_down } => (1, n_up, n_down),
    }
}

fn is_mirror(a: SectorLabel, b: SectorLabel) -> bool {
    match (a, b) {
        (SectorLabel::Definite { n_up: a1, n_down: a2 }, SectorLabel::Definite { n_up: b1, n_down: b2 }) => {
            a1 == b2 && a2 == b1 && a1 != a2
        }
        _ => false,
    }
}

fn is_self_mirror(label: SectorLabel) -> bool {
    matches!(label, SectorLabel::Definite { n_up, n_down } if n_up == n_down)
}

// ---------------------------------------------------------------------------
// Time-evolution compression
// ---------------------------------------------------------------------------

/// Reference propagator used to extend the compression by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Trotter,
    Exact,
}

/// A bound single-step reference: either a Trotter gate list or the exact
/// propagator applied through the spectrum.
pub struct EvolutionReference {
    op: RefOp,
    dt: f64,
}

enum RefOp {
    Gates(Vec<Gate>),
    Spectrum(Box<Spectrum>),
}

impl EvolutionReference {
    pub fn trotter(siam: &SiamParams, dt: f64, layout: &QubitLayout) -> Self {
        Self { op: RefOp::Gates(trotter_step(siam, dt, layout)), dt }
    }

    pub fn exact(siam: &SiamParams, dt: f64, layout: &QubitLayout) -> Result<Self, VariationalError> {
        let spectrum = crate::oracle::diagonalize(&jwt_siam(siam, layout), layout)?;
        Ok(Self { op: RefOp::Spectrum(Box::new(spectrum)), dt })
    }

    pub fn kind(&self) -> ReferenceKind {
        match self.op {
            RefOp::Gates(_) => ReferenceKind::Trotter,
            RefOp::Spectrum(_) => ReferenceKind::Exact,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One forward step.
    pub fn apply(&self, state: &mut StateVector) {
        match &self.op {
            RefOp::Gates(gates) => sim::apply_circuit_in_place(state, gates).expect("valid step"),
            RefOp::Spectrum(spec) => *state = crate::oracle::exact_propagate(spec, state, self.dt),
        }
    }

    /// One inverse step.
    pub fn apply_inverse(&self, state: &mut StateVector) {
        match &self.op {
            RefOp::Gates(gates) => {
                sim::apply_circuit_inverse_in_place(state, gates).expect("valid step")
            }
            RefOp::Spectrum(spec) => *state = crate::oracle::exact_propagate(spec, state, -self.dt),
        }
    }
}

/// Which reduction of the compression cost to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFlavor {
    /// `1 - Re(<GS|L^dag|GS><GS|K|GS>)`.
    Global,
    /// The reduced three-block form; the `sum_pq Z` block is omitted at
    /// half filling where it vanishes identically.
    LocalFinal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionOptions {
    pub adam: AdamOptions,
    pub flavor: CostFlavor,
    /// Impurity spin whose excited state enters the training pair.
    pub spin: Spin,
    pub record_fidelity: bool,
    /// Abort the step loop once the fidelity drops below this bound.
    pub stop_below_fidelity: Option<f64>,
}

impl Default for CompressionOptions {
    fn default() -> Self {
        Self {
            adam: AdamOptions::default(),
            flavor: CostFlavor::LocalFinal,
            spin: Spin::Up,
            record_fidelity: true,
            stop_below_fidelity: None,
        }
    }
}

/// Everything fixed during one compression step's optimization.
struct CostEvaluator<'a> {
    ansatz: &'a ParamCircuit,
    prev_params: &'a [f64],
    reference: &'a EvolutionReference,
    gs: &'a GroundStatePrep,
    gs_state: &'a StateVector,
    x_gs_state: &'a StateVector,
    x_string: PauliString,
    flavor: CostFlavor,
    m_ini_mask: usize,
    m_ini_len: usize,
    /// `B + 1 = |M_ini|`: the sector-sum block vanishes identically.
    half_filled: bool,
    n_qubits: usize,
}

impl<'a> CostEvaluator<'a> {
    fn new(
        ansatz: &'a ParamCircuit,
        prev_params: &'a [f64],
        reference: &'a EvolutionReference,
        gs: &'a GroundStatePrep,
        gs_state: &'a StateVector,
        x_gs_state: &'a StateVector,
        spin: Spin,
        flavor: CostFlavor,
    ) -> Self {
        let layout = gs.layout();
        let m_ini_mask = gs.m_ini().iter().fold(0usize, |m, q| m | (1 << q));
        let m_ini_len = gs.m_ini().len();
        Self {
            ansatz,
            prev_params,
            reference,
            gs,
            gs_state,
            x_gs_state,
            x_string: impurity_x_string(&layout, spin),
            flavor,
            m_ini_mask,
            m_ini_len,
            half_filled: m_ini_len == layout.bath_sites() + 1,
            n_qubits: layout.n_qubits(),
        }
    }

    /// `a = L_n|GS>` and `b = L_n X|GS>` with
    /// `L_n = V^dag(prev) U_ref^dag V(params)`.
    fn training_states(&self, params: &[f64]) -> (StateVector, StateVector) {
        let mut a = self.gs_state.clone();
        self.ansatz.apply_to(&mut a, params).expect("valid ansatz");
        self.reference.apply_inverse(&mut a);
        self.ansatz.apply_inverse_to(&mut a, self.prev_params).expect("valid ansatz");
        let mut b = self.x_gs_state.clone();
        self.ansatz.apply_to(&mut b, params).expect("valid ansatz");
        self.reference.apply_inverse(&mut b);
        self.ansatz.apply_inverse_to(&mut b, self.prev_params).expect("valid ansatz");
        (a, b)
    }

    fn cost(&self, params: &[f64]) -> f64 {
        let (a, b) = self.training_states(params);
        match self.flavor {
            CostFlavor::Global => {
                let l_overlap = inner(&a, self.gs_state);
                let k_overlap = inner(self.x_gs_state, &b);
                1.0 - (l_overlap * k_overlap).re
            }
            CostFlavor::LocalFinal => {
                let xb = apply_string(&b, &self.x_string);
                // Block one: 1 - Re<GS|L^dag K|GS>.
                let mut cost = 1.0 - inner(&a, &xb).re;
                if !self.half_filled {
                    // Sector-sum block, with the 1/2 weight restored so the
                    // block vanishes at the optimum away from half filling.
                    let mut zsum = 0.0;
                    for (i, (ai, xbi)) in a.amps().iter().zip(xb.amps()).enumerate() {
                        let eig = self.n_qubits as f64 - 2.0 * i.count_ones() as f64;
                        zsum += (ai.conj() * xbi).re * eig;
                    }
                    cost += (self.n_qubits / 2) as f64 - self.m_ini_len as f64 - 0.5 * zsum;
                }
                // Dressed block over M_ini.
                let mut at = a;
                self.gs.apply_ugs_inverse(&mut at);
                let mut bt = xb;
                self.gs.apply_ugs_inverse(&mut bt);
                let mut dressed = 0.0;
                for (i, (ai, bi)) in at.amps().iter().zip(bt.amps()).enumerate() {
                    let eig = self.m_ini_len as f64 - 2.0 * (i & self.m_ini_mask).count_ones() as f64;
                    dressed += (ai.conj() * bi).re * eig;
                }
                cost += self.m_ini_len as f64 - dressed;
                cost
            }
        }
    }
}

/// Evaluate one compression cost value; the standalone entry point used by
/// tests and diagnostics (the step loop keeps an evaluator alive instead).
pub fn compression_cost(
    params_n: &[f64],
    params_prev: &[f64],
    reference: &EvolutionReference,
    gs: &GroundStatePrep,
    spec: &AnsatzSpec,
    spin: Spin,
    flavor: CostFlavor,
) -> f64 {
    let gs_state = gs.prepare();
    let x_gs_state = gs.prepare_excited(spin);
    let ansatz = hva_ansatz(spec);
    CostEvaluator::new(&ansatz, params_prev, reference, gs, &gs_state, &x_gs_state, spin, flavor)
        .cost(params_n)
}

/// Phase-alignment diagnostics of a trained step (Appendix-style check):
/// both overlaps near one and the product phase near zero.
#[derive(Debug, Clone, Copy)]
pub struct PhaseAlignment {
    pub l_overlap: f64,
    pub k_overlap: f64,
    pub product_phase: f64,
}

pub fn phase_alignment(
    ansatz: &ParamCircuit,
    params_n: &[f64],
    params_prev: &[f64],
    reference: &EvolutionReference,
    gs: &GroundStatePrep,
    spin: Spin,
) -> PhaseAlignment {
    let gs_state = gs.prepare();
    let x_gs_state = gs.prepare_excited(spin);
    let evaluator = CostEvaluator::new(
        ansatz,
        params_prev,
        reference,
        gs,
        &gs_state,
        &x_gs_state,
        spin,
        CostFlavor::Global,
    );
    let (a, b) = evaluator.training_states(params_n);
    let l = inner(&a, &gs_state);
    let k = inner(&x_gs_state, &b);
    PhaseAlignment { l_overlap: l.norm(), k_overlap: k.norm(), product_phase: (l * k).arg() }
}

/// Per-step record of a compression run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionStepRecord {
    pub n: usize,
    pub t: f64,
    pub cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    pub params: Vec<f64>,
}

/// Output of [`compress_evolution`]: one parameter vector per time step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionTrace {
    pub dt: f64,
    pub ansatz_spec: AnsatzSpec,
    pub spin: Spin,
    /// `params_per_step[0]` corresponds to `t = dt`.
    pub params_per_step: Vec<Vec<f64>>,
    pub cost_per_step: Vec<f64>,
    /// Cost at the warm-start point of each step, before optimization.
    pub cost_init_per_step: Vec<f64>,
    pub fidelity_per_step: Option<Vec<f64>>,
    /// Steps whose optimizer ended above the cost tolerance.
    pub stagnated_steps: Vec<usize>,
}

impl CompressionTrace {
    pub fn n_steps(&self) -> usize {
        self.params_per_step.len()
    }

    /// Parameters of `V(theta_n)`, `n >= 1`.
    pub fn params_at(&self, n: usize) -> &[f64] {
        &self.params_per_step[n - 1]
    }

    pub fn min_fidelity(&self) -> Option<f64> {
        self.fidelity_per_step
            .as_ref()
            .map(|f| f.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn to_records(&self) -> Vec<CompressionStepRecord> {
        (0..self.n_steps())
            .map(|i| CompressionStepRecord {
                n: i + 1,
                t: (i + 1) as f64 * self.dt,
                cost: self.cost_per_step[i],
                fidelity: self.fidelity_per_step.as_ref().map(|f| f[i]),
                params: self.params_per_step[i].clone(),
            })
            .collect()
    }
}

/// Iteratively train `V(theta_n) ~ (U_ref(dt))^n` on the ground-state pair.
///
/// `theta_1` starts from the single-step Trotter angles; every later step
/// warm-starts from `theta_{n-1}`, or from the matching step of `warm`
/// (the previous DMFT iteration) when that evaluates cheaper.
pub fn compress_evolution(
    siam: &SiamParams,
    gs: &GroundStatePrep,
    spec: &AnsatzSpec,
    dt: f64,
    t_max: f64,
    reference_kind: ReferenceKind,
    options: &CompressionOptions,
    warm: Option<&CompressionTrace>,
) -> Result<CompressionTrace, VariationalError> {
    assert_eq!(spec.bath_sites, gs.ansatz_spec.bath_sites);
    let layout = spec.layout();
    let ratio = t_max / dt;
    let n_steps = ratio.round() as usize;
    if (ratio - n_steps as f64).abs() > 1e-9 || n_steps == 0 {
        return Err(VariationalError::NonIntegralSteps { ratio });
    }
    let reference = match reference_kind {
        ReferenceKind::Trotter => EvolutionReference::trotter(siam, dt, &layout),
        ReferenceKind::Exact => EvolutionReference::exact(siam, dt, &layout)?,
    };
    let ansatz = hva_ansatz(spec);
    let kinds = ansatz.slot_kinds();
    let spin = options.spin;
    let gs_state = gs.prepare();
    let x_gs_state = gs.prepare_excited(spin);

    let mut params_prev = vec![0.0; ansatz.n_params()];
    let mut trace = CompressionTrace {
        dt,
        ansatz_spec: *spec,
        spin,
        params_per_step: Vec::with_capacity(n_steps),
        cost_per_step: Vec::with_capacity(n_steps),
        cost_init_per_step: Vec::with_capacity(n_steps),
        fidelity_per_step: options.record_fidelity.then(Vec::new),
        stagnated_steps: Vec::new(),
    };
    // Reference-evolved X|GS> for the fidelity diagnostic.
    let mut ref_excited = x_gs_state.clone();

    for n in 1..=n_steps {
        let evaluator = CostEvaluator::new(
            &ansatz,
            &params_prev,
            &reference,
            gs,
            &gs_state,
            &x_gs_state,
            spin,
            options.flavor,
        );
        let cost_fn = |p: &[f64]| evaluator.cost(p);

        let mut start = if n == 1 { trotter_angles(siam, dt, spec) } else { params_prev.clone() };
        let mut start_cost = cost_fn(&start);
        if let Some(prev_trace) = warm {
            if prev_trace.n_steps() >= n && prev_trace.ansatz_spec == *spec {
                let alt = prev_trace.params_at(n);
                let alt_cost = cost_fn(alt);
                if alt_cost < start_cost {
                    start = alt.to_vec();
                    start_cost = alt_cost;
                }
            }
        }

        let outcome = adam_minimize(
            |p| {
                let grad = parameter_shift_gradient(&cost_fn, p, &kinds);
                (cost_fn(p), grad)
            },
            &start,
            &options.adam,
        );
        if outcome.cost >= options.adam.cost_tol {
            trace.stagnated_steps.push(n);
        }

        if options.record_fidelity || options.stop_below_fidelity.is_some() {
            reference.apply(&mut ref_excited);
            let mut compressed = x_gs_state.clone();
            ansatz.apply_to(&mut compressed, &outcome.params).expect("valid ansatz");
            let fidelity = inner(&ref_excited, &compressed).norm_sqr();
            if let Some(f) = trace.fidelity_per_step.as_mut() {
                f.push(fidelity);
            }
            if let Some(bound) = options.stop_below_fidelity {
                if fidelity < bound {
                    trace.params_per_step.push(outcome.params.clone());
                    trace.cost_per_step.push(outcome.cost);
                    trace.cost_init_per_step.push(start_cost);
                    break;
                }
            }
        }
        trace.cost_per_step.push(outcome.cost);
        trace.cost_init_per_step.push(start_cost);
        params_prev = outcome.params.clone();
        trace.params_per_step.push(outcome.params);
    }
    Ok(trace)
}
