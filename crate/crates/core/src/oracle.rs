//! Exact-diagonalization ground truth: dense spectra, exact propagators,
//! exact Lehmann parameters and a fully classical reference DMFT solver.
//!
//! Number-conserving Hamiltonians are diagonalized per `(n_up, n_down)`
//! sector, which resolves degenerate ground states into definite-sector
//! members deterministically.

use crate::greens::{LehmannPole, LehmannSet};
use crate::model::{HubbardParams, MatsubaraGrid};
use crate::pauli::{PauliSum, QubitLayout, Spin};
use crate::sim::StateVector;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Absolute gap below which two eigenvalues count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Pauli(#[from] crate::pauli::PauliError),
    #[error("spectrum and layout disagree on qubit count")]
    LayoutMismatch,
}

/// Which member of a (possibly degenerate) ground space to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroundStateChoice {
    /// The first ground state in the deterministic ordering.
    #[default]
    Single,
    /// `(|g0> + |g1>)/sqrt(2)` when the ground state is twofold degenerate.
    SymmetricSuperposition,
}

/// Full spectrum with deterministic eigenvector gauge.
#[derive(Debug, Clone)]
pub struct Spectrum {
    energies: Vec<f64>,
    states: Vec<StateVector>,
    /// `(n_up, n_down)` per eigenstate when the Hamiltonian is number conserving.
    sectors: Option<Vec<(usize, usize)>>,
    ground_degenerate: bool,
    n_qubits: usize,
}

impl Spectrum {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn sectors(&self) -> Option<&[(usize, usize)]> {
        self.sectors.as_deref()
    }

    pub fn ground_degenerate(&self) -> bool {
        self.ground_degenerate
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ground_state(&self, choice: GroundStateChoice) -> StateVector {
        match choice {
            GroundStateChoice::Single => self.states[0].clone(),
            GroundStateChoice::SymmetricSuperposition => {
                if !self.ground_degenerate {
                    return self.states[0].clone();
                }
                let a = self.states[0].amps();
                let b = self.states[1].amps();
                let amps: Vec<Complex64> = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x + y) * std::f64::consts::FRAC_1_SQRT_2)
                    .collect();
                StateVector::from_amplitudes(amps).expect("orthonormal superposition")
            }
        }
    }

    pub fn ground_sector(&self, choice: GroundStateChoice) -> Option<(usize, usize)> {
        match choice {
            GroundStateChoice::Single => self.sectors.as_ref().map(|s| s[0]),
            GroundStateChoice::SymmetricSuperposition => None,
        }
    }
}

fn gauge_fix(v: &mut DVector<Complex64>) {
    let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().find(|c| c.norm() > 1e-8 * max) {
        let phase = lead / lead.norm();
        let correction = phase.conj();
        for c in v.iter_mut() {
            *c *= correction;
        }
    }
}

/// Full dense diagonalization with sector resolution where possible.
pub fn diagonalize(h: &PauliSum, layout: &QubitLayout) -> Result<Spectrum, OracleError> {
    let n_qubits = h.n_qubits();
    let dense = h.to_dense()?;
    let dim = dense.nrows();

    let up_mask = layout.up_mask();
    let down_mask = layout.down_mask();
    let sector_of = |i: usize| ((i & up_mask).count_ones() as usize, (i & down_mask).count_ones() as usize);

    let sector_diagonal = n_qubits == layout.n_qubits()
        && (0..dim).all(|r| {
            (0..dim).all(|c| sector_of(r) == sector_of(c) || dense[(r, c)].norm() < 1e-14)
        });

    let mut eigs: Vec<(f64, DVector<Complex64>, Option<(usize, usize)>)> = Vec::with_capacity(dim);
    if sector_diagonal {
        let mut indices_by_sector: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            std::collections::BTreeMap::new();
        for i in 0..dim {
            indices_by_sector.entry(sector_of(i)).or_default().push(i);
        }
        for (sector, indices) in indices_by_sector {
            let k = indices.len();
            let block = DMatrix::from_fn(k, k, |r, c| dense[(indices[r], indices[c])]);
            let se = block.symmetric_eigen();
            for j in 0..k {
                let mut full = DVector::zeros(dim);
                for (r, &i) in indices.iter().enumerate() {
                    full[i] = se.eigenvectors[(r, j)];
                }
                eigs.push((se.eigenvalues[j], full, Some(sector)));
            }
        }
    } else {
        let se = dense.symmetric_eigen();
        for j in 0..dim {
            eigs.push((se.eigenvalues[j], se.eigenvectors.column(j).into_owned(), None));
        }
    }

    // Ascending energy; degenerate clusters ordered by sector for determinism.
    eigs.sort_by(|a, b| {
        if (a.0 - b.0).abs() > DEGENERACY_TOL {
            a.0.total_cmp(&b.0)
        } else {
            a.2.cmp(&b.2).then(a.0.total_cmp(&b.0))
        }
    });

    let mut energies = Vec::with_capacity(dim);
    let mut states = Vec::with_capacity(dim);
    let mut sectors = Vec::with_capacity(dim);
    for (e, mut v, sector) in eigs {
        gauge_fix(&mut v);
        energies.push(e);
        states.push(StateVector::from_amplitudes(v.iter().copied().collect()).expect("unit eigenvector"));
        if let Some(s) = sector {
            sectors.push(s);
        }
    }
    let ground_degenerate = dim > 1 && (energies[1] - energies[0]).abs() < DEGENERACY_TOL;
    Ok(Spectrum {
        energies,
        states,
        sectors: sector_diagonal.then_some(sectors),
        ground_degenerate,
        n_qubits,
    })
}

/// `exp(-i H t)|state>` through the spectral decomposition.
pub fn exact_propagate(spec: &Spectrum, state: &StateVector, t: f64) -> StateVector {
    assert_eq!(spec.n_qubits, state.n_qubits(), "qubit count mismatch");
    let dim = state.amps().len();
    let mut out = vec![Complex64::ZERO; dim];
    for (energy, eigstate) in spec.energies.iter().zip(&spec.states) {
        let overlap = crate::sim::inner(eigstate, state);
        if overlap.norm_sqr() < 1e-30 {
            continue;
        }
        let phase = Complex64::from_polar(1.0, -energy * t) * overlap;
        for (o, a) in out.iter_mut().zip(eigstate.amps()) {
            *o += phase * a;
        }
    }
    StateVector::from_amplitudes(out).expect("unitary propagation")
}

/// Unnormalized `d^dag_{0,spin} |state>` amplitudes (impurity creation).
///
/// No inter-sector parity string is attached; every consumer uses either
/// squared matrix elements or string-paired products, where the sign cancels.
pub fn impurity_creation_amps(state: &StateVector, layout: &QubitLayout, spin: Spin) -> Vec<Complex64> {
    let bit = 1usize << layout.impurity_qubit(spin);
    let mut out = vec![Complex64::ZERO; state.amps().len()];
    for (i, amp) in state.amps().iter().enumerate() {
        if i & bit == 0 {
            out[i | bit] = *amp;
        }
    }
    out
}

/// Unnormalized `d_{0,spin} |state>` amplitudes (impurity annihilation).
pub fn impurity_annihilation_amps(state: &StateVector, layout: &QubitLayout, spin: Spin) -> Vec<Complex64> {
    let bit = 1usize << layout.impurity_qubit(spin);
    let mut out = vec![Complex64::ZERO; state.amps().len()];
    for (i, amp) in state.amps().iter().enumerate() {
        if i & bit != 0 {
            out[i & !bit] = *amp;
        }
    }
    out
}

/// Exact Lehmann parameters of the impurity Green's function.
///
/// `alpha_j = |<j|c^dag|GS>|^2`, `beta_j = |<j|c|GS>|^2`, `omega_j = E_j - E_GS`;
/// poles with `alpha + beta < 1e-12` are dropped and coincident frequencies
/// are merged.
pub fn exact_lehmann(
    spec: &Spectrum,
    layout: &QubitLayout,
    spin: Spin,
    choice: GroundStateChoice,
) -> LehmannSet {
    let gs = spec.ground_state(choice);
    let e_gs = spec.ground_energy();
    let created = impurity_creation_amps(&gs, layout, spin);
    let annihilated = impurity_annihilation_amps(&gs, layout, spin);

    let mut poles: Vec<LehmannPole> = Vec::new();
    for (energy, eigstate) in spec.energies.iter().zip(&spec.states) {
        let alpha = eigstate
            .amps()
            .iter()
            .zip(&created)
            .map(|(e, c)| e.conj() * c)
            .sum::<Complex64>()
            .norm_sqr();
        let beta = eigstate
            .amps()
            .iter()
            .zip(&annihilated)
            .map(|(e, c)| e.conj() * c)
            .sum::<Complex64>()
            .norm_sqr();
        if alpha + beta < 1e-12 {
            continue;
        }
        let omega = (energy - e_gs).max(0.0);
        if let Some(pole) = poles.iter_mut().find(|p| (p.omega - omega).abs() < DEGENERACY_TOL) {
            pole.alpha += alpha;
            pole.beta += beta;
        } else {
            poles.push(LehmannPole { omega, alpha, beta });
        }
    }
    poles.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    LehmannSet::new(poles)
}

/// Impurity occupation `<n_{0,up}> + <n_{0,down}>` in the chosen ground state.
pub fn impurity_filling(spec: &Spectrum, layout: &QubitLayout, choice: GroundStateChoice) -> f64 {
    let gs = spec.ground_state(choice);
    Spin::BOTH
        .iter()
        .map(|&spin| {
            let bit = 1usize << layout.impurity_qubit(spin);
            gs.amps()
                .iter()
                .enumerate()
                .filter(|(i, _)| i & bit != 0)
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
        })
        .sum()
}

/// Classical reference DMFT loop: the full orchestration of [`crate::dmft::run_dmft`]
/// with the exact-diagonalization impurity solver.
pub fn reference_dmft(
    hubbard: &HubbardParams,
    bath_sites: usize,
    grid: &MatsubaraGrid,
    cfg: &crate::dmft::DmftLoopSettings,
) -> Result<crate::dmft::DmftHistory, crate::dmft::DmftError> {
    let config = crate::dmft::DmftConfig {
        hubbard: *hubbard,
        bath_sites,
        grid: grid.clone(),
        solver: crate::dmft::SolverKind::Exact,
        loop_settings: cfg.clone(),
        ..crate::dmft::DmftConfig::reference_defaults(*hubbard, bath_sites, grid.clone())
    };
    crate::dmft::run_dmft(&config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BathSite, SiamParams};
    use crate::pauli::jwt_siam;
    use approx::assert_abs_diff_eq;

    fn spectrum_of(siam: &SiamParams) -> (Spectrum, QubitLayout) {
        let layout = QubitLayout::new(siam.bath_sites());
        let h = jwt_siam(siam, &layout);
        (diagonalize(&h, &layout).unwrap(), layout)
    }

    #[test]
    fn atomic_limit_spectrum() {
        let siam = SiamParams { u: 4.0, mu: 2.0, bath: vec![] };
        let (spec, _) = spectrum_of(&siam);
        let expected = [-2.0, -2.0, 0.0, 0.0];
        for (e, want) in spec.energies().iter().zip(expected) {
            assert_abs_diff_eq!(*e, want, epsilon = 1e-12);
        }
        assert!(spec.ground_degenerate());
        // Degenerate ground pair differs by a spin flip.
        let sectors = spec.sectors().unwrap();
        assert_eq!(sectors[0], (sectors[1].1, sectors[1].0));
        assert_ne!(sectors[0], sectors[1]);
    }

    #[test]
    fn identity_hamiltonian_spectrum_is_flat() {
        let layout = QubitLayout::new(0);
        let h = PauliSum::identity(2, 1.25);
        let spec = diagonalize(&h, &layout).unwrap();
        assert!(spec.energies().iter().all(|e| (e - 1.25).abs() < 1e-12));
    }

    #[test]
    fn eigenpairs_satisfy_h_psi_eq_e_psi() {
        let siam = SiamParams {
            u: 3.0,
            mu: 1.0,
            bath: vec![BathSite { energy: -0.4, coupling: 0.7 }],
        };
        let layout = QubitLayout::new(1);
        let h = jwt_siam(&siam, &layout);
        let dense = h.to_dense().unwrap();
        let spec = diagonalize(&h, &layout).unwrap();
        for (e, state) in spec.energies().iter().zip(spec.states()) {
            let v = DVector::from_column_slice(state.amps());
            let res = (&dense * &v - v.scale(*e)).norm();
            assert!(res < 1e-10, "residual {res}");
        }
        // Orthonormality.
        for (i, a) in spec.states().iter().enumerate() {
            for (j, b) in spec.states().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((crate::sim::inner(a, b).norm() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn propagation_group_properties() {
        let siam = SiamParams {
            u: 2.0,
            mu: 0.7,
            bath: vec![BathSite { energy: 0.5, coupling: 0.6 }],
        };
        let (spec, _) = spectrum_of(&siam);
        let psi = crate::sim::StateVector::basis_state(4, 0b0101);
        let same = exact_propagate(&spec, &psi, 0.0);
        assert!((crate::sim::inner(&psi, &same).re - 1.0).abs() < 1e-12);

        let one = exact_propagate(&spec, &psi, 0.8);
        let two = exact_propagate(&spec, &one, 0.5);
        let direct = exact_propagate(&spec, &psi, 1.3);
        assert!((crate::sim::inner(&two, &direct).norm() - 1.0).abs() < 1e-12);

        // Eigenstate picks up only a phase.
        let eig = spec.states()[2].clone();
        let moved = exact_propagate(&spec, &eig, 2.3);
        assert!((crate::sim::inner(&eig, &moved).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_matches_dense_exponential() {
        use nalgebra::DMatrix;
        let siam = SiamParams {
            u: 1.5,
            mu: 0.3,
            bath: vec![
                BathSite { energy: -0.9, coupling: 0.4 },
                BathSite { energy: 0.2, coupling: 0.8 },
            ],
        };
        let layout = QubitLayout::new(2);
        let h = jwt_siam(&siam, &layout);
        let spec = diagonalize(&h, &layout).unwrap();
        let t = 0.9;
        // exp(-iHt) via scaling-and-squaring on the dense matrix.
        let dense = h.to_dense().unwrap() * Complex64::new(0.0, -t);
        let dim = dense.nrows();
        let steps = 32u32;
        let small = dense / Complex64::from(f64::from(2u32.pow(steps)));
        let mut expm = DMatrix::<Complex64>::identity(dim, dim);
        let mut term = DMatrix::<Complex64>::identity(dim, dim);
        for k in 1..=12 {
            term = &term * &small / Complex64::from(k as f64);
            expm += &term;
        }
        for _ in 0..steps {
            expm = &expm * &expm;
        }
        let psi = super::super::sim::tests::random_state(6, 17);
        let via_matrix = expm * DVector::from_column_slice(psi.amps());
        let via_spectrum = exact_propagate(&spec, &psi, t);
        let overlap: Complex64 = via_matrix
            .iter()
            .zip(via_spectrum.amps())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!(1.0 - overlap.norm() < 1e-10, "fidelity deficit {}", 1.0 - overlap.norm());
    }

    #[test]
    fn lehmann_sum_rule_and_free_impurity() {
        let free = SiamParams { u: 0.0, mu: 0.0, bath: vec![] };
        let (spec, layout) = spectrum_of(&free);
        let set = exact_lehmann(&spec, &layout, Spin::Up, GroundStateChoice::Single);
        assert_eq!(set.poles().len(), 1);
        assert_abs_diff_eq!(set.poles()[0].omega, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(set.total_weight(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lehmann_weights_complete_and_roots_at_bath_energies() {
        let siam = SiamParams {
            u: 4.0,
            mu: 2.0,
            bath: vec![
                BathSite { energy: -0.6, coupling: 0.55 },
                BathSite { energy: 0.6, coupling: 0.55 },
            ],
        };
        let (spec, layout) = spectrum_of(&siam);
        let set = exact_lehmann(&spec, &layout, Spin::Up, GroundStateChoice::Single);
        assert_abs_diff_eq!(set.total_weight(), 1.0, epsilon = 1e-10);
        // G(omega = eps_p) = 0 at every bath energy.
        for site in &siam.bath {
            let g: f64 = set
                .poles()
                .iter()
                .map(|p| p.alpha / (site.energy - p.omega) + p.beta / (site.energy + p.omega))
                .sum();
            assert!(g.abs() < 1e-9, "G(eps={}) = {g}", site.energy);
        }
        // Particle-hole symmetry at mu = U/2 with mirrored bath: alpha(w) = beta(w).
        for pole in set.poles() {
            assert_abs_diff_eq!(pole.alpha, pole.beta, epsilon = 1e-9);
        }
    }

    #[test]
    fn lehmann_reconstruction_matches_propagation() {
        let siam = SiamParams {
            u: 4.0,
            mu: 1.2,
            bath: vec![
                BathSite { energy: -0.8, coupling: 0.5 },
                BathSite { energy: 0.4, coupling: 0.6 },
            ],
        };
        let (spec, layout) = spectrum_of(&siam);
        let set = exact_lehmann(&spec, &layout, Spin::Up, GroundStateChoice::Single);
        let gs = spec.ground_state(GroundStateChoice::Single);
        let e_gs = spec.ground_energy();

        let created = impurity_creation_amps(&gs, &layout, Spin::Up);
        let annihilated = impurity_annihilation_amps(&gs, &layout, Spin::Up);
        let mut t = 0.0;
        while t <= 50.0 {
            // <GS| c(t) c^dag |GS> = e^{i E_GS t} <u| e^{-iHt} |u>, u = c^dag|GS>
            let mut particle = Complex64::ZERO;
            let mut hole = Complex64::ZERO;
            for (energy, eigstate) in spec.energies().iter().zip(spec.states()) {
                let cu: Complex64 = eigstate.amps().iter().zip(&created).map(|(e, c)| e.conj() * c).sum();
                particle += Complex64::from_polar(1.0, (e_gs - energy) * t) * cu.norm_sqr();
                let cw: Complex64 =
                    eigstate.amps().iter().zip(&annihilated).map(|(e, c)| e.conj() * c).sum();
                hole += Complex64::from_polar(1.0, (energy - e_gs) * t) * cw.norm_sqr();
            }
            let propagated = particle + hole;
            let reconstructed = set.time_value(t);
            assert!(
                (propagated - reconstructed).norm() < 1e-8,
                "mismatch at t={t}: {propagated} vs {reconstructed}"
            );
            t += 2.5;
        }
    }

    #[test]
    fn filling_tracks_mu() {
        let grid_cases = [(2.0, 1.0_f64), (0.5, 0.35), (3.5, 1.65)];
        for (mu, _) in grid_cases {
            let siam = SiamParams {
                u: 4.0,
                mu,
                bath: vec![
                    BathSite { energy: -0.5, coupling: 0.5 },
                    BathSite { energy: 0.5, coupling: 0.5 },
                ],
            };
            let (spec, layout) = spectrum_of(&siam);
            let n = impurity_filling(&spec, &layout, GroundStateChoice::Single);
            assert!((0.0..=2.0).contains(&n));
            if (mu - 2.0).abs() < 1e-12 {
                assert_abs_diff_eq!(n, 1.0, epsilon = 1e-8);
            }
        }
    }
}
