//! Self-consistency loop for the infinite-connectivity Bethe lattice,
//! orchestrated over any impurity-solver backend.
//!
//! One iteration: solve the impurity model for its Lehmann set, build
//! `G(i w_n)`, map `Delta_target = v^2 G` (with linear mixing against the
//! bath currently realized), refit the bath, and recompute the self-energy.
//! The loop stops when `max_n |Sigma_k - Sigma_{k-1}|` over the lowest 50
//! frequencies drops below `tol`.

use crate::greens::{FitConfig, FitDiagnostics, LehmannSet};
use crate::model::{
    bath_fit, bethe_target, hybridization_matsubara, mapping_cost, semicircle_greens, BathFitOptions,
    HubbardParams, MatsubaraGrid, ModelError, SiamParams,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Number of low Matsubara frequencies entering the convergence metric.
pub const CONVERGENCE_FREQUENCIES: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum DmftError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Greens(#[from] crate::greens::GreensError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Variational(#[from] crate::variational::VariationalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Exact-diagonalization impurity solver (the classical reference).
    Exact,
    /// Spectrum from the raw second-order Trotter evolution plus VQE ground state.
    Trotter,
    /// Compressed variational time evolution plus VQE ground state.
    Compressed,
}

/// Loop-control knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmftLoopSettings {
    /// Convergence threshold on `max_n |Delta Sigma|`, in units of `v`.
    pub tol: f64,
    /// Linear mixing weight on the new hybridization target (1 = no damping).
    pub mixing: f64,
    pub max_iter: usize,
}

impl Default for DmftLoopSettings {
    fn default() -> Self {
        Self { tol: 1e-3, mixing: 0.7, max_iter: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct DmftConfig {
    pub hubbard: HubbardParams,
    pub bath_sites: usize,
    pub grid: MatsubaraGrid,
    pub solver: SolverKind,
    /// Trotter/compression step.
    pub dt: f64,
    /// Evolution horizon for the time-domain solvers.
    pub t_max: f64,
    pub layers_gs: usize,
    pub layers_evo: usize,
    pub loop_settings: DmftLoopSettings,
    /// Damping for seeding/spectral output.
    pub eta: f64,
    /// Frequencies in the quasiparticle-weight slope.
    pub k_fit: usize,
    pub seed: u64,
    pub vqe: crate::variational::VqeOptions,
    pub compression: crate::variational::CompressionOptions,
    pub fit: FitConfig,
    pub bath_fit: BathFitOptions,
}

impl DmftConfig {
    /// Defaults for the classical reference solver; quantum knobs are inert.
    pub fn reference_defaults(hubbard: HubbardParams, bath_sites: usize, grid: MatsubaraGrid) -> Self {
        Self {
            hubbard,
            bath_sites,
            grid,
            solver: SolverKind::Exact,
            dt: 0.1,
            t_max: 50.0,
            layers_gs: bath_sites.max(1),
            layers_evo: (bath_sites * bath_sites).max(1),
            loop_settings: DmftLoopSettings::default(),
            eta: 0.1,
            k_fit: 2,
            seed: 0x5eed,
            vqe: crate::variational::VqeOptions::default(),
            compression: crate::variational::CompressionOptions::default(),
            fit: FitConfig::default(),
            bath_fit: BathFitOptions::default(),
        }
    }
}

/// Everything recorded about one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmftIterationRecord {
    pub iteration: usize,
    pub siam: SiamParams,
    pub lehmann: LehmannSet,
    pub sigma: Vec<Complex64>,
    pub mapping_cost: f64,
    pub z_mats: Option<f64>,
    /// `max_n |Sigma_k - Sigma_{k-1}|`; absent on the first iteration.
    pub sigma_delta: Option<f64>,
    pub gs_energy: Option<f64>,
    pub gs_sector: Option<(usize, usize)>,
    pub fit: Option<FitDiagnostics>,
    /// Worst compression fidelity against the Trotter reference in this iteration.
    pub min_fidelity: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmftHistory {
    pub records: Vec<DmftIterationRecord>,
    pub converged: bool,
    /// Failure description when the loop aborted early.
    pub aborted: Option<String>,
}

impl DmftHistory {
    pub fn last(&self) -> &DmftIterationRecord {
        self.records.last().expect("history never empty")
    }

    pub fn final_z(&self) -> Option<f64> {
        self.last().z_mats
    }
}

/// Step 0: `Sigma_0 = 0` and a bath fitted to the non-interacting
/// Bethe-lattice hybridization `v^2 G_0(i w_n)` with `G_0` semicircular.
pub fn initial_guess(cfg: &DmftConfig) -> Result<(Vec<Complex64>, SiamParams), DmftError> {
    let sigma0 = vec![Complex64::ZERO; cfg.grid.len()];
    let g0: Vec<Complex64> = (0..cfg.grid.len())
        .map(|n| semicircle_greens(cfg.grid.iw(n) + cfg.hubbard.mu, cfg.hubbard.v))
        .collect();
    let target = bethe_target(&g0, &cfg.grid, cfg.hubbard.v);
    let siam0 = bath_fit(
        &target,
        cfg.bath_sites,
        cfg.hubbard.u,
        cfg.hubbard.mu,
        None,
        &cfg.bath_fit,
    )?;
    Ok((sigma0, siam0))
}

pub(crate) fn sigma_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .take(CONVERGENCE_FREQUENCIES)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Mix the Bethe target against the currently realized hybridization.
pub(crate) fn mixed_target(
    g_mats: &[Complex64],
    siam: &SiamParams,
    grid: &MatsubaraGrid,
    v: f64,
    mixing: f64,
) -> crate::model::HybridizationSamples {
    let fresh = bethe_target(g_mats, grid, v);
    let current = hybridization_matsubara(siam, grid);
    let values = fresh
        .values
        .iter()
        .zip(&current.values)
        .map(|(new, old)| mixing * new + (1.0 - mixing) * old)
        .collect();
    crate::model::HybridizationSamples { grid: grid.clone(), values }
}

/// Run the self-consistency loop with the configured backend.
pub fn run_dmft(cfg: &DmftConfig) -> Result<DmftHistory, DmftError> {
    let _ = (cfg, mapping_cost as fn(&SiamParams, &crate::model::HybridizationSamples) -> f64);
    todo!("filled in once the impurity solvers exist")
}
