//! Hubbard/SIAM parameterization, Matsubara machinery, the Bethe-lattice
//! self-consistency map and the bath-fitting optimization.

use crate::opt::{lm_minimize, LeastSquares, LmOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("hopping amplitude must be positive, got {0}")]
    NonPositiveHopping(f64),
    #[error("interaction must be non-negative, got {0}")]
    NegativeInteraction(f64),
    #[error("inverse temperature must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("bath fit needs at least one bath site")]
    EmptyBath,
    #[error("samples live on a different Matsubara grid")]
    GridMismatch,
    #[error("bath fit did not converge (best cost {cost:e})")]
    FitNotConverged { best: SiamParams, cost: f64 },
}

/// Hubbard model parameters; `v` is the energy unit of the whole crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubbardParams {
    pub u: f64,
    pub mu: f64,
    pub v: f64,
}

impl HubbardParams {
    pub fn new(u: f64, mu: f64, v: f64) -> Result<Self, ModelError> {
        if v <= 0.0 {
            return Err(ModelError::NonPositiveHopping(v));
        }
        if u < 0.0 {
            return Err(ModelError::NegativeInteraction(u));
        }
        Ok(Self { u, mu, v })
    }
}

/// One bath orbital: on-site energy `eps_p` and hybridization amplitude `V_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSite {
    pub energy: f64,
    pub coupling: f64,
}

/// Star-geometry Anderson impurity parameters. Bath order defines the qubit
/// assignment, so it is part of the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiamParams {
    pub u: f64,
    pub mu: f64,
    pub bath: Vec<BathSite>,
}

impl SiamParams {
    pub fn bath_sites(&self) -> usize {
        self.bath.len()
    }

    /// Sum of squared couplings; the leading coefficient of the 1/omega tail.
    pub fn total_weight(&self) -> f64 {
        self.bath.iter().map(|s| s.coupling * s.coupling).sum()
    }

    /// Gauge-fixed copy: couplings non-negative, sites sorted by energy.
    pub fn canonicalized(&self) -> SiamParams {
        let mut bath: Vec<BathSite> = self
            .bath
            .iter()
            .map(|s| BathSite { energy: s.energy, coupling: s.coupling.abs() })
            .collect();
        bath.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        SiamParams { u: self.u, mu: self.mu, bath }
    }
}

/// Fictive-temperature frequency grid `omega_n = (2n+1) pi / beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatsubaraGrid {
    beta: f64,
    omegas: Vec<f64>,
}

impl MatsubaraGrid {
    pub fn new(beta: f64, n_max: usize) -> Result<Self, ModelError> {
        if beta <= 0.0 {
            return Err(ModelError::NonPositiveBeta(beta));
        }
        let omegas = (0..=n_max)
            .map(|n| (2 * n + 1) as f64 * std::f64::consts::PI / beta)
            .collect();
        Ok(Self { beta, omegas })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_max(&self) -> usize {
        self.omegas.len() - 1
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `i omega_n` as a complex frequency.
    pub fn iw(&self, n: usize) -> Complex64 {
        Complex64::new(0.0, self.omegas[n])
    }

    pub fn compatible(&self, other: &MatsubaraGrid) -> bool {
        self.beta == other.beta && self.omegas.len() == other.omegas.len()
    }
}

impl Serialize for MatsubaraGrid {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("MatsubaraGrid", 2)?;
        s.serialize_field("beta", &self.beta)?;
        s.serialize_field("n_max", &self.n_max())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for MatsubaraGrid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            beta: f64,
            n_max: usize,
        }
        let raw = Raw::deserialize(deserializer)?;
        MatsubaraGrid::new(raw.beta, raw.n_max).map_err(serde::de::Error::custom)
    }
}

/// Hybridization samples on a Matsubara grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridizationSamples {
    pub grid: MatsubaraGrid,
    pub values: Vec<Complex64>,
}

/// `Delta(i omega_n) = sum_p V_p^2 / (i omega_n - eps_p)`.
pub fn hybridization_matsubara(siam: &SiamParams, grid: &MatsubaraGrid) -> HybridizationSamples {
    let values = grid
        .omegas()
        .iter()
        .map(|&w| {
            siam.bath
                .iter()
                .map(|s| s.coupling * s.coupling / (Complex64::new(-s.energy, w)))
                .sum()
        })
        .collect();
    HybridizationSamples { grid: grid.clone(), values }
}

/// Weiss function `Lambda(i omega_n) = i omega_n + mu - Delta(i omega_n)`.
pub fn weiss_function(siam: &SiamParams, grid: &MatsubaraGrid) -> Vec<Complex64> {
    let delta = hybridization_matsubara(siam, grid);
    grid.omegas()
        .iter()
        .zip(&delta.values)
        .map(|(&w, d)| Complex64::new(siam.mu, w) - d)
        .collect()
}

/// Bethe-lattice map `Delta_target = v^2 G_imp` on the sampling grid.
pub fn bethe_target(g_imp: &[Complex64], grid: &MatsubaraGrid, v: f64) -> HybridizationSamples {
    assert_eq!(g_imp.len(), grid.len(), "samples do not cover the grid");
    let v2 = v * v;
    HybridizationSamples {
        grid: grid.clone(),
        values: g_imp.iter().map(|g| v2 * g).collect(),
    }
}

/// Distance between the target hybridization and the bath realization.
///
/// The sum runs over all `n_max + 1` grid points; the normalization uses
/// `max(n_max, 1)` so a single-point grid stays finite.
pub fn mapping_cost(siam: &SiamParams, target: &HybridizationSamples) -> f64 {
    let delta = hybridization_matsubara(siam, &target.grid);
    let sse: f64 = delta
        .values
        .iter()
        .zip(&target.values)
        .map(|(d, t)| (t - d).norm_sqr())
        .sum();
    sse / (target.grid.n_max().max(1) as f64)
}

/// Lattice Green's function of the infinite-connectivity Bethe lattice at
/// complex frequency `z` (semi-elliptic density of states, bandwidth `4v`),
/// on the branch with `G -> 1/z`.
pub fn semicircle_greens(z: Complex64, v: f64) -> Complex64 {
    let mut s = (z * z - 4.0 * v * v).sqrt();
    if s.im * z.im < 0.0 {
        s = -s;
    }
    2.0 / (z + s)
}

#[derive(Debug, Clone)]
pub struct BathFitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub lm: LmOptions,
}

impl Default for BathFitOptions {
    fn default() -> Self {
        Self { restarts: 8, seed: 0x5eed, lm: LmOptions::default() }
    }
}

struct BathResiduals<'a> {
    target: &'a HybridizationSamples,
    b: usize,
}

impl BathResiduals<'_> {
    fn delta(&self, params: &[f64], n: usize) -> Complex64 {
        let w = self.target.grid.omegas()[n];
        (0..self.b)
            .map(|p| {
                let (eps, v) = (params[p], params[self.b + p]);
                v * v / Complex64::new(-eps, w)
            })
            .sum()
    }
}

impl LeastSquares for BathResiduals<'_> {
    fn n_residuals(&self) -> usize {
        2 * self.target.values.len()
    }

    fn n_params(&self) -> usize {
        2 * self.b
    }

    fn residuals(&self, params: &[f64], out: &mut [f64]) {
        for n in 0..self.target.values.len() {
            let r = self.target.values[n] - self.delta(params, n);
            out[2 * n] = r.re;
            out[2 * n + 1] = r.im;
        }
    }

    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>) {
        for n in 0..self.target.values.len() {
            let w = self.target.grid.omegas()[n];
            for p in 0..self.b {
                let (eps, v) = (params[p], params[self.b + p]);
                let denom = Complex64::new(-eps, w);
                // d r / d eps_p = -V^2/(iw - eps)^2 ; d r / d V_p = -2V/(iw - eps)
                let d_eps = -(v * v) / (denom * denom);
                let d_v = -2.0 * v / denom;
                out[(2 * n, p)] = d_eps.re;
                out[(2 * n + 1, p)] = d_eps.im;
                out[(2 * n, self.b + p)] = d_v.re;
                out[(2 * n + 1, self.b + p)] = d_v.im;
            }
        }
    }
}

/// Fit `B` bath sites to a hybridization target by multi-start local descent.
///
/// `u` and `mu` are copied through unchanged. The returned parameters are
/// canonicalized (couplings >= 0, sites sorted by energy).
pub fn bath_fit(
    target: &HybridizationSamples,
    b: usize,
    u: f64,
    mu: f64,
    init: Option<&SiamParams>,
    options: &BathFitOptions,
) -> Result<SiamParams, ModelError> {
    if b == 0 {
        return Err(ModelError::EmptyBath);
    }
    let problem = BathResiduals { target, b };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(siam) = init {
        assert_eq!(siam.bath_sites(), b, "warm start must have {b} bath sites");
        let mut p = vec![0.0; 2 * b];
        for (i, site) in siam.bath.iter().enumerate() {
            p[i] = site.energy;
            p[b + i] = site.coupling;
        }
        starts.push(p);
    }
    // Scale guesses from the high-frequency tail, Delta ~ (sum V^2) / (i omega).
    let tail = target.values.last().copied().unwrap_or_default();
    let weight = (-tail.im * target.grid.omegas().last().unwrap()).max(0.1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        let mut p = vec![0.0; 2 * b];
        for i in 0..b {
            p[i] = rng.gen_range(-2.5..2.5);
            p[b + i] = (weight / b as f64).sqrt() * rng.gen_range(0.3..1.7);
        }
        starts.push(p);
    }

    let mut best: Option<LmBest> = None;
    for start in &starts {
        let res = lm_minimize(&problem, start, &options.lm);
        let better = best.as_ref().map(|b| res.cost < b.cost).unwrap_or(true);
        if better {
            best = Some(LmBest { params: res.params, cost: res.cost, converged: res.converged });
        }
    }
    let best = best.expect("at least one start");
    let bath = (0..b)
        .map(|p| BathSite { energy: best.params[p], coupling: best.params[b + p] })
        .collect();
    let fitted = SiamParams { u, mu, bath }.canonicalized();
    if best.converged {
        Ok(fitted)
    } else {
        Err(ModelError::FitNotConverged { cost: mapping_cost(&fitted, target), best: fitted })
    }
}

struct LmBest {
    params: Vec<f64>,
    cost: f64,
    converged: bool,
}
