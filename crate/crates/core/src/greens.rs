//! Green's-function evaluation and post-processing: time series from the
//! simulated evolution, FFT-seeded Lehmann fitting under the sum-rule and
//! bath-root constraints, Matsubara/real-frequency transforms, the self
//! energy and the quasiparticle weight.
//!
//! Normalization: the time-domain object handled here is
//! `G(t) = <c(t) c^dag> + <c^dag c(t)> = sum_j alpha_j e^{-i w_j t} + beta_j e^{i w_j t}`,
//! without the retarded `-i Theta(t)` prefactor, so `G(0) = 1` is the
//! equal-time anticommutator and the sum rule reads `sum_j (alpha+beta) = 1`.

use crate::model::{hybridization_matsubara, MatsubaraGrid, SiamParams};
use crate::opt::{lm_minimize, LeastSquares, LmOptions};
use crate::pauli::{PauliLetter, PauliString, QubitLayout, Spin};
use crate::sim::{inner_with_string, StateVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GreensError {
    #[error("Lehmann fit did not converge: sum-rule gap {gap:.3e}, data rms {rms:.3e}")]
    FitNotConverged { best: LehmannSet, gap: f64, rms: f64 },
    #[error("Green's function sample {index} is singular")]
    SingularSample { index: usize },
    #[error("self-energy slope {slope} >= 1 leaves no quasiparticle weight")]
    UnphysicalSlope { slope: f64 },
    #[error("evolution does not cover requested step {step}")]
    MissingEvolutionStep { step: usize },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

/// One pole of the Lehmann representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LehmannPole {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Pole set `{(omega_j, alpha_j, beta_j)}` with `omega_j >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LehmannSet {
    poles: Vec<LehmannPole>,
}

impl LehmannSet {
    /// Sanitizes on construction: clamps small negative weights, merges
    /// coincident frequencies and drops empty poles.
    pub fn new(poles: Vec<LehmannPole>) -> Self {
        let mut cleaned: Vec<LehmannPole> = Vec::with_capacity(poles.len());
        for pole in poles {
            let mut p = pole;
            p.omega = p.omega.max(0.0);
            p.alpha = p.alpha.max(0.0);
            p.beta = p.beta.max(0.0);
            if p.alpha + p.beta < 1e-14 {
                continue;
            }
            if let Some(existing) = cleaned.iter_mut().find(|q| (q.omega - p.omega).abs() < 1e-9) {
                existing.alpha += p.alpha;
                existing.beta += p.beta;
            } else {
                cleaned.push(p);
            }
        }
        cleaned.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        Self { poles: cleaned }
    }

    pub fn poles(&self) -> &[LehmannPole] {
        &self.poles
    }

    /// `sum_j alpha_j + beta_j`; equals 1 for a complete set.
    pub fn total_weight(&self) -> f64 {
        self.poles.iter().map(|p| p.alpha + p.beta).sum()
    }

    /// Time-domain value `sum_j alpha_j e^{-i w t} + beta_j e^{i w t}`.
    pub fn time_value(&self, t: f64) -> Complex64 {
        self.poles
            .iter()
            .map(|p| {
                Complex64::from_polar(p.alpha, -p.omega * t) + Complex64::from_polar(p.beta, p.omega * t)
            })
            .sum()
    }
}

/// `G(i w_n) = sum_j alpha_j/(i w_n - w_j) + beta_j/(i w_n + w_j)`.
pub fn lehmann_to_matsubara(set: &LehmannSet, grid: &MatsubaraGrid) -> Vec<Complex64> {
    grid.omegas()
        .iter()
        .map(|&w| {
            set.poles()
                .iter()
                .map(|p| {
                    p.alpha / Complex64::new(-p.omega, w) + p.beta / Complex64::new(p.omega, w)
                })
                .sum()
        })
        .collect()
}

/// `G(w + i eta)` on a real-frequency grid.
pub fn lehmann_to_realfreq(set: &LehmannSet, omegas: &[f64], eta: f64) -> Vec<Complex64> {
    assert!(eta > 0.0, "eta must be positive");
    omegas
        .iter()
        .map(|&w| {
            set.poles()
                .iter()
                .map(|p| {
                    p.alpha / Complex64::new(w - p.omega, eta) + p.beta / Complex64::new(w + p.omega, eta)
                })
                .sum()
        })
        .collect()
}

/// Spectral function `A(w) = -Im G(w + i eta) / pi`.
pub fn spectral_function(greens: &[Complex64]) -> Vec<f64> {
    greens.iter().map(|g| -g.im / std::f64::consts::PI).collect()
}

/// Time series of `G(t)` on the uniform grid `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreensSeries {
    dt: f64,
    values: Vec<Complex64>,
}

impl GreensSeries {
    pub fn new(dt: f64, values: Vec<Complex64>) -> Self {
        assert!(dt > 0.0 && !values.is_empty());
        Self { dt, values }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt)
    }

    /// Restrict to `t <= t_cut`.
    pub fn truncated(&self, t_cut: f64) -> GreensSeries {
        let keep = ((t_cut / self.dt).floor() as usize + 1).min(self.values.len());
        GreensSeries { dt: self.dt, values: self.values[..keep].to_vec() }
    }

    /// Deviation of `G(0)` from the equal-time anticommutator value 1.
    pub fn equal_time_defect(&self) -> f64 {
        (self.values[0] - Complex64::ONE).norm()
    }

    /// Synthesize a series from a pole set; test and seeding helper.
    pub fn from_lehmann(set: &LehmannSet, dt: f64, n_samples: usize) -> GreensSeries {
        let values = (0..n_samples).map(|k| set.time_value(k as f64 * dt)).collect();
        GreensSeries::new(dt, values)
    }
}

/// Lehmann-fit configuration; weights follow the penalty hierarchy
/// data : root/derivative : sum rule = 1 : 10 : 1000.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Damping used when seeding from the Fourier transform.
    pub eta: f64,
    /// Sum-rule convergence threshold `|sum(alpha+beta) - 1| <= delta_fit`.
    pub delta_fit: f64,
    pub sum_rule_weight: f64,
    pub condition_weight: f64,
    /// Poles added greedily beyond the seeds.
    pub max_extra_poles: usize,
    /// Relative residual change regarded as "no further improvement".
    pub stall_rel_change: f64,
    /// Consecutive stalled additions before giving up.
    pub stall_patience: usize,
    /// Allowed travel of each pole frequency, in units of the bin `2 pi / t_max`.
    pub omega_travel_bins: f64,
    /// Peak prominence threshold of the FFT seeder, relative to the maximum.
    pub peak_prominence: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            delta_fit: 1e-2,
            sum_rule_weight: 1e3,
            condition_weight: 10.0,
            max_extra_poles: 10,
            stall_rel_change: 1e-4,
            stall_patience: 3,
            omega_travel_bins: 2.0,
            peak_prominence: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sum_rule_gap: f64,
    pub data_rms: f64,
    pub n_poles: usize,
    pub added_poles: usize,
    pub converged: bool,
}

/// Damped Fourier transform pole-frequency candidates.
///
/// Transforms `e^{-eta t} G(t)` on a zero-padded grid and returns the
/// frequencies of prominent magnitude peaks, reflected to `w >= 0` and
/// ordered by descending peak height.
pub fn fft_seed(series: &GreensSeries, eta: f64) -> Vec<f64> {
    assert!(series.len() >= 32, "series too short to seed a fit");
    let n = series.len();
    let padded = (16 * n).next_power_of_two().max(4096);
    let mut buf: Vec<Complex64> = Vec::with_capacity(padded);
    for (k, v) in series.values.iter().enumerate() {
        buf.push(v * (-eta * k as f64 * series.dt).exp());
    }
    buf.resize(padded, Complex64::ZERO);
    rustfft::FftPlanner::new()
        .plan_fft_forward(padded)
        .process(&mut buf);

    let mags: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    let max_mag = mags.iter().copied().fold(0.0, f64::max);
    if max_mag <= 0.0 {
        return Vec::new();
    }
    let threshold = 0.05 * max_mag;
    let dw = 2.0 * std::f64::consts::PI / (padded as f64 * series.dt);
    let physical_bin = 2.0 * std::f64::consts::PI / series.t_max();

    let mut peaks: Vec<(f64, f64)> = Vec::new(); // (omega, magnitude)
    for m in 0..padded {
        let prev = mags[(m + padded - 1) % padded];
        let next = mags[(m + 1) % padded];
        if mags[m] < threshold || mags[m] < prev || mags[m] <= next {
            continue;
        }
        // Parabolic refinement on the log magnitude.
        let (l, c, r) = (prev.max(1e-300).ln(), mags[m].ln(), next.max(1e-300).ln());
        let denom = l - 2.0 * c + r;
        let shift = if denom.abs() > 1e-12 { 0.5 * (l - r) / denom } else { 0.0 };
        let bin = m as f64 + shift.clamp(-0.5, 0.5);
        let freq = if bin <= padded as f64 / 2.0 { bin * dw } else { (bin - padded as f64) * dw };
        peaks.push((freq.abs(), mags[m]));
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out: Vec<f64> = Vec::new();
    for (omega, _) in peaks {
        if out.iter().all(|w| (w - omega).abs() > physical_bin) {
            out.push(omega);
        }
    }
    out
}

/// Pole parameters during fitting: `(omega, gamma, delta)` per pole with
/// `gamma = alpha + beta` and `delta = beta - alpha`.
struct LehmannResiduals<'a> {
    series: &'a GreensSeries,
    bath: &'a [crate::model::BathSite],
    sum_rule_weight: f64,
    condition_weight: f64,
    omega_bounds: Vec<(f64, f64)>,
}

impl LehmannResiduals<'_> {
    fn n_poles(&self) -> usize {
        self.omega_bounds.len()
    }
}

impl LeastSquares for LehmannResiduals<'_> {
    fn n_residuals(&self) -> usize {
        2 * self.series.len() + 1 + 2 * self.bath.len()
    }

    fn n_params(&self) -> usize {
        3 * self.n_poles()
    }

    fn residuals(&self, params: &[f64], out: &mut [f64]) {
        let np = self.n_poles();
        let poles = |j: usize| (params[3 * j], params[3 * j + 1], params[3 * j + 2]);
        let mut idx = 0;
        for (k, g) in self.series.values.iter().enumerate() {
            let t = k as f64 * self.series.dt;
            let mut re = 0.0;
            let mut im = 0.0;
            for j in 0..np {
                let (w, gamma, delta) = poles(j);
                re += gamma * (w * t).cos();
                im += delta * (w * t).sin();
            }
            out[idx] = g.re - re;
            out[idx + 1] = g.im - im;
            idx += 2;
        }
        let gamma_sum: f64 = (0..np).map(|j| params[3 * j + 1]).sum();
        out[idx] = self.sum_rule_weight.sqrt() * (gamma_sum - 1.0);
        idx += 1;
        for site in self.bath {
            let (mut root, mut deriv) = (0.0, 0.0);
            for j in 0..np {
                let (w, gamma, delta) = poles(j);
                let alpha = 0.5 * (gamma - delta);
                let beta = 0.5 * (gamma + delta);
                root += alpha / (site.energy - w) + beta / (site.energy + w);
                deriv += alpha / (site.energy - w).powi(2) + beta / (site.energy + w).powi(2);
            }
            let wc = self.condition_weight.sqrt();
            out[idx] = wc * root;
            out[idx + 1] = wc * (deriv - 1.0 / (site.coupling * site.coupling));
            idx += 2;
        }
    }

    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let np = self.n_poles();
        let poles = |j: usize| (params[3 * j], params[3 * j + 1], params[3 * j + 2]);
        let mut row = 0;
        for k in 0..self.series.len() {
            let t = k as f64 * self.series.dt;
            for j in 0..np {
                let (w, gamma, delta) = poles(j);
                let (s, c) = (w * t).sin_cos();
                out[(row, 3 * j)] = gamma * t * s;
                out[(row, 3 * j + 1)] = -c;
                out[(row + 1, 3 * j)] = -delta * t * c;
                out[(row + 1, 3 * j + 2)] = -s;
            }
            row += 2;
        }
        for j in 0..np {
            out[(row, 3 * j + 1)] = self.sum_rule_weight.sqrt();
        }
        row += 1;
        for site in self.bath {
            let wc = self.condition_weight.sqrt();
            for j in 0..np {
                let (w, gamma, delta) = poles(j);
                let alpha = 0.5 * (gamma - delta);
                let beta = 0.5 * (gamma + delta);
                let dm = site.energy - w;
                let dp = site.energy + w;
                out[(row, 3 * j)] = wc * (alpha / (dm * dm) - beta / (dp * dp));
                out[(row, 3 * j + 1)] = wc * 0.5 * (1.0 / dm + 1.0 / dp);
                out[(row, 3 * j + 2)] = wc * 0.5 * (-1.0 / dm + 1.0 / dp);
                out[(row + 1, 3 * j)] = wc * (2.0 * alpha / (dm * dm * dm) - 2.0 * beta / (dp * dp * dp));
                out[(row + 1, 3 * j + 1)] = wc * 0.5 * (1.0 / (dm * dm) + 1.0 / (dp * dp));
                out[(row + 1, 3 * j + 2)] = wc * 0.5 * (-1.0 / (dm * dm) + 1.0 / (dp * dp));
            }
            row += 2;
        }
    }

    fn project(&self, params: &mut [f64]) {
        for (j, (lo, hi)) in self.omega_bounds.iter().enumerate() {
            params[3 * j] = params[3 * j].clamp(*lo, *hi);
            params[3 * j + 1] = params[3 * j + 1].max(0.0);
            let gamma = params[3 * j + 1];
            params[3 * j + 2] = params[3 * j + 2].clamp(-gamma, gamma);
        }
    }
}

/// Linear solve for `(gamma, delta)` at fixed pole frequencies; this is the
/// second step of the fitting scheme, with the constraints already applied.
fn linear_weights(
    series: &GreensSeries,
    bath: &[crate::model::BathSite],
    omegas: &[f64],
    cfg: &FitConfig,
) -> Vec<f64> {
    let problem = LehmannResiduals {
        series,
        bath,
        sum_rule_weight: cfg.sum_rule_weight,
        condition_weight: cfg.condition_weight,
        omega_bounds: omegas.iter().map(|&w| (w, w)).collect(),
    };
    let np = omegas.len();
    let m = problem.n_residuals();
    // Residual is linear in (gamma, delta): r(p) = r(0) + J p on those columns.
    let mut params0 = vec![0.0; 3 * np];
    for (j, &w) in omegas.iter().enumerate() {
        params0[3 * j] = w;
    }
    let mut r0 = vec![0.0; m];
    problem.residuals(&params0, &mut r0);
    let mut jac = DMatrix::zeros(m, 3 * np);
    problem.jacobian(&params0, &mut jac);
    let mut cols: Vec<usize> = Vec::with_capacity(2 * np);
    for j in 0..np {
        cols.push(3 * j + 1);
        cols.push(3 * j + 2);
    }
    let a = DMatrix::from_fn(m, cols.len(), |r, c| jac[(r, cols[c])]);
    let b = nalgebra::DVector::from_iterator(m, r0.iter().map(|r| -r));
    let sol = a.svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| nalgebra::DVector::zeros(cols.len()));
    let mut params = params0;
    for (c, &col) in cols.iter().enumerate() {
        params[col] = sol[c];
    }
    problem.project(&mut params);
    params
}

fn fit_once(
    series: &GreensSeries,
    siam: &SiamParams,
    omegas_init: &[f64],
    cfg: &FitConfig,
    lm_options: &LmOptions,
) -> (Vec<f64>, f64) {
    let bin = 2.0 * std::f64::consts::PI / series.t_max();
    let travel = cfg.omega_travel_bins * bin;
    let problem = LehmannResiduals {
        series,
        bath: &siam.bath,
        sum_rule_weight: cfg.sum_rule_weight,
        condition_weight: cfg.condition_weight,
        omega_bounds: omegas_init
            .iter()
            .map(|&w| ((w - travel).max(0.0), w + travel))
            .collect(),
    };
    let init = linear_weights(series, &siam.bath, omegas_init, cfg);
    let res = lm_minimize(&problem, &init, lm_options);
    (res.params, res.cost)
}

fn params_to_set(params: &[f64]) -> LehmannSet {
    let poles = params
        .chunks_exact(3)
        .map(|p| LehmannPole {
            omega: p[0],
            alpha: 0.5 * (p[1] - p[2]),
            beta: 0.5 * (p[1] + p[2]),
        })
        .collect();
    LehmannSet::new(poles)
}

fn data_rms(series: &GreensSeries, set: &LehmannSet) -> f64 {
    let sse: f64 = series
        .values
        .iter()
        .enumerate()
        .map(|(k, g)| (g - set.time_value(k as f64 * series.dt)).norm_sqr())
        .sum();
    (sse / series.len() as f64).sqrt()
}

/// Three-step Lehmann fit: seeded frequencies, constrained least squares in
/// `(gamma, delta, omega)`, then greedy pole addition until the sum rule is
/// met or the residual stops improving.
pub fn lehmann_fit(
    series: &GreensSeries,
    siam: &SiamParams,
    seeds: &[f64],
    cfg: &FitConfig,
) -> Result<(LehmannSet, FitDiagnostics), GreensError> {
    let lm_options = LmOptions { max_iters: 400, ..LmOptions::default() };
    let bin = 2.0 * std::f64::consts::PI / series.t_max();

    let mut omegas: Vec<f64> = Vec::new();
    for &s in seeds {
        if omegas.iter().all(|w| (w - s).abs() > 0.5 * bin) {
            omegas.push(s);
        }
    }
    if omegas.is_empty() {
        omegas.push(0.0);
    }

    let (mut params, mut cost) = fit_once(series, siam, &omegas, cfg, &lm_options);
    let mut added = 0;
    let mut stalled = 0;
    loop {
        let set = params_to_set(&params);
        let gap = (set.total_weight() - 1.0).abs();
        if gap <= cfg.delta_fit || added >= cfg.max_extra_poles || stalled >= cfg.stall_patience {
            break;
        }
        // Seed the next pole from the spectrum of the residual.
        let residual_values: Vec<Complex64> = series
            .values
            .iter()
            .enumerate()
            .map(|(k, g)| g - set.time_value(k as f64 * series.dt))
            .collect();
        let residual_series = GreensSeries::new(series.dt, residual_values);
        let mut candidates = fft_seed(&residual_series, cfg.eta);
        candidates.retain(|w| omegas.iter().all(|o| (o - w).abs() > bin));
        let Some(next) = candidates.first().copied() else {
            break;
        };
        omegas.push(next);
        let (new_params, new_cost) = fit_once(series, siam, &omegas, cfg, &lm_options);
        let rel_change = (cost - new_cost) / cost.max(1e-300);
        if rel_change < cfg.stall_rel_change {
            stalled += 1;
        } else {
            stalled = 0;
        }
        params = new_params;
        cost = new_cost;
        added += 1;
    }

    let set = params_to_set(&params);
    let gap = (set.total_weight() - 1.0).abs();
    let diagnostics = FitDiagnostics {
        sum_rule_gap: gap,
        data_rms: data_rms(series, &set),
        n_poles: set.poles().len(),
        added_poles: added,
        converged: gap <= cfg.delta_fit,
    };
    if diagnostics.converged {
        Ok((set, diagnostics))
    } else {
        Err(GreensError::FitNotConverged { best: set, gap, rms: diagnostics.data_rms })
    }
}

/// Self-energy samples on the Matsubara grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfEnergySamples {
    pub grid: MatsubaraGrid,
    pub values: Vec<Complex64>,
}

/// Dyson difference `Sigma(iw_n) = iw_n + mu - Delta(iw_n) - 1/G(iw_n)`.
pub fn self_energy(
    g: &[Complex64],
    siam: &SiamParams,
    grid: &MatsubaraGrid,
) -> Result<SelfEnergySamples, GreensError> {
    assert_eq!(g.len(), grid.len());
    let delta = hybridization_matsubara(siam, grid);
    let mut values = Vec::with_capacity(g.len());
    for (n, gn) in g.iter().enumerate() {
        if gn.norm() < 1e-14 {
            return Err(GreensError::SingularSample { index: n });
        }
        values.push(grid.iw(n) + siam.mu - delta.values[n] - 1.0 / gn);
    }
    Ok(SelfEnergySamples { grid: grid.clone(), values })
}

/// Quasiparticle weight from the low-frequency slope of `Im Sigma(i w_n)`.
///
/// `Z = 1/(1 - s)` with `s` the least-squares slope through the first
/// `k_fit` Matsubara frequencies.
pub fn quasiparticle_weight(sigma: &SelfEnergySamples, k_fit: usize) -> Result<f64, GreensError> {
    assert!(k_fit >= 1, "need at least one frequency");
    let k = k_fit.min(sigma.values.len());
    let slope = if k == 1 {
        sigma.values[0].im / sigma.grid.omegas()[0]
    } else {
        let xs = &sigma.grid.omegas()[..k];
        let ys: Vec<f64> = sigma.values[..k].iter().map(|v| v.im).collect();
        let xm = xs.iter().sum::<f64>() / k as f64;
        let ym = ys.iter().sum::<f64>() / k as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        num / den
    };
    if slope >= 1.0 {
        return Err(GreensError::UnphysicalSlope { slope });
    }
    Ok(1.0 / (1.0 - slope))
}

/// Uniform real-frequency grid, symmetric about zero.
pub fn real_frequency_grid(half_width: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points >= 2);
    let step = 2.0 * half_width / (n_points - 1) as f64;
    (0..n_points).map(|k| -half_width + step * k as f64).collect()
}

/// Matsubara Green's function through the damped Fourier transform alone
/// (no pole fit): the unstable short-time route used for comparison.
///
/// `G^R(w + i eta) = -i Integral_0^{t_max} e^{i w t} e^{-eta t} G(t) dt`,
/// `A(w) = -Im G^R / pi`, then the spectral integral to `i w_n`.
pub fn matsubara_from_damped_ft(
    series: &GreensSeries,
    eta: f64,
    grid: &MatsubaraGrid,
    omegas: &[f64],
) -> Vec<Complex64> {
    let retarded: Vec<Complex64> = omegas
        .iter()
        .map(|&w| {
            // Trapezoid over the sampled window.
            let mut acc = Complex64::ZERO;
            for (k, g) in series.values.iter().enumerate() {
                let t = k as f64 * series.dt;
                let weight = if k == 0 || k == series.len() - 1 { 0.5 } else { 1.0 };
                acc += weight * g * Complex64::from_polar((-eta * t).exp(), w * t);
            }
            -Complex64::I * acc * series.dt
        })
        .collect();
    let a = spectral_function(&retarded);
    grid.omegas()
        .iter()
        .map(|&wn| {
            let mut acc = Complex64::ZERO;
            for (k, &w) in omegas.iter().enumerate() {
                let weight = if k == 0 || k == omegas.len() - 1 { 0.5 } else { 1.0 };
                acc += weight * a[k] / Complex64::new(-w, wn);
            }
            acc * (omegas[1] - omegas[0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BathSite;
    use approx::assert_abs_diff_eq;

    fn single_pole(omega: f64, alpha: f64, beta: f64) -> LehmannSet {
        LehmannSet::new(vec![LehmannPole { omega, alpha, beta }])
    }

    #[test]
    fn matsubara_transform_single_zero_pole() {
        let set = single_pole(0.0, 0.6, 0.4);
        let grid = MatsubaraGrid::new(200.0, 5).unwrap();
        let g = lehmann_to_matsubara(&set, &grid);
        for (n, v) in g.iter().enumerate() {
            let want = 1.0 / grid.iw(n);
            assert!((v - want).norm() < 1e-14);
        }
    }

    #[test]
    fn matsubara_transform_matches_spectral_quadrature() {
        // With A(w) a sum of delta weights the spectral integral is the pole form.
        let set = LehmannSet::new(vec![
            LehmannPole { omega: 0.8, alpha: 0.3, beta: 0.1 },
            LehmannPole { omega: 2.1, alpha: 0.25, beta: 0.35 },
        ]);
        let grid = MatsubaraGrid::new(100.0, 8).unwrap();
        let g = lehmann_to_matsubara(&set, &grid);
        for (n, v) in g.iter().enumerate() {
            let mut want = Complex64::ZERO;
            for p in set.poles() {
                want += p.alpha / (grid.iw(n) - p.omega) + p.beta / (grid.iw(n) + p.omega);
            }
            assert!((v - want).norm() < 1e-14);
        }
    }

    #[test]
    fn realfreq_is_lorentzian_and_sum_rule_integrates() {
        let set = single_pole(1.2, 0.7, 0.3);
        let omegas = real_frequency_grid(20.0, 40001);
        let eta = 0.1;
        let g = lehmann_to_realfreq(&set, &omegas, eta);
        let a = spectral_function(&g);
        // Peak near +1.2 with half-width eta.
        let (imax, _) = a.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
        assert_abs_diff_eq!(omegas[imax], 1.2, epsilon = 2e-3);
        let peak = a[imax];
        let half = peak / 2.0;
        let right = omegas[imax..]
            .iter()
            .zip(&a[imax..])
            .find(|(_, &v)| v < half)
            .map(|(w, _)| *w)
            .unwrap();
        assert_abs_diff_eq!(right - 1.2, eta, epsilon = 2e-2);
        // Trapezoid integral close to total weight (Lorentzian tails cut at 20).
        let dw = omegas[1] - omegas[0];
        let integral: f64 = a.iter().sum::<f64>() * dw;
        let tail = 2.0 * eta / std::f64::consts::PI / 20.0; // arctan-tail bound scale
        assert!((integral - 1.0).abs() < 2.0 * tail + 1e-3, "integral {integral}");
    }

    #[test]
    fn fft_seed_finds_synthetic_poles() {
        let dt = 0.1;
        let n = 501; // t_max = 50
        let set = single_pole(1.5, 0.5, 0.5);
        let series = GreensSeries::from_lehmann(&set, dt, n);
        let seeds = fft_seed(&series, 0.1);
        let bin = 2.0 * std::f64::consts::PI / series.t_max();
        assert!(
            seeds.iter().any(|w| (w - 1.5).abs() < bin),
            "no seed near 1.5 in {seeds:?}"
        );

        let two = LehmannSet::new(vec![
            LehmannPole { omega: 0.9, alpha: 0.3, beta: 0.2 },
            LehmannPole { omega: 2.2, alpha: 0.2, beta: 0.3 },
        ]);
        let series = GreensSeries::from_lehmann(&two, dt, n);
        let seeds = fft_seed(&series, 0.1);
        for target in [0.9, 2.2] {
            assert!(
                seeds.iter().any(|w| (w - target).abs() < bin),
                "no seed near {target} in {seeds:?}"
            );
        }
    }

    #[test]
    fn fft_seed_empty_for_zero_series() {
        let series = GreensSeries::new(0.1, vec![Complex64::ZERO; 64]);
        assert!(fft_seed(&series, 0.1).is_empty());
    }

    #[test]
    fn single_pole_fit_is_exact() {
        let set = single_pole(1.3, 0.45, 0.55);
        let series = GreensSeries::from_lehmann(&set, 0.1, 501);
        let siam = SiamParams { u: 0.0, mu: 0.0, bath: vec![] };
        let seeds = fft_seed(&series, 0.1);
        let (fitted, diag) = lehmann_fit(&series, &siam, &seeds, &FitConfig::default()).unwrap();
        assert!(diag.converged);
        assert_eq!(fitted.poles().len(), 1);
        assert_abs_diff_eq!(fitted.poles()[0].omega, 1.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fitted.poles()[0].alpha, 0.45, epsilon = 1e-6);
        assert!(diag.data_rms < 1e-8, "rms {}", diag.data_rms);
    }

    #[test]
    fn self_energy_roundtrip_and_free_case() {
        let grid = MatsubaraGrid::new(200.0, 30).unwrap();
        let siam = SiamParams {
            u: 0.0,
            mu: 0.3,
            bath: vec![BathSite { energy: 0.4, coupling: 0.7 }],
        };
        // Non-interacting G = 1/(iw + mu - Delta) gives Sigma = 0.
        let delta = hybridization_matsubara(&siam, &grid);
        let g: Vec<Complex64> = (0..grid.len())
            .map(|n| 1.0 / (grid.iw(n) + siam.mu - delta.values[n]))
            .collect();
        let sigma = self_energy(&g, &siam, &grid).unwrap();
        for v in &sigma.values {
            assert!(v.norm() < 1e-10);
        }
        // Reinserting Sigma reproduces G.
        for n in 0..grid.len() {
            let rebuilt = 1.0 / (grid.iw(n) + siam.mu - delta.values[n] - sigma.values[n]);
            assert!((rebuilt - g[n]).norm() < 1e-10);
        }
    }

    #[test]
    fn quasiparticle_weight_from_known_slopes() {
        let grid = MatsubaraGrid::new(200.0, 10).unwrap();
        let zero = SelfEnergySamples { grid: grid.clone(), values: vec![Complex64::ZERO; grid.len()] };
        assert_abs_diff_eq!(quasiparticle_weight(&zero, 2).unwrap(), 1.0, epsilon = 1e-14);

        let c = 0.7;
        let linear = SelfEnergySamples {
            grid: grid.clone(),
            values: grid.omegas().iter().map(|&w| Complex64::new(0.0, -c * w)).collect(),
        };
        assert_abs_diff_eq!(quasiparticle_weight(&linear, 2).unwrap(), 1.0 / (1.0 + c), epsilon = 1e-12);

        let bad = SelfEnergySamples {
            grid: grid.clone(),
            values: grid.omegas().iter().map(|&w| Complex64::new(0.0, 2.0 * w)).collect(),
        };
        assert!(matches!(quasiparticle_weight(&bad, 2), Err(GreensError::UnphysicalSlope { .. })));
    }

    #[test]
    fn damped_ft_close_to_pole_form_on_synthetic_data() {
        let set = single_pole(1.0, 0.5, 0.5);
        let series = GreensSeries::from_lehmann(&set, 0.1, 501);
        let eta = 0.1;
        let omegas = real_frequency_grid(20.0, 4001);
        let direct = lehmann_to_realfreq(&set, &omegas, eta);
        // Rebuild the retarded function by damped FT and compare A(w).
        let retarded: Vec<Complex64> = omegas
            .iter()
            .map(|&w| {
                let mut acc = Complex64::ZERO;
                for (k, g) in series.values().iter().enumerate() {
                    let t = k as f64 * series.dt();
                    let weight = if k == 0 || k == series.len() - 1 { 0.5 } else { 1.0 };
                    acc += weight * g * Complex64::from_polar((-eta * t).exp(), w * t);
                }
                -Complex64::I * acc * series.dt()
            })
            .collect();
        let a_ft = spectral_function(&retarded);
        let a_direct = spectral_function(&direct);
        let max_dev = a_ft
            .iter()
            .zip(&a_direct)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.05, "max spectral deviation {max_dev}");
    }

    #[test]
    fn lehmann_set_sanitizes_input() {
        let set = LehmannSet::new(vec![
            LehmannPole { omega: 1.0, alpha: -1e-12, beta: 0.5 },
            LehmannPole { omega: 1.0 + 1e-12, alpha: 0.25, beta: 0.25 },
            LehmannPole { omega: 2.0, alpha: 1e-16, beta: 0.0 },
        ]);
        assert_eq!(set.poles().len(), 1);
        assert_abs_diff_eq!(set.total_weight(), 1.0, epsilon = 1e-10);
        assert!(set.poles()[0].alpha >= 0.0);
    }
}
