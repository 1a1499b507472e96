//! Small dense optimizers shared by the bath fit, the Lehmann fit and the
//! variational loops.

use nalgebra::{DMatrix, DVector};

/// Least-squares problem with an analytic Jacobian.
pub trait LeastSquares {
    fn n_residuals(&self) -> usize;
    fn n_params(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>);
    /// Box-constraint hook applied after every accepted step.
    fn project(&self, _params: &mut [f64]) {}
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
    pub lambda_init: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-12, step_tol: 1e-14, cost_tol: 1e-24, lambda_init: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sse(problem: &impl LeastSquares, params: &[f64], buf: &mut [f64]) -> f64 {
    problem.residuals(params, buf);
    buf.iter().map(|r| r * r).sum()
}

/// Levenberg-Marquardt with Marquardt diagonal scaling.
pub fn lm_minimize(problem: &impl LeastSquares, initial: &[f64], options: &LmOptions) -> LmResult {
    let m = problem.n_residuals();
    let k = problem.n_params();
    assert_eq!(initial.len(), k);
    let mut params = initial.to_vec();
    problem.project(&mut params);
    let mut resid = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, k);
    let mut cost = sse(problem, &params, &mut resid);
    let mut lambda = options.lambda_init;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..options.max_iters {
        iterations = iter + 1;
        problem.jacobian(&params, &mut jac);
        let r = DVector::from_column_slice(&resid);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        if grad.amax() < options.grad_tol || cost < options.cost_tol {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..24 {
            let mut lhs = jtj.clone();
            for d in 0..k {
                let scale = jtj[(d, d)].max(1e-12);
                lhs[(d, d)] += lambda * scale;
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p - s).collect();
            problem.project(&mut trial);
            let trial_cost = sse(problem, &trial, &mut resid);
            if trial_cost < cost {
                let step_size = step.amax();
                params = trial;
                cost = trial_cost;
                lambda = (lambda * 0.33).max(1e-12);
                accepted = true;
                if step_size < options.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted {
            // No downhill step left at any damping: treat as (local) convergence.
            converged = true;
            sse(problem, &params, &mut resid);
            break;
        }
        if converged {
            break;
        }
        // Refresh residuals for the next Jacobian evaluation.
        sse(problem, &params, &mut resid);
    }
    LmResult { params, cost, iterations, converged }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop as soon as the cost drops below this value.
    pub cost_tol: f64,
    /// A plateau is declared when the best cost improves by less than
    /// `plateau_rel_tol` (relative) over `plateau_window` iterations.
    pub plateau_window: usize,
    pub plateau_rel_tol: f64,
    /// On a plateau, shrink the step this many times before stopping.
    pub max_decays: usize,
    pub decay_factor: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 500,
            cost_tol: 1e-10,
            plateau_window: 25,
            plateau_rel_tol: 1e-12,
            max_decays: 8,
            decay_factor: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CostTol,
    Plateau,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct AdamOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

impl AdamOutcome {
    /// True when the run ended with the cost still above `cost_tol`.
    pub fn stagnated(&self, options: &AdamOptions) -> bool {
        self.cost >= options.cost_tol
    }
}

/// Gradient descent with adaptive moment estimates; returns the best visited point.
pub fn adam_minimize(
    mut cost_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    initial: &[f64],
    options: &AdamOptions,
) -> AdamOutcome {
    let k = initial.len();
    let mut params = initial.to_vec();
    let mut m = vec![0.0; k];
    let mut v = vec![0.0; k];
    let (mut best_cost, grad0) = cost_and_grad(&params);
    let mut best_params = params.clone();
    let mut grad = grad0;
    let mut lr = options.learning_rate;
    let mut decays_left = options.max_decays;
    let mut window_best = best_cost;
    let mut window_start = 0usize;
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIters;

    if best_cost < options.cost_tol {
        return AdamOutcome { params: best_params, cost: best_cost, iterations: 0, stop_reason: StopReason::CostTol };
    }
    for t in 1..=options.max_iters {
        iterations = t;
        let b1t = 1.0 - options.beta1.powi(t as i32);
        let b2t = 1.0 - options.beta2.powi(t as i32);
        for i in 0..k {
            m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad[i];
            v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / b1t;
            let v_hat = v[i] / b2t;
            params[i] -= lr * m_hat / (v_hat.sqrt() + options.epsilon);
        }
        let (cost, g) = cost_and_grad(&params);
        grad = g;
        if cost < best_cost {
            best_cost = cost;
            best_params.copy_from_slice(&params);
        }
        if best_cost < options.cost_tol {
            stop_reason = StopReason::CostTol;
            break;
        }
        if t - window_start >= options.plateau_window {
            let improvement = window_best - best_cost;
            let plateaued = improvement.abs() < options.plateau_rel_tol * window_best.abs().max(1e-300);
            if plateaued {
                if decays_left == 0 {
                    stop_reason = StopReason::Plateau;
                    break;
                }
                decays_left -= 1;
                lr *= options.decay_factor;
                params.copy_from_slice(&best_params);
                m.fill(0.0);
                v.fill(0.0);
            }
            window_best = best_cost;
            window_start = t;
        }
    }
    AdamOutcome { params: best_params, cost: best_cost, iterations, stop_reason }
}
