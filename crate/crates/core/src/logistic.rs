//! Regularized logistic estimator with confidence bonuses.
//!
//! The estimator keeps the design matrix `V_t = Σ φφᵀ·1{a≠null} + κλI`, a
//! maximum-likelihood fit `θ̃` of the conversion parameter and its
//! projection `θ̂` onto the ball `‖θ‖ ≤ S`. Bonuses take the form
//! `ε_t(a,x) = γ_t · √(κ(S + ½)) · ‖φ(a,x)‖_{V_t⁻¹}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::env::{sigmoid, sigmoid_deriv, softplus, History};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

const NEWTON_GRAD_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 200;
const ARMIJO_C: f64 = 1e-4;
/// Gradient norm accepted when the line search can no longer make progress
/// in floating point.
const NEWTON_FLOOR_TOL: f64 = 1e-8;
const PROJECTION_STEPS: usize = 100;
/// Exact re-inversion cadence for the Sherman–Morrison maintained inverse.
const REINVERT_EVERY: usize = 64;

/// Aggregated Bernoulli observations sharing one feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedObs {
    pub phi: DVector<f64>,
    pub trials: f64,
    pub successes: f64,
}

/// Observation counts per (context, action) cell of a finite instance.
///
/// Since `φ` only depends on the cell, the log-likelihood of a history is a
/// sum over cells, which keeps a full refit independent of the run length.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    n_actions: usize,
    cells: Vec<GroupedObs>,
}

impl ObservationTable {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self::from_features(&spec.transfer)
    }

    /// Builds an empty table over a `[context][action]` feature table.
    pub fn from_features(features: &[Vec<Vec<f64>>]) -> Self {
        let n_actions = features.first().map_or(0, Vec::len);
        let cells = features
            .iter()
            .flat_map(|row| row.iter())
            .map(|phi| GroupedObs {
                phi: DVector::from_column_slice(phi),
                trials: 0.0,
                successes: 0.0,
            })
            .collect();
        Self { n_actions, cells }
    }

    pub fn record(&mut self, action: usize, context: usize, y: u8) {
        let cell = &mut self.cells[context * self.n_actions + action];
        cell.trials += 1.0;
        cell.successes += f64::from(y);
    }

    pub fn observations(&self) -> &[GroupedObs] {
        &self.cells
    }

    pub fn total_trials(&self) -> f64 {
        self.cells.iter().map(|c| c.trials).sum()
    }
}

/// Regularized log-likelihood `Σ [y ln η + (1−y) ln(1−η)] − (λ/2)‖θ‖²`.
pub fn log_likelihood(obs: &[GroupedObs], theta: &DVector<f64>, lambda: f64) -> f64 {
    let mut ll = -0.5 * lambda * theta.norm_squared();
    for o in obs.iter().filter(|o| o.trials > 0.0) {
        let z = o.phi.dot(theta);
        ll -= o.successes * softplus(-z) + (o.trials - o.successes) * softplus(z);
    }
    ll
}

/// Gradient of [`log_likelihood`].
pub fn log_likelihood_grad(obs: &[GroupedObs], theta: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let mut g = theta * (-lambda);
    for o in obs.iter().filter(|o| o.trials > 0.0) {
        let z = o.phi.dot(theta);
        g.axpy(o.successes - o.trials * sigmoid(z), &o.phi, 1.0);
    }
    g
}

fn neg_hessian(obs: &[GroupedObs], theta: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let m = theta.len();
    let mut h = DMatrix::identity(m, m) * lambda;
    for o in obs.iter().filter(|o| o.trials > 0.0) {
        let w = o.trials * sigmoid_deriv(o.phi.dot(theta));
        h.ger(w, &o.phi, &o.phi, 1.0);
    }
    h
}

/// Maximizes the regularized log-likelihood by damped Newton steps.
///
/// The objective is strictly concave, so the maximizer is unique; `init`
/// only affects the iteration count.
pub fn fit_mle(
    obs: &[GroupedObs],
    m: usize,
    lambda: f64,
    init: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let mut theta = init.cloned().unwrap_or_else(|| DVector::zeros(m));
    let mut value = log_likelihood(obs, &theta, lambda);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let grad = log_likelihood_grad(obs, &theta, lambda);
        grad_norm = grad.norm();
        if grad_norm <= NEWTON_GRAD_TOL {
            return Ok(theta);
        }
        let h = neg_hessian(obs, &theta, lambda);
        let dir = match h.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let slope = grad.dot(&dir);
        // Near the optimum the objective stops resolving; a full step that
        // shrinks the gradient is taken regardless of the sufficient-increase test.
        let full = &theta + &dir;
        let full_value = log_likelihood(obs, &full, lambda);
        if full_value >= value + ARMIJO_C * slope
            || log_likelihood_grad(obs, &full, lambda).norm() < 0.5 * grad_norm
        {
            theta = full;
            value = full_value;
            continue;
        }
        let mut step = 0.5;
        let mut moved = false;
        while step > 1e-16 {
            let cand = &theta + &dir * step;
            let cand_value = log_likelihood(obs, &cand, lambda);
            if cand_value > value && cand_value >= value + ARMIJO_C * step * slope {
                theta = cand;
                value = cand_value;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if grad_norm <= NEWTON_FLOOR_TOL {
        let final_norm = log_likelihood_grad(obs, &theta, lambda).norm();
        if final_norm <= NEWTON_FLOOR_TOL {
            return Ok(theta);
        }
    }
    let final_norm = log_likelihood_grad(obs, &theta, lambda).norm();
    if final_norm <= NEWTON_GRAD_TOL {
        return Ok(theta);
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        grad_norm: final_norm,
    })
}

/// Fits directly from a run history, grouping rounds by (context, action).
pub fn fit_mle_history(history: &History, spec: &ProblemSpec, lambda: f64) -> Result<DVector<f64>> {
    let mut table = ObservationTable::new(spec);
    for o in history.outcomes.iter().filter(|o| !spec.is_null(o.action_id)) {
        table.record(o.action_id, o.context_id, o.y);
    }
    fit_mle(table.observations(), spec.dim(), lambda, None)
}

/// `κ = max over non-null (a,x) of 1/η̇(‖φ(a,x)‖·S)`.
///
/// Uses the identity `1/η̇(z) = 2 + eᶻ + e⁻ᶻ`.
pub fn compute_kappa(spec: &ProblemSpec, theta_bound: f64) -> f64 {
    compute_kappa_from_features(&spec.transfer, spec.null_action, theta_bound)
}

pub fn compute_kappa_from_features(
    features: &[Vec<Vec<f64>>],
    null_action: usize,
    theta_bound: f64,
) -> f64 {
    let max_norm = features
        .iter()
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .filter(move |(a, _)| *a != null_action)
                .map(|(_, phi)| phi.iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .fold(0.0, f64::max);
    let z = max_norm * theta_bound;
    2.0 + z.exp() + (-z).exp()
}

/// Confidence radius `γ_{t,λ,δ} = √λ(S + ½) + (2/√λ) ln((2^m/δ)(1 + t/(4mλ))^{m/2})`.
pub fn gamma(t: usize, lambda: f64, delta: f64, m: usize, theta_bound: f64) -> f64 {
    let mf = m as f64;
    let log_term = mf * std::f64::consts::LN_2 - delta.ln()
        + 0.5 * mf * (t as f64 / (4.0 * mf * lambda)).ln_1p();
    lambda.sqrt() * (theta_bound + 0.5) + 2.0 / lambda.sqrt() * log_term
}

/// Bound `E_T` on twice the summed bonuses at played non-null actions.
pub fn bonus_sum_bound(
    horizon: usize,
    lambda: f64,
    delta: f64,
    m: usize,
    theta_bound: f64,
    kappa: f64,
) -> f64 {
    let t = horizon as f64;
    let mf = m as f64;
    let kl = kappa * lambda;
    gamma(horizon, lambda, delta, m, theta_bound)
        * (kappa * (4.0 * theta_bound + 2.0)).sqrt()
        * (2.0 * mf * t * f64::max(1.0, 1.0 / kl) * (t / (kl * mf)).ln_1p()).sqrt()
}

/// Right-hand side of the elliptic potential inequality,
/// `2m·max{1, 1/λ}·ln(1 + τ/(λm))`.
pub fn elliptic_potential_bound(m: usize, lambda: f64, tau: usize) -> f64 {
    let mf = m as f64;
    2.0 * mf * f64::max(1.0, 1.0 / lambda) * (tau as f64 / (lambda * mf)).ln_1p()
}

/// `λ = m ln(1 + T/m)`.
pub fn default_lambda(m: usize, horizon: usize) -> f64 {
    let mf = m as f64;
    mf * (horizon as f64 / mf).ln_1p()
}

/// Estimated conversion probability with its optimistic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBound {
    pub p_hat: f64,
    pub epsilon: f64,
    pub upper: f64,
}

impl ConfidenceBound {
    pub fn new(p_hat: f64, epsilon: f64) -> Self {
        Self {
            p_hat,
            epsilon,
            upper: f64::min(p_hat + epsilon, 1.0),
        }
    }
}

/// Evolving state of the estimator.
#[derive(Debug, Clone)]
pub struct LogisticState {
    pub lambda: f64,
    pub m: usize,
    pub kappa: f64,
    pub theta_bound: f64,
    pub delta: f64,
    pub theta_tilde: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub design: DMatrix<f64>,
    pub obs_count: usize,
    /// Rounds elapsed, null rounds included; indexes `γ_t`.
    pub rounds: usize,
    /// Number of fits whose MLE left the ball and needed projection.
    pub projections: usize,
    pub last_projection_objective: Option<f64>,
    design_inv: DMatrix<f64>,
    updates_since_inverse: usize,
}

impl LogisticState {
    pub fn new(m: usize, lambda: f64, kappa: f64, theta_bound: f64, delta: f64) -> Self {
        let diag = kappa * lambda;
        Self {
            lambda,
            m,
            kappa,
            theta_bound,
            delta,
            theta_tilde: DVector::zeros(m),
            theta_hat: DVector::zeros(m),
            design: DMatrix::identity(m, m) * diag,
            obs_count: 0,
            rounds: 0,
            projections: 0,
            last_projection_objective: None,
            design_inv: DMatrix::identity(m, m) / diag,
            updates_since_inverse: 0,
        }
    }

    /// Advances one round; a `Some` feature vector (non-null action) adds
    /// its outer product to the design matrix.
    pub fn update_design(&mut self, phi: Option<&[f64]>) {
        self.rounds += 1;
        let Some(phi) = phi else { return };
        let v = DVector::from_column_slice(phi);
        self.design.ger(1.0, &v, &v, 1.0);
        self.obs_count += 1;
        self.updates_since_inverse += 1;
        if self.updates_since_inverse >= REINVERT_EVERY {
            self.reinvert();
        } else {
            // Sherman–Morrison.
            let u = &self.design_inv * &v;
            let denom = 1.0 + v.dot(&u);
            self.design_inv.ger(-1.0 / denom, &u, &u, 1.0);
        }
    }

    fn reinvert(&mut self) {
        let sym = (&self.design + self.design.transpose()) * 0.5;
        self.design_inv = sym
            .cholesky()
            .expect("design matrix is positive definite")
            .inverse();
        self.updates_since_inverse = 0;
    }

    pub fn design_inverse(&self) -> &DMatrix<f64> {
        &self.design_inv
    }

    /// `‖φ‖_{V⁻¹}`.
    pub fn weighted_norm(&self, phi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(phi);
        (&self.design_inv * &v).dot(&v).max(0.0).sqrt()
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.rounds, self.lambda, self.delta, self.m, self.theta_bound)
    }

    /// Theoretical bonus `γ_t √(κ(S+½)) ‖φ‖_{V_t⁻¹}`.
    pub fn bonus(&self, phi: &[f64]) -> f64 {
        self.gamma() * (self.kappa * (self.theta_bound + 0.5)).sqrt() * self.weighted_norm(phi)
    }

    pub fn p_hat(&self, phi: &[f64]) -> f64 {
        sigmoid(phi.iter().zip(self.theta_hat.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn upper_bound(&self, phi: &[f64], epsilon: f64) -> ConfidenceBound {
        ConfidenceBound::new(self.p_hat(phi), epsilon)
    }

    /// Full refit: MLE followed by projection onto the parameter ball.
    pub fn refit(&mut self, obs: &[GroupedObs]) -> Result<()> {
        let init = self.theta_tilde.clone();
        self.theta_tilde = fit_mle(obs, self.m, self.lambda, Some(&init))?;
        let (hat, objective) = project_theta(&self.theta_tilde, self, obs);
        if objective.is_some() {
            self.projections += 1;
            self.last_projection_objective = objective;
        }
        self.theta_hat = hat;
        Ok(())
    }
}

fn psi(obs: &[GroupedObs], theta: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let mut out = theta * lambda;
    for o in obs.iter().filter(|o| o.trials > 0.0) {
        out.axpy(o.trials * sigmoid(o.phi.dot(theta)), &o.phi, 1.0);
    }
    out
}

/// `‖Ψ(θ) − Ψ(θ̃)‖_{W(θ)⁻¹}` with `W(θ) = λI + Σ η̇(φᵀθ) φφᵀ`.
pub fn projection_objective(
    obs: &[GroupedObs],
    theta: &DVector<f64>,
    theta_tilde: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let r = psi(obs, theta, lambda) - psi(obs, theta_tilde, lambda);
    let w = neg_hessian(obs, theta, lambda);
    let q = w
        .cholesky()
        .map_or_else(|| r.norm_squared() / lambda, |ch| ch.solve(&r).dot(&r));
    q.max(0.0).sqrt()
}

fn ball_projection(theta: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = theta.norm();
    if n <= radius {
        theta.clone()
    } else {
        theta * (radius / n)
    }
}

/// Projects the MLE onto `‖θ‖ ≤ S`.
///
/// Inside the ball the MLE is returned unchanged and the objective is
/// `None`. Otherwise projected gradient descent on the projection objective
/// starts from the radial projection and only accepts decreasing steps; the
/// final objective value is returned.
pub fn project_theta(
    theta_tilde: &DVector<f64>,
    state: &LogisticState,
    obs: &[GroupedObs],
) -> (DVector<f64>, Option<f64>) {
    let radius = state.theta_bound;
    if theta_tilde.norm() <= radius {
        return (theta_tilde.clone(), None);
    }
    let lambda = state.lambda;
    let f = |th: &DVector<f64>| projection_objective(obs, th, theta_tilde, lambda);
    let mut theta = ball_projection(theta_tilde, radius);
    let mut value = f(&theta);
    let mut step = 1.0;
    for _ in 0..PROJECTION_STEPS {
        let h = 1e-6 * theta.norm().max(1.0);
        let grad = DVector::from_fn(theta.len(), |i, _| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        });
        if grad.norm() < 1e-14 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let cand = ball_projection(&(&theta - &grad * step), radius);
            let cand_value = f(&cand);
            if cand_value < value {
                theta = cand;
                value = cand_value;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (theta, Some(value))
}
