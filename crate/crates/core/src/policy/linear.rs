//! Linear CBwK: the LinUCB policy solving the static program, and the
//! dual-descent baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    budget_guard, sample_action, uniform_non_null, update_nu_hat, BonusKind, NuEstimate, NuMode,
    Policy, PolicyConfig, WorkingBudget,
};
use crate::env::{History, RoundDiagnostics, RoundOutcome};
use crate::error::{Error, Result};
use crate::logistic::{default_lambda, elliptic_potential_bound};
use crate::lp::{build_lp, check_kkt, solve_lp, LpProblem, LpSolution, LpStatus};
use crate::problem::ProblemSpec;
use crate::rng::StreamRng;

/// Ridge estimates of the reward and cost parameters.
#[derive(Debug, Clone)]
pub struct LinEstimator {
    pub lambda: f64,
    /// `X_t = Σ φφᵀ·1{a≠null} + λI`.
    pub x_design: DMatrix<f64>,
    pub mu_hat: DVector<f64>,
    pub theta_hats: Vec<DVector<f64>>,
    pub n_obs: usize,
    b_reward: DVector<f64>,
    b_cost: Vec<DVector<f64>>,
    design_inv: DMatrix<f64>,
    stale: bool,
}

impl LinEstimator {
    pub fn new(m: usize, d: usize, lambda: f64) -> Self {
        Self {
            lambda,
            x_design: DMatrix::identity(m, m) * lambda,
            mu_hat: DVector::zeros(m),
            theta_hats: vec![DVector::zeros(m); d],
            n_obs: 0,
            b_reward: DVector::zeros(m),
            b_cost: vec![DVector::zeros(m); d],
            design_inv: DMatrix::identity(m, m) / lambda,
            stale: false,
        }
    }

    pub fn observe(&mut self, phi: &[f64], reward: f64, cost: &[f64]) {
        let v = DVector::from_column_slice(phi);
        self.x_design.ger(1.0, &v, &v, 1.0);
        self.b_reward.axpy(reward, &v, 1.0);
        for (b, &c) in self.b_cost.iter_mut().zip(cost) {
            b.axpy(c, &v, 1.0);
        }
        self.n_obs += 1;
        self.stale = true;
    }

    /// Recomputes the ridge solutions from the sufficient statistics.
    pub fn refresh(&mut self) {
        if !self.stale {
            return;
        }
        let chol = self
            .x_design
            .clone()
            .cholesky()
            .expect("ridge design is positive definite");
        self.mu_hat = chol.solve(&self.b_reward);
        self.theta_hats = self.b_cost.iter().map(|b| chol.solve(b)).collect();
        self.design_inv = chol.inverse();
        self.stale = false;
    }

    /// `‖φ‖_{X⁻¹}`; call [`LinEstimator::refresh`] first.
    pub fn weighted_norm(&self, phi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(phi);
        (&self.design_inv * &v).dot(&v).max(0.0).sqrt()
    }

    pub fn reward_hat(&self, phi: &[f64]) -> f64 {
        self.mu_hat.iter().zip(phi).map(|(a, b)| a * b).sum()
    }

    pub fn cost_hat(&self, phi: &[f64]) -> Vec<f64> {
        self.theta_hats
            .iter()
            .map(|th| th.iter().zip(phi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest residual of the normal equations `X μ = Σ φ r`.
    pub fn normal_residual(&self) -> f64 {
        let mut worst = (&self.x_design * &self.mu_hat - &self.b_reward).amax();
        for (th, b) in self.theta_hats.iter().zip(&self.b_cost) {
            worst = worst.max((&self.x_design * th - b).amax());
        }
        worst
    }
}

/// Ridge fit over the non-null rounds of a history.
pub fn lin_fit(
    history: &History,
    features: &[Vec<Vec<f64>>],
    null_action: usize,
    lambda: f64,
) -> Result<LinEstimator> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let m = features
        .iter()
        .flatten()
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    let mut est = LinEstimator::new(m, history.cumulative_cost.len(), lambda);
    for o in history.outcomes.iter().filter(|o| o.action_id != null_action) {
        est.observe(&features[o.context_id][o.action_id], o.reward, &o.cost);
    }
    est.refresh();
    Ok(est)
}

/// `¼√(m ln((1 + t/(λm)) / (δ/(d+1)))) + √λ·S`.
pub fn lin_gamma(t: usize, lambda: f64, delta: f64, m: usize, d: usize, theta_bound: f64) -> f64 {
    let mf = m as f64;
    let arg = (1.0 + t as f64 / (lambda * mf)) / (delta / (d as f64 + 1.0));
    0.25 * (mf * arg.ln()).sqrt() + lambda.sqrt() * theta_bound
}

/// The `b_T` margin of the linear policy,
/// `2 + m(2√2 S + 1)√T ln((1+T/m)/(δ/(d+1))) + √(2T ln(4d/δ)) + |X|√(2T ln(2T|X|/δ))`.
pub fn lin_bt(
    horizon: usize,
    d: usize,
    delta: f64,
    m: usize,
    theta_bound: f64,
    n_contexts: usize,
) -> f64 {
    let t = horizon as f64;
    let mf = m as f64;
    let nx = n_contexts as f64;
    let df = d as f64;
    let estimation = mf
        * (2.0 * std::f64::consts::SQRT_2 * theta_bound + 1.0)
        * t.sqrt()
        * ((1.0 + t / mf) / (delta / (df + 1.0))).ln();
    let concentration = (2.0 * t * (4.0 * df / delta).ln()).sqrt();
    let contexts = if horizon == 0 {
        0.0
    } else {
        nx * (2.0 * t * (2.0 * t * nx / delta).ln()).sqrt()
    };
    2.0 + estimation + concentration + contexts
}

/// Clamped optimistic reward and pessimistic cost bounds:
/// `U = clamp(r̂ + ε, 0, 1)`, `L = clamp(ĉ − ε, 0, 1)`.
pub fn conf_bounds_lin(est: &LinEstimator, phi: &[f64], epsilon: f64) -> (f64, Vec<f64>) {
    let u = (est.reward_hat(phi) + epsilon).clamp(0.0, 1.0);
    let l = est
        .cost_hat(phi)
        .into_iter()
        .map(|c| (c - epsilon).clamp(0.0, 1.0))
        .collect();
    (u, l)
}

/// Euclidean projection onto `{ζ ≥ 0, Σζ ≤ 1}`.
pub fn project_l1(v: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 1.0 {
        return clamped;
    }
    let mut sorted = clamped.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        acc += s;
        let candidate = (acc - 1.0) / (k as f64 + 1.0);
        if s - candidate > 0.0 {
            tau = candidate;
        }
    }
    clamped.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Dual iterate of the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDState {
    pub zeta: Vec<f64>,
    pub z: f64,
    pub eta: f64,
}

/// `ζ ← Π(ζ + η(c − (B/T)·1))`.
pub fn pgd_update(state: &mut BoxDState, cost: &[f64], budget: f64, horizon: usize) {
    let rate = budget / horizon as f64;
    let step: Vec<f64> = state
        .zeta
        .iter()
        .zip(cost)
        .map(|(z, c)| z + state.eta * (c - rate))
        .collect();
    state.zeta = project_l1(&step);
}

/// Shared bookkeeping of the two linear policies.
#[derive(Debug, Clone)]
struct LinCore {
    spec: ProblemSpec,
    features: Vec<Vec<Vec<f64>>>,
    cfg: PolicyConfig,
    est: LinEstimator,
    m: usize,
    cum_cost: Vec<f64>,
    locked: bool,
    lock_round: Option<usize>,
    round: usize,
    bonus_sum: f64,
    pending_bonus: f64,
}

impl LinCore {
    fn new(spec: ProblemSpec, features: Vec<Vec<Vec<f64>>>, cfg: PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.oracle {
            return Err(Error::InvalidConfig(
                "oracle mode is only available for the conversion policy".into(),
            ));
        }
        let shape_ok = features.len() == spec.n_contexts()
            && features.iter().all(|r| r.len() == spec.n_actions());
        if !shape_ok {
            return Err(Error::InvalidProblem("feature table shape mismatch".into()));
        }
        let m = features
            .iter()
            .flat_map(|r| r.iter().enumerate().filter(|(a, _)| *a != spec.null_action))
            .map(|(_, phi)| phi.len())
            .max()
            .unwrap_or(0);
        let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(m, spec.horizon));
        Ok(Self {
            est: LinEstimator::new(m, spec.n_costs(), lambda),
            m,
            cum_cost: vec![0.0; spec.n_costs()],
            locked: false,
            lock_round: None,
            round: 0,
            bonus_sum: 0.0,
            pending_bonus: 0.0,
            spec,
            features,
            cfg,
        })
    }

    fn gamma(&self) -> f64 {
        lin_gamma(
            self.round,
            self.est.lambda,
            self.cfg.delta,
            self.m,
            self.spec.n_costs(),
            self.spec.theta_bound,
        )
    }

    fn epsilon(&self, action: usize, context: usize) -> f64 {
        self.epsilon_with(&self.est, action, context)
    }

    fn epsilon_with(&self, est: &LinEstimator, action: usize, context: usize) -> f64 {
        let norm = est.weighted_norm(&self.features[context][action]);
        let width = match self.cfg.bonus {
            BonusKind::Theory => self.gamma(),
            BonusKind::Practical => 1.0 + (self.round.max(1) as f64).ln(),
        };
        self.cfg.explore_scale * width * norm
    }

    /// Guard check at the start of a round; true when the no-op is forced.
    fn guard(&mut self) -> bool {
        self.pending_bonus = 0.0;
        if self.locked || budget_guard(&self.cum_cost, self.spec.budget) {
            if !self.locked {
                self.locked = true;
                self.lock_round = Some(self.round + 1);
            }
            return true;
        }
        false
    }

    fn record(&mut self, outcome: &RoundOutcome) {
        for (acc, c) in self.cum_cost.iter_mut().zip(&outcome.cost) {
            *acc += c;
        }
        if !self.spec.is_null(outcome.action_id) {
            self.bonus_sum += 2.0 * self.pending_bonus;
            let phi = &self.features[outcome.context_id][outcome.action_id];
            self.est.observe(phi, outcome.reward, &outcome.cost);
        }
        self.pending_bonus = 0.0;
        self.round += 1;
    }

    fn diagnostics(&self) -> RoundDiagnostics {
        let mut est = self.est.clone();
        est.refresh();
        let max_eps = (0..self.spec.n_contexts())
            .flat_map(|x| self.spec.non_null_actions().map(move |a| (a, x)))
            .map(|(a, x)| self.epsilon_with(&est, a, x))
            .fold(0.0, f64::max);
        RoundDiagnostics {
            gamma: self.gamma(),
            theta_err: None,
            max_eps,
        }
    }

    fn bonus_sum_bound(&self) -> Option<f64> {
        let t = self.spec.horizon;
        let width = match self.cfg.bonus {
            BonusKind::Theory => lin_gamma(
                t,
                self.est.lambda,
                self.cfg.delta,
                self.m,
                self.spec.n_costs(),
                self.spec.theta_bound,
            ),
            BonusKind::Practical => 1.0 + (t.max(1) as f64).ln(),
        };
        let potential = elliptic_potential_bound(self.m, self.est.lambda, t);
        Some(2.0 * self.cfg.explore_scale * width * (t as f64 * potential).sqrt())
    }
}

/// LinUCB estimates fed into the static program: gains `U`, cost rates `L`.
#[derive(Debug, Clone)]
pub struct LinUcbPolicy {
    core: LinCore,
    pub nu_hat: NuEstimate,
    pub working_budget: f64,
    cache: Option<(LpProblem, LpSolution)>,
    fallbacks: usize,
    kkt_failures: usize,
}

impl LinUcbPolicy {
    pub fn new(spec: ProblemSpec, features: Vec<Vec<Vec<f64>>>, cfg: PolicyConfig) -> Result<Self> {
        if cfg.nu_mode == NuMode::Known && spec.context_weights.is_none() {
            return Err(Error::MissingDistribution);
        }
        let core = LinCore::new(spec, features, cfg)?;
        let spec = &core.spec;
        let working_budget = match core.cfg.working_budget {
            WorkingBudget::Full => spec.budget,
            WorkingBudget::Theory => {
                spec.budget
                    - lin_bt(
                        spec.horizon,
                        spec.n_costs(),
                        core.cfg.delta,
                        core.m,
                        spec.theta_bound,
                        spec.n_contexts(),
                    )
            }
        };
        Ok(Self {
            nu_hat: NuEstimate::new(spec.n_contexts()),
            working_budget,
            cache: None,
            fallbacks: 0,
            kkt_failures: 0,
            core,
        })
    }

    pub fn estimator(&self) -> &LinEstimator {
        &self.core.est
    }

    fn current_lp(&self) -> LpProblem {
        let spec = &self.core.spec;
        let (nx, na, d) = (spec.n_contexts(), spec.n_actions(), spec.n_costs());
        let mut gain = vec![vec![0.0; na]; nx];
        let mut cost_rate = vec![vec![vec![0.0; d]; na]; nx];
        for x in 0..nx {
            for a in spec.non_null_actions() {
                let eps = self.core.epsilon(a, x);
                let (u, l) = conf_bounds_lin(&self.core.est, &self.core.features[x][a], eps);
                gain[x][a] = u;
                cost_rate[x][a] = l;
            }
        }
        let nu = match self.core.cfg.nu_mode {
            NuMode::Known => spec.context_weights.clone().expect("checked at construction"),
            NuMode::Empirical => self.nu_hat.distribution(),
        };
        build_lp(nu, gain, cost_rate, self.working_budget, spec.horizon as f64, spec.null_action)
    }
}

impl Policy for LinUcbPolicy {
    fn act(&mut self, context: usize, rng: &mut StreamRng) -> Result<usize> {
        update_nu_hat(&mut self.nu_hat, context);
        if self.core.guard() {
            return Ok(self.core.spec.null_action);
        }
        self.core.est.refresh();
        let t = self.core.round + 1;
        let a = if t <= self.core.cfg.warm_start {
            uniform_non_null(&self.core.spec, rng)
        } else if t == 1 {
            self.core.spec.non_null_actions().next().expect("validated instance")
        } else {
            let lp = self.current_lp();
            let hit = matches!(&self.cache, Some((prev, _)) if *prev == lp);
            if !hit {
                match solve_lp(&lp) {
                    Ok(sol) => {
                        if self.core.cfg.check_kkt
                            && sol.status == LpStatus::Optimal
                            && !check_kkt(&lp, &sol, 1e-8).passed
                        {
                            self.kkt_failures += 1;
                        }
                        self.cache = Some((lp, sol));
                    }
                    Err(Error::NumericalInstability(_)) => {
                        self.fallbacks += 1;
                        self.cache = None;
                        return Ok(self.core.spec.null_action);
                    }
                    Err(e) => return Err(e),
                }
            }
            let sol = &self.cache.as_ref().expect("filled above").1;
            sample_action(&sol.pi[context], rng)
        };
        if !self.core.spec.is_null(a) {
            self.core.pending_bonus = self.core.epsilon(a, context);
        }
        Ok(a)
    }

    fn record(&mut self, outcome: &RoundOutcome) {
        self.core.record(outcome);
    }

    fn diagnostics(&self) -> RoundDiagnostics {
        self.core.diagnostics()
    }

    fn lock_round(&self) -> Option<usize> {
        self.core.lock_round
    }

    fn bonus_sum(&self) -> f64 {
        self.core.bonus_sum
    }

    fn bonus_sum_bound(&self) -> Option<f64> {
        self.core.bonus_sum_bound()
    }

    fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn kkt_failures(&self) -> usize {
        self.kkt_failures
    }
}

/// The dual-descent baseline: greedy on `U − Z ζᵀL` with a projected
/// gradient step on `ζ` after every round.
#[derive(Debug, Clone)]
pub struct BoxDPolicy {
    core: LinCore,
    pub state: BoxDState,
}

impl BoxDPolicy {
    pub fn new(spec: ProblemSpec, features: Vec<Vec<Vec<f64>>>, cfg: PolicyConfig) -> Result<Self> {
        let z = cfg
            .z
            .ok_or_else(|| Error::InvalidConfig("the dual-descent policy needs `Z`".into()))?;
        let core = LinCore::new(spec, features, cfg)?;
        let state = BoxDState {
            zeta: vec![0.0; core.spec.n_costs()],
            z,
            eta: core.cfg.eta,
        };
        Ok(Self { core, state })
    }

    /// `U − Z ζᵀL` per non-null action, with the unclamped bounds.
    pub fn scores(&self, context: usize) -> Vec<(usize, f64)> {
        self.core
            .spec
            .non_null_actions()
            .map(|a| {
                let phi = &self.core.features[context][a];
                let eps = self.core.epsilon(a, context);
                let u = self.core.est.reward_hat(phi) + eps;
                let penalty: f64 = self
                    .state
                    .zeta
                    .iter()
                    .zip(self.core.est.cost_hat(phi))
                    .map(|(z, c)| z * (c - eps))
                    .sum();
                (a, u - self.state.z * penalty)
            })
            .collect()
    }
}

/// Index of the largest score; ties go to the smallest action index.
pub(crate) fn argmax_first(scores: &[(usize, f64)]) -> usize {
    let mut best = scores[0];
    for &(a, s) in &scores[1..] {
        if s > best.1 || s == best.1 && a < best.0 {
            best = (a, s);
        }
    }
    best.0
}

impl Policy for BoxDPolicy {
    fn act(&mut self, context: usize, rng: &mut StreamRng) -> Result<usize> {
        if self.core.guard() {
            return Ok(self.core.spec.null_action);
        }
        self.core.est.refresh();
        let t = self.core.round + 1;
        let a = if t <= self.core.cfg.warm_start {
            uniform_non_null(&self.core.spec, rng)
        } else {
            argmax_first(&self.scores(context))
        };
        self.core.pending_bonus = self.core.epsilon(a, context);
        Ok(a)
    }

    fn record(&mut self, outcome: &RoundOutcome) {
        self.core.record(outcome);
        pgd_update(
            &mut self.state,
            &outcome.cost,
            self.core.spec.budget,
            self.core.spec.horizon,
        );
    }

    fn diagnostics(&self) -> RoundDiagnostics {
        self.core.diagnostics()
    }

    fn lock_round(&self) -> Option<usize> {
        self.core.lock_round
    }

    fn bonus_sum(&self) -> f64 {
        self.core.bonus_sum
    }

    fn bonus_sum_bound(&self) -> Option<f64> {
        self.core.bonus_sum_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(t: usize, reward: f64) -> RoundOutcome {
        RoundOutcome {
            t,
            context_id: 0,
            action_id: 1,
            y: 1,
            reward,
            cost: vec![0.0],
        }
    }

    #[test]
    fn lin_fit_examples() {
        let features = vec![vec![vec![0.0], vec![1.0]]];
        let mut h = History::new(1);
        let est = lin_fit(&h, &features, 0, 1.0).unwrap();
        assert_eq!(est.mu_hat[0], 0.0);
        assert_eq!(est.theta_hats[0][0], 0.0);
        h.push(obs(1, 1.0));
        let est = lin_fit(&h, &features, 0, 1.0).unwrap();
        assert!((est.mu_hat[0] - 0.5).abs() < 1e-15);
        h.push(obs(2, 0.0));
        let est = lin_fit(&h, &features, 0, 1.0).unwrap();
        assert!((est.mu_hat[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(est.normal_residual() <= 1e-10);
    }

    #[test]
    fn lin_gamma_examples() {
        let g = lin_gamma(0, 1.0, 0.5, 1, 1, 1.0);
        assert!((g - 1.294_352_505_628_87).abs() < 1e-12);
        assert!(lin_gamma(0, 1.0, 0.5, 1, 3, 1.0) > g);
        assert!(lin_gamma(0, 1.0, 0.9, 1, 1, 0.0) > 0.0);
    }

    #[test]
    fn lin_bt_examples() {
        let b = lin_bt(100, 1, 0.5, 1, 1.0, 1);
        assert!((b - 286.769_502_511_840).abs() < 1e-9);
        assert!(lin_bt(200, 1, 0.5, 1, 1.0, 1) > b);
        assert!(lin_bt(100, 1, 0.5, 1, 1.0, 2) > b);
        assert!(lin_bt(100, 1, 0.5, 1, 2.0, 1) > b);
        let box_b_margin = 500.0 - super::super::budget_bt_empirical(500.0, 100, 1, 0.5, 1);
        assert!(b > box_b_margin);
    }

    #[test]
    fn conf_bounds_examples() {
        let mut est = LinEstimator::new(1, 1, 1.0);
        est.observe(&[1.0], 1.0, &[0.8]);
        est.refresh();
        // r̂ = 0.5, ĉ = 0.4.
        let (u, l) = conf_bounds_lin(&est, &[1.0], 0.1);
        assert!((u - 0.6).abs() < 1e-15 && (l[0] - 0.3).abs() < 1e-15);
        let (u, l) = conf_bounds_lin(&est, &[1.0], 1.0);
        assert_eq!((u, l[0]), (1.0, 0.0));
        let (u, l) = conf_bounds_lin(&est, &[1.0], 0.0);
        assert!((u - 0.5).abs() < 1e-15 && (l[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn project_l1_examples() {
        assert_eq!(project_l1(&[0.2, 0.3]), vec![0.2, 0.3]);
        let p = project_l1(&[0.6, 0.6]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(project_l1(&[-0.5, 2.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn pgd_update_examples() {
        let mut st = BoxDState {
            zeta: vec![0.0, 0.0],
            z: 1.0,
            eta: 0.1,
        };
        pgd_update(&mut st, &[1.0, 0.0], 50.0, 100);
        assert!((st.zeta[0] - 0.05).abs() < 1e-15);
        assert_eq!(st.zeta[1], 0.0);
        let before = st.zeta.clone();
        pgd_update(&mut st, &[0.5, 0.5], 50.0, 100);
        assert_eq!(st.zeta, before);
        for _ in 0..200 {
            pgd_update(&mut st, &[1.0, 1.0], 50.0, 100);
            assert!(st.zeta.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
        assert!((st.zeta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_first(&[(1, 0.40), (2, 0.45)]), 2);
        assert_eq!(argmax_first(&[(1, 0.45), (2, 0.45)]), 1);
    }

    /// Every point of the grid `{k/n}` inside the simplex `Σq ≤ 1`.
    fn simplex_grid(d: usize, n: usize, prefix: &mut Vec<f64>, left: usize, f: &mut impl FnMut(&[f64])) {
        if prefix.len() == d {
            f(prefix);
            return;
        }
        for k in 0..=left {
            prefix.push(k as f64 / n as f64);
            simplex_grid(d, n, prefix, left - k, f);
            prefix.pop();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn project_l1_beats_grid(v in prop::collection::vec(-1.5f64..1.5, 1..=5)) {
            let p = project_l1(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!(p.iter().sum::<f64>() <= 1.0 + 1e-12);
            let dist = |q: &[f64]| -> f64 {
                q.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            };
            let best = dist(&p);
            let n = if v.len() <= 3 { 100 } else { 20 };
            let mut worst_gap = f64::NEG_INFINITY;
            simplex_grid(v.len(), n, &mut Vec::new(), n, &mut |q| {
                worst_gap = worst_gap.max(best - dist(q));
            });
            prop_assert!(worst_gap <= 1e-12);
        }
    }
}
