//! The conversion-model policy: budget guard, logistic estimation and LP
//! sampling.

use nalgebra::DVector;

use super::{
    budget_bt, budget_bt_empirical, budget_guard, sample_action, uniform_non_null, update_nu_hat,
    BonusKind, NuEstimate, NuMode, Policy, PolicyConfig, WorkingBudget,
};
use crate::env::{dot, sigmoid, RoundDiagnostics, RoundOutcome};
use crate::error::{Error, Result};
use crate::logistic::{
    bonus_sum_bound, compute_kappa, default_lambda, LogisticState, ObservationTable,
};
use crate::lp::{build_lp, check_kkt, solve_lp, LpProblem, LpSolution, LpStatus};
use crate::problem::ProblemSpec;
use crate::rng::StreamRng;

const KKT_TOL: f64 = 1e-8;

/// Policy state for the logistic conversion model.
#[derive(Debug, Clone)]
pub struct ConversionPolicy {
    spec: ProblemSpec,
    cfg: PolicyConfig,
    truth: Option<DVector<f64>>,
    pub logistic: LogisticState,
    table: ObservationTable,
    pub cum_cost: Vec<f64>,
    pub locked: bool,
    lock_round: Option<usize>,
    pub nu_hat: NuEstimate,
    pub working_budget: f64,
    round: usize,
    fitted_at: Option<(usize, f64)>,
    bonus_sum: f64,
    pending_bonus: f64,
    cache: Option<(LpProblem, LpSolution)>,
    fallbacks: usize,
    kkt_failures: usize,
}

impl ConversionPolicy {
    pub fn new(spec: ProblemSpec, cfg: PolicyConfig, truth: Option<&[f64]>) -> Result<Self> {
        cfg.validate()?;
        let m = spec.dim();
        let truth = truth.map(DVector::from_column_slice);
        if cfg.oracle && truth.is_none() {
            return Err(Error::InvalidConfig("oracle mode needs the true parameter".into()));
        }
        if cfg.nu_mode == NuMode::Known && spec.context_weights.is_none() {
            return Err(Error::MissingDistribution);
        }
        let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(m, spec.horizon));
        let kappa = cfg.kappa.unwrap_or_else(|| match cfg.bonus {
            BonusKind::Theory => compute_kappa(&spec, spec.theta_bound),
            BonusKind::Practical => 1.0,
        });
        let working_budget = match (cfg.working_budget, cfg.nu_mode) {
            (WorkingBudget::Full, _) => spec.budget,
            (WorkingBudget::Theory, NuMode::Known) => {
                budget_bt(spec.budget, spec.horizon, spec.n_costs(), cfg.delta)
            }
            (WorkingBudget::Theory, NuMode::Empirical) => budget_bt_empirical(
                spec.budget,
                spec.horizon,
                spec.n_costs(),
                cfg.delta,
                spec.n_contexts(),
            ),
        };
        Ok(Self {
            logistic: LogisticState::new(m, lambda, kappa, spec.theta_bound, cfg.delta),
            table: ObservationTable::new(&spec),
            cum_cost: vec![0.0; spec.n_costs()],
            locked: false,
            lock_round: None,
            nu_hat: NuEstimate::new(spec.n_contexts()),
            working_budget,
            round: 0,
            fitted_at: None,
            bonus_sum: 0.0,
            pending_bonus: 0.0,
            cache: None,
            fallbacks: 0,
            kkt_failures: 0,
            spec,
            cfg,
            truth,
        })
    }

    /// Bonus used by the policy at `(a, x)` in the current state.
    pub fn epsilon(&self, action: usize, context: usize) -> f64 {
        if self.cfg.oracle {
            return 0.0;
        }
        let phi = self.spec.phi(action, context);
        let raw = match self.cfg.bonus {
            BonusKind::Theory => self.logistic.bonus(phi),
            BonusKind::Practical => {
                let s = self.logistic.rounds.max(1) as f64;
                (1.0 + s.ln()) * self.logistic.weighted_norm(phi)
            }
        };
        self.cfg.explore_scale * raw
    }

    fn p_hat(&self, action: usize, context: usize) -> f64 {
        let phi = self.spec.phi(action, context);
        match (&self.truth, self.cfg.oracle) {
            (Some(theta), true) => sigmoid(dot(phi, theta.as_slice())),
            _ => self.logistic.p_hat(phi),
        }
    }

    fn maybe_refit(&mut self) -> Result<()> {
        if self.cfg.oracle {
            return Ok(());
        }
        let trials = self.table.total_trials();
        let due = match self.fitted_at {
            None => true,
            Some((at, seen)) => self.round - at >= self.cfg.refit_every && trials > seen,
        };
        if due {
            self.logistic.refit(self.table.observations())?;
            self.fitted_at = Some((self.round, trials));
        }
        Ok(())
    }

    /// The static program for the current estimates.
    pub fn current_lp(&self) -> LpProblem {
        let (nx, na) = (self.spec.n_contexts(), self.spec.n_actions());
        let d = self.spec.n_costs();
        let mut gain = vec![vec![0.0; na]; nx];
        let mut cost_rate = vec![vec![vec![0.0; d]; na]; nx];
        for x in 0..nx {
            for a in self.spec.non_null_actions() {
                let u = (self.p_hat(a, x) + self.epsilon(a, x)).min(1.0);
                gain[x][a] = self.spec.reward(a, x) * u;
                cost_rate[x][a] = self.spec.cost(a, x).iter().map(|c| c * u).collect();
            }
        }
        let nu = match self.cfg.nu_mode {
            NuMode::Known => self.spec.context_weights.clone().expect("checked at construction"),
            NuMode::Empirical => self.nu_hat.distribution(),
        };
        build_lp(
            nu,
            gain,
            cost_rate,
            self.working_budget,
            self.spec.horizon as f64,
            self.spec.null_action,
        )
    }

    fn solve_cached(&mut self, lp: LpProblem) -> Result<&LpSolution> {
        let hit = matches!(&self.cache, Some((prev, _)) if *prev == lp);
        if !hit {
            let sol = solve_lp(&lp)?;
            if self.cfg.check_kkt
                && sol.status == LpStatus::Optimal
                && !check_kkt(&lp, &sol, KKT_TOL).passed
            {
                self.kkt_failures += 1;
            }
            self.cache = Some((lp, sol));
        }
        Ok(&self.cache.as_ref().expect("just filled").1)
    }
}

impl Policy for ConversionPolicy {
    fn act(&mut self, context: usize, rng: &mut StreamRng) -> Result<usize> {
        let t = self.round + 1;
        update_nu_hat(&mut self.nu_hat, context);
        self.pending_bonus = 0.0;
        if self.locked || budget_guard(&self.cum_cost, self.spec.budget) {
            if !self.locked {
                self.locked = true;
                self.lock_round = Some(t);
            }
            return Ok(self.spec.null_action);
        }
        if t <= self.cfg.warm_start {
            let a = uniform_non_null(&self.spec, rng);
            self.pending_bonus = self.epsilon(a, context);
            return Ok(a);
        }
        if t == 1 {
            let a = self.spec.non_null_actions().next().expect("validated instance");
            self.pending_bonus = self.epsilon(a, context);
            return Ok(a);
        }
        self.maybe_refit()?;
        let lp = self.current_lp();
        let a = match self.solve_cached(lp) {
            Ok(sol) => {
                let probs = sol.pi[context].clone();
                sample_action(&probs, rng)
            }
            Err(Error::NumericalInstability(_)) => {
                self.fallbacks += 1;
                self.spec.null_action
            }
            Err(e) => return Err(e),
        };
        if !self.spec.is_null(a) {
            self.pending_bonus = self.epsilon(a, context);
        }
        Ok(a)
    }

    fn record(&mut self, outcome: &RoundOutcome) {
        for (acc, c) in self.cum_cost.iter_mut().zip(&outcome.cost) {
            *acc += c;
        }
        let a = outcome.action_id;
        if self.spec.is_null(a) {
            self.logistic.update_design(None);
        } else {
            self.bonus_sum += 2.0 * self.pending_bonus;
            self.logistic
                .update_design(Some(self.spec.phi(a, outcome.context_id)));
            self.table.record(a, outcome.context_id, outcome.y);
        }
        self.pending_bonus = 0.0;
        self.round += 1;
    }

    fn diagnostics(&self) -> RoundDiagnostics {
        let max_eps = (0..self.spec.n_contexts())
            .flat_map(|x| self.spec.non_null_actions().map(move |a| (a, x)))
            .map(|(a, x)| self.epsilon(a, x))
            .fold(0.0, f64::max);
        RoundDiagnostics {
            gamma: self.logistic.gamma(),
            theta_err: self
                .truth
                .as_ref()
                .map(|th| (&self.logistic.theta_hat - th).norm()),
            max_eps,
        }
    }

    fn lock_round(&self) -> Option<usize> {
        self.lock_round
    }

    fn bonus_sum(&self) -> f64 {
        self.bonus_sum
    }

    fn bonus_sum_bound(&self) -> Option<f64> {
        let applies = match self.cfg.bonus {
            BonusKind::Theory => self.cfg.explore_scale <= 1.0,
            BonusKind::Practical => true,
        };
        applies.then(|| {
            let st = &self.logistic;
            bonus_sum_bound(
                self.spec.horizon,
                st.lambda,
                st.delta,
                st.m,
                st.theta_bound,
                st.kappa,
            )
        })
    }

    fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn kkt_failures(&self) -> usize {
        self.kkt_failures
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::tests::tiny_doc;
    use crate::problem::validate_spec;
    use crate::rng::stream;

    fn policy(cfg: PolicyConfig) -> ConversionPolicy {
        let spec = validate_spec(&tiny_doc()).unwrap();
        ConversionPolicy::new(spec, cfg, Some(&[0.5, 0.0])).unwrap()
    }

    fn outcome(t: usize, a: usize, y: u8, cost: f64) -> RoundOutcome {
        RoundOutcome {
            t,
            context_id: 0,
            action_id: a,
            y,
            reward: 0.0,
            cost: vec![cost],
        }
    }

    #[test]
    fn guard_locks_near_budget() {
        let mut p = policy(PolicyConfig {
            warm_start: 0,
            working_budget: WorkingBudget::Full,
            ..PolicyConfig::default()
        });
        // B = 3: cumulative cost 2.5 exceeds B − 1.
        p.record(&outcome(1, 1, 1, 2.5));
        let mut rng = stream(1, 3);
        assert_eq!(p.act(0, &mut rng).unwrap(), 0);
        assert!(p.locked);
        assert_eq!(p.lock_round(), Some(2));
        p.record(&outcome(2, 0, 0, 0.0));
        assert_eq!(p.act(0, &mut rng).unwrap(), 0);
        assert_eq!(p.lock_round(), Some(2));
    }

    #[test]
    fn nonpositive_working_budget_plays_null() {
        // Theoretical B_T is negative for B = 3.
        let mut p = policy(PolicyConfig {
            warm_start: 0,
            ..PolicyConfig::default()
        });
        assert!(p.working_budget <= 0.0);
        let mut rng = stream(1, 3);
        assert_eq!(p.act(0, &mut rng).unwrap(), 1);
        p.record(&outcome(1, 1, 0, 0.0));
        for t in 2..6 {
            assert_eq!(p.act(0, &mut rng).unwrap(), 0);
            p.record(&outcome(t, 0, 0, 0.0));
        }
    }

    #[test]
    fn record_updates_costs_and_design() {
        let mut p = policy(PolicyConfig::default());
        let v0 = p.logistic.design.clone();
        p.record(&outcome(1, 1, 0, 0.0));
        assert_eq!(p.cum_cost, vec![0.0]);
        assert_ne!(p.logistic.design, v0);
        let v1 = p.logistic.design.clone();
        p.record(&outcome(2, 0, 0, 0.0));
        assert_eq!(p.logistic.design, v1);
        p.record(&outcome(3, 1, 1, 0.4));
        assert_eq!(p.cum_cost, vec![0.4]);
    }

    #[test]
    fn oracle_lp_is_feasible_for_working_budget() {
        let mut p = policy(PolicyConfig {
            oracle: true,
            working_budget: WorkingBudget::Full,
            ..PolicyConfig::default()
        });
        p.round = 60;
        let lp = p.current_lp();
        let sol = solve_lp(&lp).unwrap();
        let used = lp.budget_usage(&sol.pi);
        assert!(used[0] <= p.working_budget + 1e-8);
        assert!(check_kkt(&lp, &sol, 1e-8).passed);
    }
}
