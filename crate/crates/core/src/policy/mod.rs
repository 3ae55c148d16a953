//! Adaptive policies and their shared configuration.

mod conversion;
mod linear;

pub use conversion::ConversionPolicy;
pub use linear::{
    conf_bounds_lin, lin_bt, lin_fit, lin_gamma, pgd_update, project_l1, BoxDPolicy, BoxDState,
    LinEstimator, LinUcbPolicy,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{History, RoundDiagnostics, RoundOutcome};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Logistic conversion model with direct LP solves.
    #[default]
    BoxB,
    /// LinUCB estimates with direct LP solves.
    BoxC,
    /// LinUCB with a dual-descent trade-off instead of an LP.
    BoxD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NuMode {
    #[default]
    Known,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WorkingBudget {
    /// The shrunken budget required by the regret guarantees.
    #[default]
    Theory,
    /// The nominal budget `B`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BonusKind {
    /// The bonus of the confidence bound, scaled by `explore_scale`.
    #[default]
    Theory,
    /// `explore_scale · (1 + ln t) · ‖φ‖_{V⁻¹}`.
    Practical,
}

/// Policy configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    pub nu_mode: NuMode,
    pub working_budget: WorkingBudget,
    pub delta: f64,
    /// Regularization; `m ln(1 + T/m)` when absent.
    pub lambda: Option<f64>,
    /// Rounds played uniformly over the non-null actions before the
    /// estimates are used.
    pub warm_start: usize,
    pub refit_every: usize,
    pub explore_scale: f64,
    pub bonus: BonusKind,
    /// Overrides κ; the practical bonus defaults to 1.
    pub kappa: Option<f64>,
    /// Zero bonuses and true parameters.
    pub oracle: bool,
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    pub eta: f64,
    /// Verify every LP solve through its KKT conditions.
    pub check_kkt: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::BoxB,
            nu_mode: NuMode::Known,
            working_budget: WorkingBudget::Theory,
            delta: 0.05,
            lambda: None,
            warm_start: 50,
            refit_every: 1,
            explore_scale: 1.0,
            bonus: BonusKind::Theory,
            kappa: None,
            oracle: false,
            z: None,
            eta: 0.01,
            check_kkt: false,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be positive, got {l}")));
            }
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidConfig("refit_every must be at least 1".into()));
        }
        if !(self.explore_scale >= 0.0) {
            return Err(Error::InvalidConfig("explore_scale must be nonnegative".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidConfig("eta must be positive".into()));
        }
        Ok(())
    }
}

/// A sequential decision rule.
pub trait Policy: Send {
    /// Chooses the action for context `x` at the next round.
    fn act(&mut self, context: usize, rng: &mut StreamRng) -> Result<usize>;

    /// Absorbs the outcome of the round just played.
    fn record(&mut self, outcome: &RoundOutcome);

    /// Estimator state after the last recorded round.
    fn diagnostics(&self) -> RoundDiagnostics;

    /// First round at which the budget guard fired.
    fn lock_round(&self) -> Option<usize>;

    /// `2 Σ ε_{t−1}(a_t, x_t)` over the non-null rounds played so far.
    fn bonus_sum(&self) -> f64;

    /// Deterministic bound on [`Policy::bonus_sum`], when one is known.
    fn bonus_sum_bound(&self) -> Option<f64>;

    /// Rounds where the LP solve failed and the no-op was played instead.
    fn fallbacks(&self) -> usize {
        0
    }

    /// Rounds whose LP solution failed the KKT check.
    fn kkt_failures(&self) -> usize {
        0
    }
}

/// `B_T = B − 2 − √(2T ln(4d/δ))`.
pub fn budget_bt(budget: f64, horizon: usize, d: usize, delta: f64) -> f64 {
    budget - 2.0 - (2.0 * horizon as f64 * (4.0 * d as f64 / delta).ln()).sqrt()
}

/// `B − b_T` with `b_T = 2 + √(2T ln(4d/δ)) + |X|√(2T ln(2T|X|/δ))`.
pub fn budget_bt_empirical(
    budget: f64,
    horizon: usize,
    d: usize,
    delta: f64,
    n_contexts: usize,
) -> f64 {
    let t = horizon as f64;
    let nx = n_contexts as f64;
    let context_term = if horizon == 0 {
        0.0
    } else {
        nx * (2.0 * t * (2.0 * t * nx / delta).ln()).sqrt()
    };
    budget_bt(budget, horizon, d, delta) - context_term
}

/// `R_T = OPT − Σ r(a_t, x_t) y_t`.
pub fn regret(history: &History, opt_value: f64) -> f64 {
    opt_value - history.cumulative_reward
}

/// Context counts behind the empirical distribution `ν̂_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuEstimate {
    counts: Vec<usize>,
    total: usize,
}

impl NuEstimate {
    pub fn new(n_contexts: usize) -> Self {
        Self {
            counts: vec![0; n_contexts],
            total: 0,
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn distribution(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Counts the context of the current round into `ν̂`.
pub fn update_nu_hat(nu: &mut NuEstimate, context: usize) {
    nu.counts[context] += 1;
    nu.total += 1;
}

/// Inverse-CDF draw from a probability vector in index order.
pub fn sample_action(probs: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// Uniform draw over the non-null actions.
pub(crate) fn uniform_non_null(spec: &ProblemSpec, rng: &mut StreamRng) -> usize {
    let n = spec.n_actions() - 1;
    let k = rng.random_range(0..n);
    spec.non_null_actions().nth(k).expect("k < number of non-null actions")
}

/// Budget guard: true once some cumulative cost exceeds `B − 1`.
pub(crate) fn budget_guard(cum_cost: &[f64], budget: f64) -> bool {
    cum_cost.iter().any(|&c| c > budget - 1.0)
}

/// Builds the policy selected by `cfg`.
///
/// `truth` is the true conversion parameter, used in oracle mode and for
/// diagnostics. `linear_features` replaces the instance features for the
/// LinUCB-based policies.
pub fn build_policy(
    spec: &ProblemSpec,
    cfg: &PolicyConfig,
    truth: Option<&[f64]>,
    linear_features: Option<&[Vec<Vec<f64>>]>,
) -> Result<Box<dyn Policy>> {
    cfg.validate()?;
    let features = linear_features.map_or_else(|| spec.transfer.clone(), <[_]>::to_vec);
    Ok(match cfg.policy {
        PolicyKind::BoxB => Box::new(ConversionPolicy::new(spec.clone(), cfg.clone(), truth)?),
        PolicyKind::BoxC => Box::new(LinUcbPolicy::new(spec.clone(), features, cfg.clone())?),
        PolicyKind::BoxD => Box::new(BoxDPolicy::new(spec.clone(), features, cfg.clone())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn budget_bt_examples() {
        let v = budget_bt(1000.0, 10_000, 2, 0.05);
        assert!((v - 679.403_897_850_780).abs() < 1e-9);
        assert_eq!(budget_bt(50.0, 0, 2, 0.05), 48.0);
        assert!(budget_bt(1000.0, 100, 2, 0.2) > budget_bt(1000.0, 100, 2, 0.05));
    }

    #[test]
    fn budget_bt_empirical_examples() {
        let v = budget_bt_empirical(500.0, 100, 1, 0.5, 1);
        assert!((v - 442.990_292_544_578).abs() < 1e-9);
        let one = budget_bt_empirical(500.0, 100, 1, 0.5, 1);
        let two = budget_bt_empirical(500.0, 100, 1, 0.5, 2);
        assert!(two < one);
        assert!(budget_bt(500.0, 100, 1, 0.5) >= one);
    }

    #[test]
    fn nu_hat_examples() {
        let mut nu = NuEstimate::new(2);
        update_nu_hat(&mut nu, 0);
        assert_eq!(nu.distribution(), vec![1.0, 0.0]);
        update_nu_hat(&mut nu, 0);
        update_nu_hat(&mut nu, 1);
        let p = nu.distribution();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(nu.counts().iter().sum::<usize>(), nu.total());
    }

    #[test]
    fn regret_examples() {
        let h = History::new(1);
        assert_eq!(regret(&h, 12.5), 12.5);
        let mut h = History::new(1);
        h.push(RoundOutcome {
            t: 1,
            context_id: 0,
            action_id: 1,
            y: 1,
            reward: 0.3,
            cost: vec![0.1],
        });
        assert_eq!(regret(&h, 0.0), -0.3);
    }

    #[test]
    fn dirac_policy_is_deterministic() {
        let mut rng = stream(3, 9);
        for _ in 0..1000 {
            assert_eq!(sample_action(&[0.0, 0.0, 1.0], &mut rng), 2);
        }
    }

    #[test]
    fn config_defaults_and_keys() {
        let cfg: PolicyConfig = serde_json::from_str(
            r#"{"policy":"box-d","Z":0.4,"working_budget":"full","nu_mode":"empirical"}"#,
        )
        .unwrap();
        assert_eq!(cfg.policy, PolicyKind::BoxD);
        assert_eq!(cfg.z, Some(0.4));
        assert_eq!(cfg.warm_start, 50);
        assert_eq!(cfg.delta, 0.05);
        assert!(serde_json::from_str::<PolicyConfig>(r#"{"bogus":1}"#).is_err());
        let bad = PolicyConfig {
            delta: 1.5,
            ..PolicyConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
