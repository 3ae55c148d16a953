//! The round-by-round interaction loop.

use serde::{Deserialize, Serialize};

use crate::env::{play_round, sample_context, Environment, History, RoundDiagnostics};
use crate::error::Result;
use crate::policy::Policy;
use crate::rng::RunRng;

/// Everything recorded about one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub history: History,
    pub diagnostics: Option<Vec<RoundDiagnostics>>,
    pub lock_round: Option<usize>,
    /// `2 Σ ε_{t−1}(a_t, x_t)` over non-null rounds.
    pub bonus_sum: f64,
    pub bonus_bound: Option<f64>,
    pub fallbacks: usize,
    pub kkt_failures: usize,
    /// `Σ_t r̄(a_t, x_t)`, the expected reward of the actions played.
    pub expected_reward: f64,
}

impl RunRecord {
    /// True when the bonus sum respects its bound, or no bound applies.
    pub fn bonus_bound_ok(&self) -> bool {
        self.bonus_bound.is_none_or(|b| self.bonus_sum <= b)
    }
}

/// Plays a full horizon of `policy` against `env`.
pub fn run_policy<E: Environment + ?Sized>(
    env: &E,
    policy: &mut dyn Policy,
    seed: u64,
    collect_diagnostics: bool,
) -> Result<RunRecord> {
    let spec = env.spec();
    let mut rng = RunRng::new(seed);
    let mut history = History::new(spec.n_costs());
    let mut diagnostics = collect_diagnostics.then(|| Vec::with_capacity(spec.horizon));
    let mut expected_reward = 0.0;
    for _ in 0..spec.horizon {
        let x = sample_context(spec, &mut rng.contexts)?;
        let a = policy.act(x, &mut rng.policy)?;
        expected_reward += env.expected_reward(a, x);
        let outcome = play_round(env, &mut history, x, a, &mut rng.outcomes)?;
        policy.record(&outcome);
        if let Some(diag) = diagnostics.as_mut() {
            diag.push(policy.diagnostics());
        }
    }
    Ok(RunRecord {
        seed,
        history,
        diagnostics,
        lock_round: policy.lock_round(),
        bonus_sum: policy.bonus_sum(),
        bonus_bound: policy.bonus_sum_bound(),
        fallbacks: policy.fallbacks(),
        kkt_failures: policy.kkt_failures(),
        expected_reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConversionEnv, EnvState};
    use crate::policy::{build_policy, PolicyConfig, WorkingBudget};
    use crate::problem::tests::tiny_doc;
    use crate::problem::validate_spec;

    #[test]
    fn run_is_deterministic_and_within_budget() {
        let spec = validate_spec(&tiny_doc()).unwrap();
        let state = EnvState {
            true_theta: vec![0.5, 0.0],
            rng_seed: 0,
            round: 0,
        };
        let env = ConversionEnv::new(spec.clone(), state).unwrap();
        let cfg = PolicyConfig {
            warm_start: 2,
            working_budget: WorkingBudget::Full,
            ..PolicyConfig::default()
        };
        let run = |seed| {
            let mut p = build_policy(&spec, &cfg, Some(&[0.5, 0.0]), None).unwrap();
            run_policy(&env, p.as_mut(), seed, true).unwrap()
        };
        let a = run(7);
        assert_eq!(a.history.len(), spec.horizon);
        assert_eq!(a, run(7));
        assert!(a.history.within_budget(spec.budget));
        assert!(a.bonus_bound_ok());
    }
}
