//! Simulated environment, per-round outcomes and the run history.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::rng::StreamRng;

/// Logistic link `1 / (1 + e^{-z})`, evaluated without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`], `η(z)(1 − η(z))`.
pub fn sigmoid_deriv(z: f64) -> f64 {
    let p = sigmoid(z);
    p * (1.0 - p)
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ground truth of the conversion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub true_theta: Vec<f64>,
    pub rng_seed: u64,
    #[serde(default)]
    pub round: usize,
}

/// What the learner observes after playing a non-null action.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub y: u8,
    pub reward: f64,
    pub cost: Vec<f64>,
}

/// A stochastic environment over a finite instance.
pub trait Environment {
    fn spec(&self) -> &ProblemSpec;

    /// Draws the feedback for a non-null action.
    fn respond(&self, action: usize, context: usize, rng: &mut StreamRng) -> Result<Feedback>;

    /// Expected reward `r̄(a, x)`; zero for the no-op.
    fn expected_reward(&self, action: usize, context: usize) -> f64;

    /// Expected cost vector `c̄(a, x)`; zero for the no-op.
    fn expected_cost(&self, action: usize, context: usize) -> Vec<f64>;
}

/// Draws a context index from the true distribution.
pub fn sample_context(spec: &ProblemSpec, rng: &mut StreamRng) -> Result<usize> {
    let nu = spec
        .context_weights
        .as_ref()
        .ok_or(Error::MissingDistribution)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (x, &p) in nu.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = x;
            if u < acc {
                return Ok(x);
            }
        }
    }
    Ok(last_positive)
}

/// Logistic conversion environment: `y ~ Ber(η(φ(a,x)ᵀθ*))`, reward
/// `r(a,x)·y`, cost `c(a,x)·y`.
#[derive(Debug, Clone)]
pub struct ConversionEnv {
    pub spec: ProblemSpec,
    pub state: EnvState,
}

impl ConversionEnv {
    pub fn new(spec: ProblemSpec, state: EnvState) -> Result<Self> {
        if state.true_theta.len() != spec.dim() {
            return Err(Error::InvalidProblem(format!(
                "true_theta has dimension {}, features have {}",
                state.true_theta.len(),
                spec.dim()
            )));
        }
        let norm = dot(&state.true_theta, &state.true_theta).sqrt();
        if norm > spec.theta_bound * (1.0 + 1e-12) {
            return Err(Error::InvalidProblem(format!(
                "‖θ*‖ = {norm} exceeds theta_bound {}",
                spec.theta_bound
            )));
        }
        Ok(Self { spec, state })
    }

    pub fn conversion_probability(&self, action: usize, context: usize) -> Result<f64> {
        if self.spec.is_null(action) {
            return Err(Error::NullActionConversion);
        }
        Ok(sigmoid(dot(
            self.spec.phi(action, context),
            &self.state.true_theta,
        )))
    }

    pub fn draw_conversion(
        &self,
        action: usize,
        context: usize,
        rng: &mut StreamRng,
    ) -> Result<u8> {
        let p = self.conversion_probability(action, context)?;
        Ok(u8::from(rng.random::<f64>() < p))
    }

    /// Conversion probabilities for every (context, action); zero at the no-op.
    pub fn probability_table(&self) -> Vec<Vec<f64>> {
        (0..self.spec.n_contexts())
            .map(|x| {
                (0..self.spec.n_actions())
                    .map(|a| self.conversion_probability(a, x).unwrap_or(0.0))
                    .collect()
            })
            .collect()
    }
}

impl Environment for ConversionEnv {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn respond(&self, action: usize, context: usize, rng: &mut StreamRng) -> Result<Feedback> {
        let y = self.draw_conversion(action, context, rng)?;
        let yf = f64::from(y);
        Ok(Feedback {
            y,
            reward: self.spec.reward(action, context) * yf,
            cost: self.spec.cost(action, context).iter().map(|c| c * yf).collect(),
        })
    }

    fn expected_reward(&self, action: usize, context: usize) -> f64 {
        self.conversion_probability(action, context)
            .map_or(0.0, |p| p * self.spec.reward(action, context))
    }

    fn expected_cost(&self, action: usize, context: usize) -> Vec<f64> {
        let p = self.conversion_probability(action, context).unwrap_or(0.0);
        self.spec.cost(action, context).iter().map(|c| c * p).collect()
    }
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub t: usize,
    pub context_id: usize,
    pub action_id: usize,
    pub y: u8,
    pub reward: f64,
    pub cost: Vec<f64>,
}

/// Ordered record of a run with running totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub outcomes: Vec<RoundOutcome>,
    pub cumulative_reward: f64,
    pub cumulative_cost: Vec<f64>,
}

impl History {
    pub fn new(n_costs: usize) -> Self {
        Self {
            outcomes: Vec::new(),
            cumulative_reward: 0.0,
            cumulative_cost: vec![0.0; n_costs],
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn push(&mut self, outcome: RoundOutcome) {
        self.cumulative_reward += outcome.reward;
        for (acc, c) in self.cumulative_cost.iter_mut().zip(&outcome.cost) {
            *acc += c;
        }
        self.outcomes.push(outcome);
    }

    /// Cumulative reward after each round (index `t-1`).
    pub fn reward_path(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.outcomes
            .iter()
            .map(|o| {
                acc += o.reward;
                acc
            })
            .collect()
    }

    /// Cumulative cost of component `i` after each round.
    pub fn cost_path(&self, i: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.outcomes
            .iter()
            .map(|o| {
                acc += o.cost[i];
                acc
            })
            .collect()
    }

    /// True when every cumulative cost component stays within `budget`.
    pub fn within_budget(&self, budget: f64) -> bool {
        self.cumulative_cost.iter().all(|&c| c <= budget)
    }
}

/// Plays one round and appends it to `history`.
pub fn play_round<E: Environment + ?Sized>(
    env: &E,
    history: &mut History,
    context: usize,
    action: usize,
    rng: &mut StreamRng,
) -> Result<RoundOutcome> {
    let spec = env.spec();
    if history.len() >= spec.horizon {
        return Err(Error::HorizonExceeded(spec.horizon));
    }
    let outcome = if spec.is_null(action) {
        RoundOutcome {
            t: history.len() + 1,
            context_id: context,
            action_id: action,
            y: 0,
            reward: 0.0,
            cost: vec![0.0; spec.n_costs()],
        }
    } else {
        let fb = env.respond(action, context, rng)?;
        RoundOutcome {
            t: history.len() + 1,
            context_id: context,
            action_id: action,
            y: fb.y,
            reward: fb.reward,
            cost: fb.cost,
        }
    };
    history.push(outcome.clone());
    Ok(outcome)
}

/// Per-round estimator diagnostics appended to the run CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub gamma: f64,
    pub theta_err: Option<f64>,
    pub max_eps: f64,
}

/// Writes the run as CSV:
/// `t,context_id,action_id,y,reward,cost_1..cost_d,cum_reward,cum_cost_1..cum_cost_d`
/// followed by `gamma,theta_err,max_eps` when diagnostics are given.
pub fn write_history_csv<W: Write>(
    history: &History,
    diagnostics: Option<&[RoundDiagnostics]>,
    out: W,
) -> Result<()> {
    let d = history.cumulative_cost.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "context_id", "action_id", "y", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=d).map(|i| format!("cost_{i}")));
    header.push("cum_reward".into());
    header.extend((1..=d).map(|i| format!("cum_cost_{i}")));
    if diagnostics.is_some() {
        header.extend(["gamma", "theta_err", "max_eps"].map(String::from));
    }
    w.write_record(&header)?;

    let mut cum_reward = 0.0;
    let mut cum_cost = vec![0.0; d];
    for (idx, o) in history.outcomes.iter().enumerate() {
        cum_reward += o.reward;
        for (acc, c) in cum_cost.iter_mut().zip(&o.cost) {
            *acc += c;
        }
        let mut row = vec![
            o.t.to_string(),
            o.context_id.to_string(),
            o.action_id.to_string(),
            o.y.to_string(),
            o.reward.to_string(),
        ];
        row.extend(o.cost.iter().map(f64::to_string));
        row.push(cum_reward.to_string());
        row.extend(cum_cost.iter().map(f64::to_string));
        if let Some(diag) = diagnostics {
            let dg = diag.get(idx).cloned().unwrap_or_default();
            row.push(dg.gamma.to_string());
            row.push(dg.theta_err.map_or_else(String::new, |e| e.to_string()));
            row.push(dg.max_eps.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Linear environment: every non-null round converts, the reward is
/// `Ber(φᵀμ*)` and cost component `i` is an independent `Ber(φᵀθ*_i)`.
#[derive(Debug, Clone)]
pub struct LinearEnv {
    pub spec: ProblemSpec,
    pub mu_star: Vec<f64>,
    pub theta_star: Vec<Vec<f64>>,
}

impl LinearEnv {
    pub fn new(spec: ProblemSpec, mu_star: Vec<f64>, theta_star: Vec<Vec<f64>>) -> Result<Self> {
        if theta_star.len() != spec.n_costs() {
            return Err(Error::InvalidProblem(format!(
                "{} cost parameters for {} cost components",
                theta_star.len(),
                spec.n_costs()
            )));
        }
        let env = Self {
            spec,
            mu_star,
            theta_star,
        };
        for x in 0..env.spec.n_contexts() {
            for a in env.spec.non_null_actions() {
                let r = env.expected_reward(a, x);
                let c = env.expected_cost(a, x);
                if !(0.0..=1.0).contains(&r) || c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidProblem(format!(
                        "linear means leave [0, 1] at action {a}, context {x}"
                    )));
                }
            }
        }
        Ok(env)
    }
}

impl Environment for LinearEnv {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn respond(&self, action: usize, context: usize, rng: &mut StreamRng) -> Result<Feedback> {
        let mut bern = |p: f64| f64::from(u8::from(rng.random::<f64>() < p));
        let reward = bern(self.expected_reward(action, context));
        let cost = self
            .expected_cost(action, context)
            .into_iter()
            .map(&mut bern)
            .collect();
        Ok(Feedback { y: 1, reward, cost })
    }

    fn expected_reward(&self, action: usize, context: usize) -> f64 {
        if self.spec.is_null(action) {
            return 0.0;
        }
        dot(self.spec.phi(action, context), &self.mu_star)
    }

    fn expected_cost(&self, action: usize, context: usize) -> Vec<f64> {
        if self.spec.is_null(action) {
            return vec![0.0; self.spec.n_costs()];
        }
        let phi = self.spec.phi(action, context);
        self.theta_star.iter().map(|th| dot(phi, th)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{tests::tiny_doc, validate_spec};
    use crate::rng::stream;

    fn env_with_theta(theta: Vec<f64>) -> ConversionEnv {
        let mut spec = validate_spec(&tiny_doc()).unwrap();
        spec.theta_bound = 2.0;
        ConversionEnv::new(
            spec,
            EnvState {
                true_theta: theta,
                rng_seed: 1,
                round: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-2.5) - (1.0 - sigmoid(2.5))).abs() < 1e-15);
        for z in [-700.0, -50.0, 50.0, 700.0, 1e6, -1e6] {
            let p = sigmoid(z);
            assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn softplus_matches_naive_form() {
        for z in [-30.0, -1.0, 0.0, 0.5, 20.0] {
            assert!((softplus(z) - (1.0 + f64::exp(z)).ln()).abs() < 1e-12);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn sample_context_cases() {
        let mut spec = validate_spec(&tiny_doc()).unwrap();
        let mut rng = stream(3, 0);
        assert_eq!(sample_context(&spec, &mut rng).unwrap(), 0);

        spec.contexts = vec![vec![0.0]; 3];
        spec.context_weights = Some(vec![1.0, 0.0, 0.0]);
        for _ in 0..1000 {
            assert_eq!(sample_context(&spec, &mut rng).unwrap(), 0);
        }

        spec.contexts = vec![vec![0.0]; 2];
        spec.context_weights = Some(vec![0.5, 0.5]);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_context(&spec, &mut rng).unwrap() == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");

        spec.context_weights = None;
        assert!(matches!(
            sample_context(&spec, &mut rng),
            Err(Error::MissingDistribution)
        ));
    }

    #[test]
    fn conversion_zero_theta_is_fair_coin() {
        let env = env_with_theta(vec![0.0, 0.0]);
        assert_eq!(env.conversion_probability(1, 0).unwrap(), 0.5);
    }

    #[test]
    fn conversion_frequency_matches_probability() {
        // φ = (0.6, 0), θ*₁ = ln 3 / 0.6 gives φᵀθ* = ln 3.
        let env = env_with_theta(vec![3f64.ln() / 0.6, 0.0]);
        let p = env.conversion_probability(1, 0).unwrap();
        assert!((p - 0.75).abs() < 1e-12);
        let mut rng = stream(11, 2);
        let n = 100_000;
        let hits: u32 = (0..n)
            .map(|_| u32::from(env.draw_conversion(1, 0, &mut rng).unwrap()))
            .sum();
        let freq = f64::from(hits) / n as f64;
        assert!((0.74..=0.76).contains(&freq));
        assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn null_conversion_is_an_error() {
        let env = env_with_theta(vec![0.0, 0.0]);
        let mut rng = stream(1, 2);
        assert!(matches!(
            env.draw_conversion(0, 0, &mut rng),
            Err(Error::NullActionConversion)
        ));
    }

    #[test]
    fn play_round_semantics() {
        // A huge θ* makes conversion certain.
        let mut spec = validate_spec(&tiny_doc()).unwrap();
        spec.theta_bound = 1e3;
        let env = ConversionEnv::new(
            spec,
            EnvState {
                true_theta: vec![500.0, 0.0],
                rng_seed: 0,
                round: 0,
            },
        )
        .unwrap();
        let mut rng = stream(5, 2);
        let mut h = History::new(1);
        let o = play_round(&env, &mut h, 0, 0, &mut rng).unwrap();
        assert_eq!((o.y, o.reward, o.cost.clone()), (0, 0.0, vec![0.0]));
        let o = play_round(&env, &mut h, 0, 1, &mut rng).unwrap();
        assert_eq!(o.y, 1);
        assert_eq!(o.reward, 0.5);
        assert_eq!(o.cost, vec![0.4]);
        for _ in 2..10 {
            play_round(&env, &mut h, 0, 0, &mut rng).unwrap();
        }
        assert!(matches!(
            play_round(&env, &mut h, 0, 1, &mut rng),
            Err(Error::HorizonExceeded(10))
        ));
        assert_eq!(h.cumulative_reward, 0.5);
    }

    #[test]
    fn csv_header_layout() {
        let mut h = History::new(2);
        h.push(RoundOutcome {
            t: 1,
            context_id: 0,
            action_id: 1,
            y: 1,
            reward: 0.25,
            cost: vec![0.5, 0.125],
        });
        let mut buf = Vec::new();
        write_history_csv(&h, None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,context_id,action_id,y,reward,cost_1,cost_2,cum_reward,cum_cost_1,cum_cost_2"
        );
        assert_eq!(lines.next().unwrap(), "1,0,1,1,0.25,0.5,0.125,0.25,0.5,0.125");

        let mut buf = Vec::new();
        let diag = [RoundDiagnostics {
            gamma: 2.0,
            theta_err: None,
            max_eps: 0.5,
        }];
        write_history_csv(&h, Some(&diag), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with("gamma,theta_err,max_eps"));
        assert!(text.lines().nth(1).unwrap().ends_with(",2,,0.5"));
    }
}
