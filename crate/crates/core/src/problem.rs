//! Finite CBwK instance description and its validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the context distribution summing to one.
const NU_SUM_TOL: f64 = 1e-12;

/// A validated finite instance.
///
/// All tables are indexed `[context][action]`. The no-op action has an
/// all-zero feature vector, zero reward and zero cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub actions: Vec<String>,
    pub null_action: usize,
    pub contexts: Vec<Vec<f64>>,
    pub transfer: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub cost: Vec<Vec<Vec<f64>>>,
    pub horizon: usize,
    pub budget: f64,
    pub theta_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_weights: Option<Vec<f64>>,
}

/// The document form, with every field optional so that missing ones can be
/// reported by name.
#[derive(Debug, Default, Deserialize)]
struct RawProblem {
    actions: Option<Vec<String>>,
    null_action: Option<usize>,
    contexts: Option<Vec<Vec<f64>>>,
    transfer: Option<Vec<Vec<Vec<f64>>>>,
    reward: Option<Vec<Vec<f64>>>,
    cost: Option<Vec<Vec<Vec<f64>>>>,
    horizon: Option<usize>,
    budget: Option<f64>,
    theta_bound: Option<f64>,
    context_weights: Option<Vec<f64>>,
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingField(name.to_string()))
}

/// Parses and validates a problem document.
pub fn validate_spec(raw_config: &serde_json::Value) -> Result<ProblemSpec> {
    let raw: RawProblem = serde_json::from_value(raw_config.clone())?;
    let spec = ProblemSpec {
        actions: required(raw.actions, "actions")?,
        null_action: raw.null_action.unwrap_or(0),
        contexts: required(raw.contexts, "contexts")?,
        transfer: required(raw.transfer, "transfer")?,
        reward: required(raw.reward, "reward")?,
        cost: required(raw.cost, "cost")?,
        horizon: required(raw.horizon, "horizon")?,
        budget: required(raw.budget, "budget")?,
        theta_bound: required(raw.theta_bound, "theta_bound")?,
        context_weights: raw.context_weights,
    };
    spec.validated()
}

impl ProblemSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        validate_spec(&value)
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.transfer[0][usize::from(self.null_action == 0)].len()
    }

    /// Number of cost components `d`.
    pub fn n_costs(&self) -> usize {
        self.cost[0][0].len()
    }

    pub fn is_null(&self, action: usize) -> bool {
        action == self.null_action
    }

    pub fn non_null_actions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.actions.len()).filter(move |&a| a != self.null_action)
    }

    pub fn phi(&self, action: usize, context: usize) -> &[f64] {
        &self.transfer[context][action]
    }

    pub fn reward(&self, action: usize, context: usize) -> f64 {
        self.reward[context][action]
    }

    pub fn cost(&self, action: usize, context: usize) -> &[f64] {
        &self.cost[context][action]
    }

    /// Checks every invariant and normalises the no-op feature entries to
    /// zero vectors.
    pub fn validated(mut self) -> Result<Self> {
        let n_actions = self.actions.len();
        let n_contexts = self.contexts.len();
        if n_actions < 2 {
            return Err(Error::InvalidProblem(
                "need the no-op action and at least one other action".into(),
            ));
        }
        if self.null_action >= n_actions {
            return Err(Error::InvalidProblem(format!(
                "null_action {} out of range",
                self.null_action
            )));
        }
        if n_contexts == 0 {
            return Err(Error::InvalidProblem("empty context set".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidProblem("horizon must be positive".into()));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::InvalidProblem("budget must be positive".into()));
        }
        if !(self.theta_bound.is_finite() && self.theta_bound > 0.0) {
            return Err(Error::InvalidProblem("theta_bound must be positive".into()));
        }
        let shape_ok = self.transfer.len() == n_contexts
            && self.reward.len() == n_contexts
            && self.cost.len() == n_contexts
            && self.transfer.iter().all(|r| r.len() == n_actions)
            && self.reward.iter().all(|r| r.len() == n_actions)
            && self.cost.iter().all(|r| r.len() == n_actions);
        if !shape_ok {
            return Err(Error::InvalidProblem(
                "tables must be indexed [context][action] with matching sizes".into(),
            ));
        }

        let first_non_null = usize::from(self.null_action == 0);
        let m = self.transfer[0][first_non_null].len();
        let d = self.cost[0][0].len();
        if m == 0 || d == 0 {
            return Err(Error::InvalidProblem(
                "feature and cost dimensions must be positive".into(),
            ));
        }

        for x in 0..n_contexts {
            for a in 0..n_actions {
                let cost = &self.cost[x][a];
                if cost.len() != d {
                    return Err(Error::InvalidProblem(format!(
                        "cost vector at ({a}, {x}) has length {}, expected {d}",
                        cost.len()
                    )));
                }
                let r = self.reward[x][a];
                if a == self.null_action {
                    if r != 0.0 {
                        return Err(Error::NullActionNonzero {
                            what: "reward",
                            context: x,
                        });
                    }
                    if cost.iter().any(|&c| c != 0.0) {
                        return Err(Error::NullActionNonzero {
                            what: "cost",
                            context: x,
                        });
                    }
                    self.transfer[x][a] = vec![0.0; m];
                    continue;
                }
                let phi = &self.transfer[x][a];
                if phi.len() != m {
                    return Err(Error::InvalidProblem(format!(
                        "feature vector at ({a}, {x}) has length {}, expected {m}",
                        phi.len()
                    )));
                }
                if phi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem(format!(
                        "non-finite feature at ({a}, {x})"
                    )));
                }
                let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1.0 + 1e-12 {
                    return Err(Error::NormViolation {
                        action: a,
                        context: x,
                        norm,
                    });
                }
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RangeViolation {
                        what: "reward",
                        action: a,
                        context: x,
                        value: r,
                    });
                }
                if let Some(&c) = cost.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                    return Err(Error::RangeViolation {
                        what: "cost",
                        action: a,
                        context: x,
                        value: c,
                    });
                }
            }
        }

        if let Some(nu) = &self.context_weights {
            if nu.len() != n_contexts {
                return Err(Error::InvalidProblem(format!(
                    "context_weights has {} entries for {n_contexts} contexts",
                    nu.len()
                )));
            }
            if nu.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidProblem(
                    "context_weights must be nonnegative".into(),
                ));
            }
            let total: f64 = nu.iter().sum();
            if (total - 1.0).abs() > NU_SUM_TOL {
                return Err(Error::InvalidProblem(format!(
                    "context_weights sum to {total}, not 1"
                )));
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    /// One context, a no-op and one real action.
    pub(crate) fn tiny_doc() -> serde_json::Value {
        json!({
            "actions": ["null", "a1"],
            "null_action": 0,
            "contexts": [[1.0]],
            "transfer": [[[], [0.6, 0.0]]],
            "reward": [[0.0, 0.5]],
            "cost": [[[0.0], [0.4]]],
            "horizon": 10,
            "budget": 3.0,
            "theta_bound": 1.0,
            "context_weights": [1.0]
        })
    }

    #[test]
    fn accepts_identity_case() {
        let spec = validate_spec(&tiny_doc()).unwrap();
        assert_eq!(spec.n_actions(), 2);
        assert_eq!(spec.dim(), 2);
        assert_eq!(spec.n_costs(), 1);
        assert_eq!(spec.phi(0, 0), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_nonzero_null_reward() {
        let mut doc = tiny_doc();
        doc["reward"][0][0] = json!(0.3);
        assert!(matches!(
            validate_spec(&doc),
            Err(Error::NullActionNonzero { what: "reward", .. })
        ));
    }

    #[test]
    fn rejects_nonzero_null_cost() {
        let mut doc = tiny_doc();
        doc["cost"][0][0] = json!([0.1]);
        assert!(matches!(
            validate_spec(&doc),
            Err(Error::NullActionNonzero { what: "cost", .. })
        ));
    }

    #[test]
    fn rejects_long_feature() {
        let mut doc = tiny_doc();
        doc["transfer"][0][1] = json!([0.8, 0.8]);
        match validate_spec(&doc) {
            Err(Error::NormViolation { norm, .. }) => {
                assert!((norm - 1.131_370_849_898_476).abs() < 1e-9)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_tables() {
        let mut doc = tiny_doc();
        doc["reward"][0][1] = json!(1.5);
        assert!(matches!(
            validate_spec(&doc),
            Err(Error::RangeViolation { what: "reward", .. })
        ));
        let mut doc = tiny_doc();
        doc["cost"][0][1] = json!([-0.1]);
        assert!(matches!(
            validate_spec(&doc),
            Err(Error::RangeViolation { what: "cost", .. })
        ));
    }

    #[test]
    fn reports_missing_field_by_name() {
        let mut doc = tiny_doc();
        doc.as_object_mut().unwrap().remove("budget");
        match validate_spec(&doc) {
            Err(Error::MissingField(name)) => assert_eq!(name, "budget"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_distribution() {
        let mut doc = tiny_doc();
        doc["context_weights"] = json!([0.9]);
        assert!(matches!(validate_spec(&doc), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn json_round_trip() {
        let spec = validate_spec(&tiny_doc()).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ProblemSpec::from_json_str(&text).unwrap(), spec);
    }
}
