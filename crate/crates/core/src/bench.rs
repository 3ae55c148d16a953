//! Loan-discount benchmark: instance generation, CSV ingestion, seeded
//! experiments, metric aggregation and plot-data emission.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{dot, sigmoid, write_history_csv, ConversionEnv, EnvState, Environment};
use crate::error::{Error, Result};
use crate::lp::{build_lp, solve_lp, LpSolution};
use crate::policy::{build_policy, BonusKind, NuMode, PolicyConfig, PolicyKind, WorkingBudget};
use crate::problem::ProblemSpec;
use crate::runner::{run_policy, RunRecord};

/// Logistic coefficients of the conversion model, one entry per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanCoefficients {
    pub intercept: f64,
    pub final_interest_rate: f64,
    pub risk: Vec<f64>,
    pub amount: Vec<f64>,
    pub age: Vec<f64>,
    pub education: Vec<f64>,
    pub marital: Vec<f64>,
}

impl Default for LoanCoefficients {
    fn default() -> Self {
        Self {
            intercept: 0.8177,
            final_interest_rate: -13.1101,
            risk: vec![-0.3045, -0.0383, 0.0515, 0.1261, 0.1636],
            amount: vec![0.7093, 0.4703, 0.1113, -0.2748, -1.0179],
            age: vec![-0.1837, -0.1392, -0.0476, 0.1096, 0.2592],
            education: vec![0.1836, 0.0126, -0.0896, -0.1084],
            marital: vec![0.0799, 0.0102, -0.0918],
        }
    }
}

/// Client-feature marginals; features are drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanMarginals {
    pub risk: Vec<f64>,
    pub amount: Vec<f64>,
    pub age: Vec<f64>,
    pub education: Vec<f64>,
    pub marital: Vec<f64>,
}

impl Default for LoanMarginals {
    fn default() -> Self {
        let uniform = |n: usize| vec![1.0 / n as f64; n];
        Self {
            risk: uniform(5),
            amount: uniform(5),
            age: uniform(5),
            education: uniform(4),
            marital: uniform(3),
        }
    }
}

/// Levels (zero-based) of the features held fixed outside full-grid mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedLevels {
    pub age: usize,
    pub education: usize,
    pub marital: usize,
}

impl Default for FixedLevels {
    fn default() -> Self {
        Self {
            age: 2,
            education: 2,
            marital: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoanInstanceConfig {
    /// Discount levels of the non-null actions.
    pub discounts: Vec<f64>,
    /// Representative requested amount per amount level.
    pub amounts: Vec<f64>,
    /// Representative standard interest rate per risk level.
    pub std_ir: Vec<f64>,
    pub coefficients: LoanCoefficients,
    pub marginals: LoanMarginals,
    pub fixed_levels: FixedLevels,
    /// Use every (risk, amount, age, education, marital) combination as a
    /// context instead of risk × amount only.
    pub full_grid: bool,
    pub m_am: f64,
    pub m_disc: f64,
    pub m_ir_am: f64,
    pub horizon: usize,
    pub budget: f64,
    /// Radius of the parameter ball; `1.1·‖θ*‖` when absent.
    pub theta_bound: Option<f64>,
}

impl Default for LoanInstanceConfig {
    fn default() -> Self {
        Self {
            discounts: vec![0.1, 0.2, 0.35, 0.55, 0.8],
            amounts: vec![5_000.0, 15_000.0, 28_000.0, 45_000.0, 77_000.0],
            std_ir: vec![0.01, 0.02, 0.035, 0.06, 0.12],
            coefficients: LoanCoefficients::default(),
            marginals: LoanMarginals::default(),
            fixed_levels: FixedLevels::default(),
            full_grid: false,
            m_am: 1e5,
            m_disc: 7.0,
            m_ir_am: 9_996.0,
            horizon: 5_000,
            budget: scaled_budget(1_600.0, 5_000),
            theta_bound: None,
        }
    }
}

/// Budget scaled from the reference horizon of 50 000 rounds.
pub fn scaled_budget(reference_budget: f64, horizon: usize) -> f64 {
    reference_budget * horizon as f64 / 50_000.0
}

/// Levels of one client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientLevels {
    pub risk: usize,
    pub amount: usize,
    pub age: usize,
    pub education: usize,
    pub marital: usize,
}

/// `η(intercept + β_FIR·ir(1−a) + level coefficients)`.
pub fn loan_conversion_probability(
    coef: &LoanCoefficients,
    levels: ClientLevels,
    std_ir: f64,
    discount: f64,
) -> f64 {
    sigmoid(
        coef.intercept
            + coef.final_interest_rate * std_ir * (1.0 - discount)
            + coef.risk[levels.risk]
            + coef.amount[levels.amount]
            + coef.age[levels.age]
            + coef.education[levels.education]
            + coef.marital[levels.marital],
    )
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub spec: ProblemSpec,
    pub true_theta: Vec<f64>,
    /// Features of the LinUCB-based policies, when they differ from the
    /// conversion features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_features: Option<Vec<Vec<Vec<f64>>>>,
}

impl Instance {
    pub fn env(&self, seed: u64) -> Result<ConversionEnv> {
        ConversionEnv::new(
            self.spec.clone(),
            EnvState {
                true_theta: self.true_theta.clone(),
                rng_seed: seed,
                round: 0,
            },
        )
    }

    /// `OPT(ν, P, B)` with its solution.
    pub fn opt(&self) -> Result<LpSolution> {
        let env = self.env(0)?;
        let spec = &self.spec;
        let nu = spec
            .context_weights
            .clone()
            .ok_or(Error::MissingDistribution)?;
        let gain = (0..spec.n_contexts())
            .map(|x| (0..spec.n_actions()).map(|a| env.expected_reward(a, x)).collect())
            .collect();
        let cost = (0..spec.n_contexts())
            .map(|x| (0..spec.n_actions()).map(|a| env.expected_cost(a, x)).collect())
            .collect();
        solve_lp(&build_lp(
            nu,
            gain,
            cost,
            spec.budget,
            spec.horizon as f64,
            spec.null_action,
        ))
    }
}

fn check_levels(name: &str, coef: &[f64], marginal: &[f64], expected: usize) -> Result<()> {
    if coef.len() != expected || marginal.len() != expected {
        return Err(Error::CoefficientMismatch(format!(
            "{name}: {} coefficients and {} marginal weights for {expected} levels",
            coef.len(),
            marginal.len()
        )));
    }
    let total: f64 = marginal.iter().sum();
    if marginal.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("{name} marginal is not a distribution")));
    }
    Ok(())
}

fn one_hot(level: usize, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k == level { 1.0 } else { 0.0 })
}

fn max_norm(table: &[Vec<Vec<f64>>], null_action: usize) -> f64 {
    table
        .iter()
        .flat_map(|row| row.iter().enumerate().filter(|(a, _)| *a != null_action))
        .map(|(_, phi)| dot(phi, phi).sqrt())
        .fold(0.0, f64::max)
}

fn scale_table(table: &mut [Vec<Vec<f64>>], factor: f64) {
    for v in table.iter_mut().flatten().flatten() {
        *v *= factor;
    }
}

/// Builds the loan-discount instance.
///
/// Features are `[1, final interest rate, one-hot levels…]`, divided by
/// their largest norm `ρ` so that `‖φ‖ ≤ 1`; the true parameter is
/// multiplied by `ρ` so that scores are unchanged. Outside full-grid mode
/// the fixed levels are folded into the intercept.
pub fn gen_loan_instance(cfg: &LoanInstanceConfig) -> Result<Instance> {
    let coef = &cfg.coefficients;
    let n_risk = cfg.std_ir.len();
    let n_amount = cfg.amounts.len();
    check_levels("risk", &coef.risk, &cfg.marginals.risk, n_risk)?;
    check_levels("amount", &coef.amount, &cfg.marginals.amount, n_amount)?;
    let (n_age, n_edu, n_mar) = (coef.age.len(), coef.education.len(), coef.marital.len());
    check_levels("age", &coef.age, &cfg.marginals.age, n_age)?;
    check_levels("education", &coef.education, &cfg.marginals.education, n_edu)?;
    check_levels("marital", &coef.marital, &cfg.marginals.marital, n_mar)?;
    let fixed = cfg.fixed_levels;
    if fixed.age >= n_age || fixed.education >= n_edu || fixed.marital >= n_mar {
        return Err(Error::CoefficientMismatch("fixed level out of range".into()));
    }
    if cfg.discounts.is_empty() || cfg.discounts.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidConfig("discounts must lie in [0, 1]".into()));
    }

    let mut clients = Vec::new();
    for risk in 0..n_risk {
        for amount in 0..n_amount {
            if cfg.full_grid {
                for age in 0..n_age {
                    for education in 0..n_edu {
                        for marital in 0..n_mar {
                            clients.push(ClientLevels {
                                risk,
                                amount,
                                age,
                                education,
                                marital,
                            });
                        }
                    }
                }
            } else {
                clients.push(ClientLevels {
                    risk,
                    amount,
                    age: fixed.age,
                    education: fixed.education,
                    marital: fixed.marital,
                });
            }
        }
    }

    let raw_features = |c: &ClientLevels, discount: f64| -> Vec<f64> {
        let mut phi = vec![1.0, cfg.std_ir[c.risk] * (1.0 - discount)];
        phi.extend(one_hot(c.risk, n_risk));
        phi.extend(one_hot(c.amount, n_amount));
        if cfg.full_grid {
            phi.extend(one_hot(c.age, n_age));
            phi.extend(one_hot(c.education, n_edu));
            phi.extend(one_hot(c.marital, n_mar));
        }
        phi
    };
    let mut theta = vec![coef.intercept, coef.final_interest_rate];
    theta.extend(&coef.risk);
    theta.extend(&coef.amount);
    if cfg.full_grid {
        theta.extend(&coef.age);
        theta.extend(&coef.education);
        theta.extend(&coef.marital);
    } else {
        theta[0] += coef.age[fixed.age] + coef.education[fixed.education] + coef.marital[fixed.marital];
    }
    let m = theta.len();

    let n_actions = cfg.discounts.len() + 1;
    let mut actions = vec!["null".to_string()];
    actions.extend(cfg.discounts.iter().map(|a| format!("{a}")));

    let mut transfer = Vec::with_capacity(clients.len());
    let mut linear = Vec::with_capacity(clients.len());
    let mut reward = Vec::with_capacity(clients.len());
    let mut cost = Vec::with_capacity(clients.len());
    let mut contexts = Vec::with_capacity(clients.len());
    let mut weights = Vec::with_capacity(clients.len());
    for c in &clients {
        let am = cfg.amounts[c.amount];
        let ir = cfg.std_ir[c.risk];
        let mut t_row = vec![vec![0.0; m]];
        let mut l_row = vec![vec![0.0; m + 3]];
        let mut r_row = vec![0.0];
        let mut c_row = vec![vec![0.0, 0.0]];
        for &a in &cfg.discounts {
            let phi = raw_features(c, a);
            let mut lin = phi.clone();
            lin.extend([a, am / cfg.m_am, ir * am / cfg.m_ir_am]);
            t_row.push(phi);
            l_row.push(lin);
            r_row.push(am / cfg.m_am);
            c_row.push(vec![a / cfg.m_disc, ir * am / cfg.m_ir_am]);
        }
        transfer.push(t_row);
        linear.push(l_row);
        reward.push(r_row);
        cost.push(c_row);
        contexts.push(vec![
            c.risk as f64,
            c.amount as f64,
            c.age as f64,
            c.education as f64,
            c.marital as f64,
            ir,
            am,
        ]);
        let mg = &cfg.marginals;
        let mut w = mg.risk[c.risk] * mg.amount[c.amount];
        if cfg.full_grid {
            w *= mg.age[c.age] * mg.education[c.education] * mg.marital[c.marital];
        }
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let rho = max_norm(&transfer, 0);
    scale_table(&mut transfer, 1.0 / rho);
    for v in &mut theta {
        *v *= rho;
    }
    let rho_lin = max_norm(&linear, 0);
    scale_table(&mut linear, 1.0 / rho_lin);

    let theta_norm = dot(&theta, &theta).sqrt();
    let theta_bound = cfg.theta_bound.unwrap_or(1.1 * theta_norm);
    debug_assert_eq!(n_actions, actions.len());
    let spec = ProblemSpec {
        actions,
        null_action: 0,
        contexts,
        transfer,
        reward,
        cost,
        horizon: cfg.horizon,
        budget: cfg.budget,
        theta_bound,
        context_weights: Some(weights),
    }
    .validated()?;
    let instance = Instance {
        spec,
        true_theta: theta,
        linear_features: Some(linear),
    };
    instance.env(0)?;
    Ok(instance)
}

/// Column mapping for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaMap {
    /// Columns whose values jointly identify a context.
    pub context_columns: Vec<String>,
    #[serde(default)]
    pub filters: Vec<RangeFilter>,
}

/// Rows with `column` outside `[min, max]` are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeFilter {
    pub column: String,
    #[serde(default = "neg_inf")]
    pub min: f64,
    #[serde(default = "pos_inf")]
    pub max: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// Distinct contexts of a dataset with their empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    /// Context values in order of first appearance.
    pub contexts: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub context_weights: Vec<f64>,
    /// Context id of every accepted row.
    pub row_contexts: Vec<usize>,
    pub rejected: usize,
}

/// Reads a CSV file and maps its rows to discrete contexts.
pub fn ingest_csv(path: &Path, schema: &SchemaMap) -> Result<Ingested> {
    ingest_reader(File::open(path)?, schema)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &SchemaMap) -> Result<Ingested> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::SchemaError(format!("missing column `{name}`")))
    };
    let ctx_idx = schema
        .context_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let filters = schema
        .filters
        .iter()
        .map(|f| Ok((find(&f.column)?, f.min, f.max)))
        .collect::<Result<Vec<_>>>()?;

    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out = Ingested {
        contexts: Vec::new(),
        counts: Vec::new(),
        context_weights: Vec::new(),
        row_contexts: Vec::new(),
        rejected: 0,
    };
    for record in rdr.records() {
        let record = record?;
        let parse = |i: usize| record.get(i).and_then(|v| v.trim().parse::<f64>().ok());
        let in_range = filters
            .iter()
            .all(|&(i, lo, hi)| parse(i).is_some_and(|v| v >= lo && v <= hi));
        let values: Option<Vec<f64>> = ctx_idx.iter().map(|&i| parse(i)).collect();
        let Some(values) = values.filter(|v| in_range && v.iter().all(|x| x.is_finite())) else {
            out.rejected += 1;
            continue;
        };
        let key: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        let id = *ids.entry(key).or_insert_with(|| {
            out.contexts.push(values);
            out.counts.push(0);
            out.contexts.len() - 1
        });
        out.counts[id] += 1;
        out.row_contexts.push(id);
    }
    let total = out.row_contexts.len();
    if total == 0 {
        return Err(Error::EmptyAfterFiltering {
            rejected: out.rejected,
        });
    }
    out.context_weights = out.counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(out)
}

/// Runs one policy over several seeds, in parallel. Each seed's result is
/// independent; a failing seed does not affect the others.
pub fn run_experiment(
    instance: &Instance,
    policy_cfg: &PolicyConfig,
    seeds: &[u64],
    collect_diagnostics: bool,
) -> Vec<Result<RunRecord>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let env = instance.env(seed)?;
            let mut policy = build_policy(
                &instance.spec,
                policy_cfg,
                Some(&instance.true_theta),
                instance.linear_features.as_deref(),
            )?;
            run_policy(&env, policy.as_mut(), seed, collect_diagnostics)
        })
        .collect()
}

/// Path of the per-run CSV for `seed` inside `dir`.
pub fn run_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("run_seed{seed}.csv"))
}

/// Writes the per-round CSV of a run.
pub fn persist_run(run: &RunRecord, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = run_csv_path(dir, run.seed);
    let file = BufWriter::new(File::create(&path)?);
    write_history_csv(&run.history, run.diagnostics.as_deref(), file)?;
    Ok(path)
}

/// Mean and standard-error curve of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub name: String,
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
    /// Absent when fewer than two runs were aggregated.
    pub se: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub opt: f64,
    pub horizon: usize,
    pub budget: f64,
    pub n_runs: usize,
    pub curves: Vec<MetricCurve>,
    pub final_regret_mean: f64,
    pub final_regret_se: Option<f64>,
    pub final_cost_slack: Vec<f64>,
    pub lock_rounds: Vec<Option<usize>>,
    pub bonus_bound_ok: bool,
    pub within_budget: bool,
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

fn curve(name: String, paths: &[Vec<f64>]) -> MetricCurve {
    let len = paths[0].len();
    let mut mean = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(paths.len());
    for t in 0..len {
        column.clear();
        column.extend(paths.iter().map(|p| p[t]));
        let (m, s) = mean_se(&column);
        mean.push(m);
        se.push(s.unwrap_or(0.0));
    }
    MetricCurve {
        name,
        t: (0..len).collect(),
        mean,
        se: (paths.len() >= 2).then_some(se),
    }
}

/// Aggregates runs of one configuration; curves are indexed by `t = 0..=T`.
pub fn aggregate(runs: &[RunRecord], opt: f64, budget: f64) -> Result<MetricsSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidConfig("nothing to aggregate".into()))?;
    let horizon = first.history.len();
    let d = first.history.cumulative_cost.len();
    let tf = horizon as f64;

    let regret_paths: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            std::iter::once(0.0)
                .chain(
                    r.history
                        .reward_path()
                        .into_iter()
                        .enumerate()
                        .map(|(i, cum)| (i + 1) as f64 * opt / tf - cum),
                )
                .collect()
        })
        .collect();
    let mut curves = vec![curve("regret".into(), &regret_paths)];
    let mut final_cost_slack = Vec::with_capacity(d);
    for i in 0..d {
        let paths: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                std::iter::once(0.0)
                    .chain(
                        r.history
                            .cost_path(i)
                            .into_iter()
                            .enumerate()
                            .map(|(k, cum)| cum - (k + 1) as f64 * budget / tf),
                    )
                    .collect()
            })
            .collect();
        let c = curve(format!("cost_slack_{}", i + 1), &paths);
        final_cost_slack.push(*c.mean.last().expect("nonempty"));
        curves.push(c);
    }
    let finals: Vec<f64> = runs.iter().map(|r| opt - r.history.cumulative_reward).collect();
    let (final_regret_mean, final_regret_se) = mean_se(&finals);
    Ok(MetricsSummary {
        opt,
        horizon,
        budget,
        n_runs: runs.len(),
        curves,
        final_regret_mean,
        final_regret_se,
        final_cost_slack,
        lock_rounds: runs.iter().map(|r| r.lock_round).collect(),
        bonus_bound_ok: runs.iter().all(RunRecord::bonus_bound_ok),
        within_budget: runs.iter().all(|r| r.history.within_budget(budget)),
    })
}

/// Scalar part of a summary, written as JSON next to the curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub opt: f64,
    pub horizon: usize,
    pub budget: f64,
    pub n_runs: usize,
    pub final_regret_mean: f64,
    pub final_regret_se: Option<f64>,
    pub final_cost_slack: Vec<f64>,
    pub n_locked: usize,
    pub mean_lock_round: Option<f64>,
    pub bonus_bound_ok: bool,
    pub within_budget: bool,
}

impl From<&MetricsSummary> for SummaryReport {
    fn from(s: &MetricsSummary) -> Self {
        let locks: Vec<f64> = s.lock_rounds.iter().flatten().map(|&t| t as f64).collect();
        Self {
            opt: s.opt,
            horizon: s.horizon,
            budget: s.budget,
            n_runs: s.n_runs,
            final_regret_mean: s.final_regret_mean,
            final_regret_se: s.final_regret_se,
            final_cost_slack: s.final_cost_slack.clone(),
            n_locked: locks.len(),
            mean_lock_round: (!locks.is_empty())
                .then(|| locks.iter().sum::<f64>() / locks.len() as f64),
            bonus_bound_ok: s.bonus_bound_ok,
            within_budget: s.within_budget,
        }
    }
}

/// Writes `plot_data.csv` (`t,metric,mean,se`) and `summary.json`.
pub fn emit_plot_data(summary: &MetricsSummary, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("plot_data.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&csv_path)?));
    w.write_record(["t", "metric", "mean", "se"])?;
    for c in &summary.curves {
        for (k, (&t, &m)) in c.t.iter().zip(&c.mean).enumerate() {
            let se = c.se.as_ref().map_or_else(String::new, |s| s[k].to_string());
            w.write_record([t.to_string(), c.name.clone(), m.to_string(), se])?;
        }
    }
    w.flush()?;
    let json_path = dir.join("summary.json");
    let report = SummaryReport::from(summary);
    serde_json::to_writer_pretty(BufWriter::new(File::create(&json_path)?), &report)?;
    Ok((csv_path, json_path))
}

/// Where an experiment's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceConfig {
    Loan(Box<LoanInstanceConfig>),
    Custom {
        problem: serde_json::Value,
        true_theta: Vec<f64>,
    },
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self::Loan(Box::default())
    }
}

impl InstanceConfig {
    pub fn build(&self) -> Result<Instance> {
        match self {
            Self::Loan(cfg) => gen_loan_instance(cfg),
            Self::Custom {
                problem,
                true_theta,
            } => {
                let instance = Instance {
                    spec: crate::problem::validate_spec(problem)?,
                    true_theta: true_theta.clone(),
                    linear_features: None,
                };
                instance.env(0)?;
                Ok(instance)
            }
        }
    }
}

/// Settings of the policy comparison sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub explore_scales: Vec<f64>,
    pub etas: Vec<f64>,
    pub conversion_lambda: f64,
    pub baseline_lambda: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            explore_scales: vec![0.025, 0.1, 0.3],
            etas: vec![0.005, 0.01, 0.05, 0.1, 0.2],
            conversion_lambda: 0.0129,
            baseline_lambda: 0.2452,
        }
    }
}

/// Experiment configuration document shared by the CLI subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub policy: PolicyConfig,
    pub seeds: Vec<u64>,
    pub diagnostics: bool,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceConfig::default(),
            policy: PolicyConfig::default(),
            seeds: (0..10).collect(),
            diagnostics: false,
            sweep: SweepConfig::default(),
        }
    }
}

/// Conversion-policy settings used by the sweep at exploration scale `c`.
pub fn sweep_conversion_config(sweep: &SweepConfig, c: f64) -> PolicyConfig {
    PolicyConfig {
        policy: PolicyKind::BoxB,
        nu_mode: NuMode::Empirical,
        working_budget: WorkingBudget::Full,
        lambda: Some(sweep.conversion_lambda),
        bonus: BonusKind::Practical,
        explore_scale: c,
        warm_start: 50,
        ..PolicyConfig::default()
    }
}

/// Baseline settings used by the sweep at exploration scale `c`.
pub fn sweep_baseline_config(sweep: &SweepConfig, c: f64, z: f64, eta: f64) -> PolicyConfig {
    PolicyConfig {
        policy: PolicyKind::BoxD,
        lambda: Some(sweep.baseline_lambda),
        bonus: BonusKind::Practical,
        explore_scale: c,
        warm_start: 50,
        z: Some(z),
        eta,
        ..PolicyConfig::default()
    }
}

/// One cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub policy: PolicyKind,
    pub explore_scale: f64,
    pub eta: Option<f64>,
    pub report: SummaryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub opt: f64,
    pub z: f64,
    pub entries: Vec<SweepEntry>,
}

fn collect_runs(results: Vec<Result<RunRecord>>) -> Result<Vec<RunRecord>> {
    results.into_iter().collect()
}

/// Compares the conversion policy with the dual-descent baseline over the
/// exploration scales. The baseline's learning rate is chosen in hindsight
/// per scale, by lowest mean final regret.
///
/// When `out` is given, the curves and per-run CSVs of every reported cell
/// are written under it.
pub fn sweep(
    instance: &Instance,
    sweep: &SweepConfig,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<SweepResult> {
    let opt = instance.opt()?.value;
    let budget = instance.spec.budget;
    let z = opt / budget;
    let mut entries = Vec::new();
    for &c in &sweep.explore_scales {
        let cfg = sweep_conversion_config(sweep, c);
        let runs = collect_runs(run_experiment(instance, &cfg, seeds, false))?;
        let summary = aggregate(&runs, opt, budget)?;
        if let Some(dir) = out {
            let dir = dir.join(format!("box-b_C{c}"));
            for r in &runs {
                persist_run(r, &dir)?;
            }
            emit_plot_data(&summary, &dir)?;
        }
        entries.push(SweepEntry {
            policy: PolicyKind::BoxB,
            explore_scale: c,
            eta: None,
            report: SummaryReport::from(&summary),
        });

        let mut best: Option<(f64, Vec<RunRecord>, MetricsSummary)> = None;
        for &eta in &sweep.etas {
            let cfg = sweep_baseline_config(sweep, c, z, eta);
            let runs = collect_runs(run_experiment(instance, &cfg, seeds, false))?;
            let summary = aggregate(&runs, opt, budget)?;
            if best
                .as_ref()
                .is_none_or(|(_, _, s)| summary.final_regret_mean < s.final_regret_mean)
            {
                best = Some((eta, runs, summary));
            }
        }
        let (eta, runs, summary) = best.ok_or_else(|| {
            Error::InvalidConfig("the sweep needs at least one learning rate".into())
        })?;
        if let Some(dir) = out {
            let dir = dir.join(format!("box-d_C{c}"));
            for r in &runs {
                persist_run(r, &dir)?;
            }
            emit_plot_data(&summary, &dir)?;
        }
        entries.push(SweepEntry {
            policy: PolicyKind::BoxD,
            explore_scale: c,
            eta: Some(eta),
            report: SummaryReport::from(&summary),
        });
    }
    Ok(SweepResult { opt, z, entries })
}
