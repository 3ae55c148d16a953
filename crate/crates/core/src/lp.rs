//! Static-policy linear program with dual certificates.
//!
//! For a context distribution `ν`, gains `g(a,x)`, cost rates `k(a,x) ∈ Rᵈ`,
//! budget `B` and horizon `T` the program is
//!
//! ```text
//! max  T Σ_x ν(x) Σ_a g(a,x) π_a(x)
//! s.t. T Σ_x ν(x) Σ_a k_i(a,x) π_a(x) ≤ B      for each i
//!      Σ_a π_a(x) ≤ 1                           for each x
//!      π ≥ 0
//! ```
//!
//! Any probability mass left unassigned in a context is given to the no-op
//! action after solving, which changes neither the value nor feasibility
//! because its gain and cost vanish.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;
/// Number of free variables accepted by [`opt_oracle`].
pub const ORACLE_MAX_VARS: usize = 4;

/// An instance of the program. Tables are indexed `[context][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub nu: Vec<f64>,
    pub gain: Vec<Vec<f64>>,
    pub cost_rate: Vec<Vec<Vec<f64>>>,
    pub budget: f64,
    pub horizon: f64,
    #[serde(default)]
    pub null_action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    DegenerateFallback,
}

/// Optimal policy with its dual variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    /// `π[x][a]`, each row a probability vector.
    pub pi: Vec<Vec<f64>>,
    pub value: f64,
    pub beta_budg: Vec<f64>,
    pub beta_psum: Vec<f64>,
    /// `β^{p-pos}[x][a]`, the reduced cost of each policy variable.
    pub beta_ppos: Vec<Vec<f64>>,
    pub status: LpStatus,
}

/// Largest KKT residuals of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub ppos_complementarity: f64,
    pub budget_slackness: f64,
    pub stationarity: f64,
    /// `max(0, B·Σβ − OPT)`.
    pub weak_duality: f64,
    /// `|OPT − (B·Σβ^budg + Σβ^psum)|`.
    pub duality_gap: f64,
    pub tol: f64,
    pub passed: bool,
}

impl LpProblem {
    pub fn n_contexts(&self) -> usize {
        self.nu.len()
    }

    pub fn n_actions(&self) -> usize {
        self.gain.first().map_or(0, Vec::len)
    }

    pub fn n_costs(&self) -> usize {
        self.cost_rate
            .first()
            .and_then(|row| row.first())
            .map_or(0, Vec::len)
    }

    fn check_shapes(&self) -> Result<()> {
        let (nx, na, d) = (self.n_contexts(), self.n_actions(), self.n_costs());
        let ok = nx > 0
            && na > 0
            && self.null_action < na
            && self.gain.len() == nx
            && self.cost_rate.len() == nx
            && self.gain.iter().all(|r| r.len() == na)
            && self
                .cost_rate
                .iter()
                .all(|r| r.len() == na && r.iter().all(|k| k.len() == d));
        if !ok {
            return Err(Error::InvalidProblem("inconsistent LP table shapes".into()));
        }
        let finite = self.nu.iter().all(|v| v.is_finite())
            && self.gain.iter().flatten().all(|v| v.is_finite())
            && self.cost_rate.iter().flatten().flatten().all(|v| v.is_finite())
            && self.budget.is_finite()
            && self.horizon.is_finite();
        if !finite {
            return Err(Error::InvalidProblem("non-finite LP input".into()));
        }
        Ok(())
    }

    /// `T·ν(x)·k_i(a,x)` summed against a policy, per budget row.
    pub fn budget_usage(&self, pi: &[Vec<f64>]) -> Vec<f64> {
        let mut used = vec![0.0; self.n_costs()];
        for (x, row) in pi.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                for (u, k) in used.iter_mut().zip(&self.cost_rate[x][a]) {
                    *u += self.horizon * self.nu[x] * k * p;
                }
            }
        }
        used
    }

    /// Objective value of a policy.
    pub fn objective(&self, pi: &[Vec<f64>]) -> f64 {
        pi.iter()
            .enumerate()
            .map(|(x, row)| {
                row.iter()
                    .enumerate()
                    .map(|(a, &p)| self.horizon * self.nu[x] * self.gain[x][a] * p)
                    .sum::<f64>()
            })
            .sum()
    }

    fn null_policy(&self) -> Vec<Vec<f64>> {
        (0..self.n_contexts())
            .map(|_| {
                let mut row = vec![0.0; self.n_actions()];
                row[self.null_action] = 1.0;
                row
            })
            .collect()
    }
}

/// Assembles a program; see the module documentation for its form.
pub fn build_lp(
    nu: Vec<f64>,
    gain: Vec<Vec<f64>>,
    cost_rate: Vec<Vec<Vec<f64>>>,
    budget: f64,
    horizon: f64,
    null_action: usize,
) -> LpProblem {
    LpProblem {
        nu,
        gain,
        cost_rate,
        budget,
        horizon,
        null_action,
    }
}

/// Dense tableau for `max cᵀz, Az ≤ b, z ≥ 0` with `b ≥ 0`, started from the
/// slack basis.
struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `(rows + 1) × (cols + 1)`; the last row holds reduced costs
    /// `c_j − c_Bᵀ B⁻¹ A_j`, the last column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Self {
        let rows = a.nrows();
        let n = a.ncols();
        let cols = n + rows;
        let width = cols + 1;
        let mut data = vec![0.0; (rows + 1) * width];
        for i in 0..rows {
            for j in 0..n {
                data[i * width + j] = a[(i, j)];
            }
            data[i * width + n + i] = 1.0;
            data[i * width + cols] = b[i];
        }
        data[rows * width..rows * width + n].copy_from_slice(c);
        Self {
            rows,
            cols,
            data,
            basis: (n..cols).collect(),
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let width = self.cols + 1;
        let p = self.at(r, s);
        for j in 0..width {
            self.data[r * width + j] /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * width..(r + 1) * width].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * width + s];
            if f != 0.0 {
                let row = &mut self.data[i * width..(i + 1) * width];
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[s] = 0.0;
            }
        }
        self.basis[r] = s;
    }

    /// Bland's rule: smallest improving column enters, ratio ties leave by
    /// smallest basic index.
    fn solve(&mut self, cost_tol: f64) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let Some(s) = (0..self.cols).find(|&j| self.at(self.rows, j) > cost_tol) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let aij = self.at(i, s);
                if aij > PIVOT_TOL {
                    let ratio = self.at(i, self.cols) / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                            if ratio < best && !tie
                                || tie && self.basis[i] < self.basis[r]
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::NumericalInstability(format!(
                    "no admissible pivot in column {s}"
                )));
            };
            self.pivot(r, s);
        }
        Err(Error::NumericalInstability(format!(
            "pivot limit {MAX_PIVOTS} reached"
        )))
    }
}

/// Solves the program by the primal simplex method.
///
/// The primal point and the duals are recomputed from an LU factorisation
/// of the final basis rather than read off the accumulated tableau.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution> {
    lp.check_shapes()?;
    let (nx, na, d) = (lp.n_contexts(), lp.n_actions(), lp.n_costs());
    if lp.budget <= 0.0 {
        return Ok(LpSolution {
            pi: lp.null_policy(),
            value: 0.0,
            beta_budg: vec![0.0; d],
            beta_psum: vec![0.0; nx],
            beta_ppos: vec![vec![0.0; na]; nx],
            status: LpStatus::DegenerateFallback,
        });
    }

    let n = nx * na;
    let rows = d + nx;
    let mut a = DMatrix::zeros(rows, n);
    let mut c = vec![0.0; n];
    for x in 0..nx {
        let w = lp.horizon * lp.nu[x];
        for act in 0..na {
            let j = x * na + act;
            c[j] = w * lp.gain[x][act];
            for i in 0..d {
                a[(i, j)] = w * lp.cost_rate[x][act][i];
            }
            a[(d + x, j)] = 1.0;
        }
    }
    let mut b = vec![lp.budget; d];
    b.extend(std::iter::repeat_n(1.0, nx));

    let cmax = c.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut tab = Tableau::new(&a, &b, &c);
    tab.solve(PIVOT_TOL * cmax)?;

    // Refactor the final basis.
    let full_col = |j: usize| -> DVector<f64> {
        if j < n {
            a.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(rows);
            e[j - n] = 1.0;
            e
        }
    };
    let mut basis_mat = DMatrix::zeros(rows, rows);
    for (k, &j) in tab.basis.iter().enumerate() {
        basis_mat.set_column(k, &full_col(j));
    }
    let lu = basis_mat.clone().lu();
    let xb = lu
        .solve(&DVector::from_column_slice(&b))
        .ok_or_else(|| Error::NumericalInstability("singular final basis".into()))?;
    let cb = DVector::from_iterator(
        rows,
        tab.basis.iter().map(|&j| if j < n { c[j] } else { 0.0 }),
    );
    let y = basis_mat
        .transpose()
        .lu()
        .solve(&cb)
        .ok_or_else(|| Error::NumericalInstability("singular final basis".into()))?;
    if xb.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericalInstability("non-finite basic solution".into()));
    }

    let mut z = vec![0.0; n];
    for (k, &j) in tab.basis.iter().enumerate() {
        if j < n {
            z[j] = xb[k].max(0.0);
        }
    }
    let mut pi: Vec<Vec<f64>> = (0..nx).map(|x| z[x * na..(x + 1) * na].to_vec()).collect();
    for row in &mut pi {
        let total: f64 = row.iter().sum();
        if total > 1.0 {
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    for row in &mut pi {
        let total: f64 = row.iter().sum();
        row[lp.null_action] += (1.0 - total).max(0.0);
    }

    let beta_budg: Vec<f64> = y.iter().take(d).copied().collect();
    let beta_psum: Vec<f64> = y.iter().skip(d).copied().collect();
    let beta_ppos = (0..nx)
        .map(|x| {
            (0..na)
                .map(|act| {
                    let j = x * na + act;
                    a.column(j).dot(&y) - c[j]
                })
                .collect()
        })
        .collect();
    let value = lp.objective(&pi);
    Ok(LpSolution {
        pi,
        value,
        beta_budg,
        beta_psum,
        beta_ppos,
        status: LpStatus::Optimal,
    })
}

/// Evaluates the KKT conditions of a solution; passes iff every residual
/// is at most `tol`.
pub fn check_kkt(lp: &LpProblem, sol: &LpSolution, tol: f64) -> KktReport {
    let (nx, na) = (lp.n_contexts(), lp.n_actions());
    let used = lp.budget_usage(&sol.pi);

    let mut primal: f64 = used.iter().map(|u| (u - lp.budget).max(0.0)).fold(0.0, f64::max);
    for row in &sol.pi {
        primal = primal.max((row.iter().sum::<f64>() - 1.0).abs());
        primal = row.iter().fold(primal, |m, &p| m.max(-p));
    }

    let dual = sol
        .beta_budg
        .iter()
        .chain(&sol.beta_psum)
        .chain(sol.beta_ppos.iter().flatten())
        .fold(0.0_f64, |m, &b| m.max(-b));

    let mut comp: f64 = 0.0;
    let mut stat: f64 = 0.0;
    for x in 0..nx {
        let w = lp.horizon * lp.nu[x];
        for a in 0..na {
            // The restored no-op mass is not a variable of the relaxed
            // program, so only the variable part enters complementarity.
            let p = if a == lp.null_action {
                let others: f64 = (0..na).filter(|&b| b != a).map(|b| sol.pi[x][b]).sum();
                (sol.pi[x][a] - (1.0 - others)).max(0.0)
            } else {
                sol.pi[x][a]
            };
            comp = comp.max((sol.beta_ppos[x][a] * p).abs());
            let priced: f64 = sol
                .beta_budg
                .iter()
                .zip(&lp.cost_rate[x][a])
                .map(|(b, k)| b * w * k)
                .sum();
            let r = w * lp.gain[x][a] - (priced + sol.beta_psum[x] - sol.beta_ppos[x][a]);
            stat = stat.max(r.abs());
        }
    }

    let slack = sol
        .beta_budg
        .iter()
        .zip(&used)
        .map(|(b, u)| (b * (u - lp.budget)).abs())
        .fold(0.0, f64::max);
    let beta_sum: f64 = sol.beta_budg.iter().sum();
    let weak = (lp.budget * beta_sum - sol.value).max(0.0);
    let gap = (sol.value - (lp.budget * beta_sum + sol.beta_psum.iter().sum::<f64>())).abs();

    let residuals = [primal, dual, comp, slack, stat, weak, gap];
    KktReport {
        primal_feasibility: primal,
        dual_feasibility: dual,
        ppos_complementarity: comp,
        budget_slackness: slack,
        stationarity: stat,
        weak_duality: weak,
        duality_gap: gap,
        tol,
        passed: residuals.iter().all(|&r| r <= tol),
    }
}

/// Best feasible grid policy, by exhaustive search over the non-null
/// variables of contexts with positive weight.
///
/// The last free variable is not enumerated: along it the objective is
/// linear, so the best grid point is either zero or the largest feasible
/// grid point.
pub fn opt_oracle(lp: &LpProblem, grid_step: f64) -> Result<f64> {
    lp.check_shapes()?;
    let (nx, na) = (lp.n_contexts(), lp.n_actions());
    let vars: Vec<(usize, usize)> = (0..nx)
        .flat_map(|x| (0..na).map(move |a| (x, a)))
        .filter(|&(_, a)| a != lp.null_action)
        .collect();
    if vars.len() > ORACLE_MAX_VARS {
        return Err(Error::TooLarge(vars.len()));
    }
    if lp.budget <= 0.0 || vars.is_empty() {
        return Ok(0.0);
    }
    let steps = (1.0 / grid_step).round() as usize;
    let level = |k: usize| k as f64 / steps as f64;
    let d = lp.n_costs();
    let coef = |&(x, a): &(usize, usize)| -> (f64, Vec<f64>) {
        let w = lp.horizon * lp.nu[x];
        (w * lp.gain[x][a], lp.cost_rate[x][a].iter().map(|k| w * k).collect())
    };
    let coefs: Vec<(f64, Vec<f64>)> = vars.iter().map(coef).collect();
    let feas_tol = 1e-12 * lp.budget.max(1.0);

    let (head, last) = vars.split_at(vars.len() - 1);
    let mut best = 0.0_f64;
    let mut idx = vec![0usize; head.len()];
    loop {
        let mut mass = vec![0.0; nx];
        let mut value = 0.0;
        let mut used = vec![0.0; d];
        for (v, &k) in idx.iter().enumerate() {
            let p = level(k);
            mass[head[v].0] += p;
            value += coefs[v].0 * p;
            for (u, c) in used.iter_mut().zip(&coefs[v].1) {
                *u += c * p;
            }
        }
        let mass_ok = mass.iter().all(|&m| m <= 1.0 + 1e-12);
        let budget_ok = used.iter().all(|&u| u <= lp.budget + feas_tol);
        if mass_ok && budget_ok {
            let (g, k) = &coefs[head.len()];
            let x_last = last[0].0;
            let mut top = steps - ((mass[x_last] * steps as f64) - 1e-9).ceil().max(0.0) as usize;
            for (u, c) in used.iter().zip(k) {
                if *c > 0.0 {
                    let room = ((lp.budget + feas_tol - u) / c * steps as f64 + 1e-9).floor();
                    top = top.min(room.max(0.0) as usize);
                }
            }
            let p = if *g > 0.0 { level(top) } else { 0.0 };
            best = best.max(value + g * p);
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx[pos] <= steps {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
