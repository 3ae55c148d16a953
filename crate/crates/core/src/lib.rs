//! Contextual bandits with knapsacks (CBwK) under a logistic conversion model.
//!
//! The crate is organised bottom-up:
//!
//! * [`problem`] and [`env`] hold the finite instance description, the
//!   simulated environment and the round-by-round interaction record.
//! * [`logistic`] is the regularized logistic estimator with its confidence
//!   bonuses; [`lp`] solves the per-round static-policy linear program and
//!   certifies it through its KKT conditions.
//! * [`policy`] contains the adaptive policies: the conversion-model policy
//!   with phase-0 budget guard, the LinUCB variant solving the same program,
//!   and the dual-descent baseline.
//! * [`bench`] generates the loan-discount instance, runs seeded experiments
//!   and aggregates metrics.

pub mod bench;
pub mod env;
pub mod error;
pub mod logistic;
pub mod lp;
pub mod policy;
pub mod problem;
pub mod rng;
pub mod runner;

pub use env::{sigmoid, ConversionEnv, EnvState, Environment, History, LinearEnv, RoundOutcome};
pub use error::{Error, Result};
pub use lp::{build_lp, check_kkt, opt_oracle, solve_lp, KktReport, LpProblem, LpSolution, LpStatus};
pub use problem::{validate_spec, ProblemSpec};
