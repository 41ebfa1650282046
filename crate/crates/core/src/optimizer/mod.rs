//! Multistage stochastic MPC over a scenario tree: LP formulation, an exact
//! bounded-variable simplex solver, a gridded dynamic-programming oracle and
//! policy extraction.

mod dp;
mod lp;
mod policy;
mod simplex;
mod tree_lp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dp::solve_tree_dp;
pub use lp::{Constraint, ConstraintKind, LinearProgram};
pub use policy::{extract_policy, Policy};
pub use simplex::solve_lp;
pub use tree_lp::{formulate_open_loop, formulate_tree_lp, solve_tree, TreeProgram, VarKind};

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

fn default_discount() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Per-hour discount factor γ.
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
    /// $/MWh credited to energy left in storage at the end of the horizon.
    #[serde(default)]
    pub terminal_value_rate: f64,
    /// Column of the price block that settles trades.
    #[serde(default)]
    pub trading_dim: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            discount: default_discount(),
            solver_tolerance: default_tolerance(),
            terminal_value_rate: 0.0,
            trading_dim: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(OptError::InvalidInput(format!(
                "discount {} outside [0, 1]",
                self.discount
            )));
        }
        if !(self.solver_tolerance > 0.0 && self.solver_tolerance.is_finite()) {
            return Err(OptError::InvalidInput("solver tolerance must be positive".into()));
        }
        if !self.terminal_value_rate.is_finite() {
            return Err(OptError::InvalidInput("terminal value rate must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Objective value in $; meaningful only when optimal.
    pub objective: f64,
    /// One value per LP variable; empty unless optimal.
    pub values: Vec<f64>,
}

impl Solution {
    pub(crate) fn without_point(status: SolveStatus) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
