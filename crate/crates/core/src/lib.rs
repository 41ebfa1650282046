//! Scenario-tree stochastic MPC for battery energy arbitrage.
//!
//! The crate is organised around the planning loop:
//!
//! - [`samplers`] produce seeded batches of future price trajectories
//!   conditioned on an observation history.
//! - [`scenario_tree`] clusters those batches stage by stage into a
//!   probability-weighted scenario tree.
//! - [`optimizer`] turns a tree into a linear program, solves it with a
//!   bounded-variable simplex method and cross-checks it with a gridded
//!   dynamic program.
//! - [`environment`] holds the battery dynamics and reward accounting.
//! - [`harness`] runs rolling-horizon episodes for the supported controllers
//!   and aggregates monthly reports.
//! - [`config`] and [`data`] load run configurations and hourly price CSVs.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod environment;
pub mod harness;
pub mod matrix;
pub mod optimizer;
pub mod rng;
pub mod samplers;
pub mod scenario_tree;

pub use environment::{BatteryParams, HourlyAction, Observation};
pub use matrix::Matrix;
pub use optimizer::{OptimizerConfig, Solution, SolveStatus};
pub use samplers::{SamplerRequest, TrajectoryBatch, TrajectorySampler};
pub use scenario_tree::{ScenarioNode, ScenarioTree, TreeConfig};
