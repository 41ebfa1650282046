//! Rolling-horizon closed-loop evaluation.
//!
//! Every policy re-plans at decision epochs spaced one stage (H hours) apart,
//! applies the first H planned actions to the realised prices through
//! [`environment::step`](crate::environment::step) and moves on.
//!
//! Tree policies plan on a *decision tree* derived from the scenario tree:
//! the actions of a node cover the hours forecast by its children, priced at
//! the children's branch-weighted mean. Actions are therefore fixed before
//! the block they act in is observed, and branch only once a block has been
//! revealed. A tree of depth `D` plans `D·H` hours, the same horizon as the
//! point-forecast controllers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{reward_coefficients, step, BatteryParams, EnvError, HourlyAction, Observation};
use crate::matrix::{running_mean_slices, Matrix};
use crate::optimizer::{
    extract_policy, formulate_tree_lp, solve_lp, solve_tree, OptError, OptimizerConfig, TreeProgram, VarKind,
};
use crate::rng::mix_seed;
use crate::samplers::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::scenario_tree::{build_tree, weighted_block, ScenarioNode, ScenarioTree, TreeConfig, TreeError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error("{policy} applied an infeasible action in epoch {epoch}, hour {hour}: {error}")]
    Infeasible {
        policy: PolicyKind,
        epoch: usize,
        hour: usize,
        error: EnvError,
    },
}

/// The controllers under comparison, in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Whole-episode plan on realised prices.
    PerfectMpc,
    /// Finite-horizon plan on realised prices.
    OracleMpc,
    /// Finite-horizon plan on the sampler's mean forecast.
    DeterministicMpc,
    /// Open-loop plan maximising the average reward over sampled scenarios.
    McSmpc,
    /// Scenario-tree plan with the configured sampler.
    DstSmpc,
    /// Scenario-tree plan with a Gaussian autoregressive sampler.
    ArTreeSmpc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::PerfectMpc,
        PolicyKind::OracleMpc,
        PolicyKind::DeterministicMpc,
        PolicyKind::McSmpc,
        PolicyKind::DstSmpc,
        PolicyKind::ArTreeSmpc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::PerfectMpc => "perfect_mpc",
            PolicyKind::OracleMpc => "oracle_mpc",
            PolicyKind::DeterministicMpc => "deterministic_mpc",
            PolicyKind::McSmpc => "mc_smpc",
            PolicyKind::DstSmpc => "dst_smpc",
            PolicyKind::ArTreeSmpc => "ar_tree_smpc",
        }
    }

    /// Whether the policy draws forecasts from a sampler.
    pub fn needs_sampler(self) -> bool {
        !matches!(self, PolicyKind::PerfectMpc | PolicyKind::OracleMpc)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// Settings shared by every episode of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub tree: TreeConfig,
    pub battery: BatteryParams,
    pub optimizer: OptimizerConfig,
    /// Scenario count for `mc_smpc`; defaults to `keep_children^depth`, the
    /// number of leaves of a full-width tree.
    pub mc_samples: Option<usize>,
    /// History rows required before the first epoch.
    pub min_context: usize,
    pub seed: u64,
}

impl HarnessConfig {
    pub fn mc_sample_count(&self, stages: usize) -> usize {
        self.mc_samples
            .unwrap_or_else(|| self.tree.keep_children.saturating_pow(stages as u32))
            .max(1)
    }
}

/// A plan over consecutive hours with its planning objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub actions: Vec<HourlyAction>,
    pub objective: f64,
}

impl Plan {
    fn empty() -> Self {
        Self {
            actions: Vec::new(),
            objective: 0.0,
        }
    }
}

/// One decision epoch as applied to the realised prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Series row of the first applied hour.
    pub hour: usize,
    /// Realised prices in the trading dimension.
    pub prices: Vec<f64>,
    pub plan: Vec<HourlyAction>,
    pub reward: f64,
}

/// Closed-loop outcome of one policy on one price segment.
///
/// Equality ignores `wall_clock`.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeResult {
    pub policy: PolicyKind,
    pub total_reward: f64,
    pub epochs: Vec<EpochLog>,
    pub final_soc: f64,
    #[serde(skip)]
    pub wall_clock: Vec<Duration>,
}

impl PartialEq for EpisodeResult {
    fn eq(&self, other: &Self) -> bool {
        self.policy == other.policy
            && self.total_reward.to_bits() == other.total_reward.to_bits()
            && self.final_soc.to_bits() == other.final_soc.to_bits()
            && self.epochs == other.epochs
    }
}

impl EpisodeResult {
    pub fn epoch_rewards(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.reward).collect()
    }

    /// Per-epoch logs as a JSON array.
    pub fn log_json(&self) -> String {
        serde_json::to_string_pretty(&self.epochs).expect("epoch logs serialise")
    }
}

fn single_node_plan(
    prices: &Matrix,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    if prices.rows() == 0 {
        return Ok(Plan::empty());
    }
    let (prog, sol) = solve_tree(&ScenarioTree::single(prices.clone()), battery, cfg, soc)?;
    let policy = extract_policy(&prog, &sol)?;
    Ok(Plan {
        actions: policy.first_stage().to_vec(),
        objective: sol.objective,
    })
}

/// Plan over the whole remaining episode with realised prices.
pub fn plan_perfect(
    prices: &Matrix,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    single_node_plan(prices, battery, cfg, soc)
}

/// Plan over the planning horizon with realised prices.
pub fn plan_oracle(
    prices: &Matrix,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    single_node_plan(prices, battery, cfg, soc)
}

/// Plan on a point forecast.
pub fn plan_deterministic(
    point_forecast: &Matrix,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    single_node_plan(point_forecast, battery, cfg, soc)
}

/// Single open-loop plan maximising the mean reward over the sampled
/// trajectories. The objective is the running mean of the per-scenario
/// objective vectors.
pub fn plan_mc_smpc(
    samples: &TrajectoryBatch,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    let (m, h, _) = samples.shape();
    if m == 0 {
        return Err(HarnessError::InvalidInput("no scenarios to average".into()));
    }
    if h == 0 {
        return Ok(Plan::empty());
    }
    let mut prog = formulate_tree_lp(&ScenarioTree::single(samples.sample_matrix(0)), battery, cfg, soc)?;
    let vectors: Vec<Vec<f64>> = (0..m)
        .map(|i| scenario_objective(&prog, &samples.sample_matrix(i), cfg))
        .collect();
    prog.lp.objective = running_mean_slices(vectors.iter().map(Vec::as_slice)).expect("at least one scenario");
    solve_single(&prog, cfg)
}

/// Objective vector of a single-node program re-priced at `prices`.
fn scenario_objective(prog: &TreeProgram, prices: &Matrix, cfg: &OptimizerConfig) -> Vec<f64> {
    let mut obj = prog.lp.objective.clone();
    for j in 0..prog.hours(0) {
        let w = 1.0 * cfg.discount.powi(j as i32);
        let (cc, cd) = reward_coefficients(prices.get(j, cfg.trading_dim), &prog.battery);
        obj[prog.var(0, j, VarKind::Charge)] = w * cc;
        obj[prog.var(0, j, VarKind::Discharge)] = w * cd;
    }
    obj
}

fn solve_single(prog: &TreeProgram, cfg: &OptimizerConfig) -> Result<Plan, HarnessError> {
    let sol = solve_lp(&prog.lp, cfg.solver_tolerance)?;
    if !sol.is_optimal() {
        return Err(OptError::SolverFailure(format!("program reported {:?}", sol.status)).into());
    }
    let policy = extract_policy(prog, &sol)?;
    Ok(Plan {
        actions: policy.first_stage().to_vec(),
        objective: sol.objective,
    })
}

/// Decision tree of a scenario tree: drops the leaves and gives every
/// remaining node the branch-weighted mean of its children's forecasts.
/// Probabilities and ids are unchanged.
pub fn decision_tree(tree: &ScenarioTree) -> ScenarioTree {
    let depth = tree.depth();
    if depth == 0 {
        return tree.clone();
    }
    let nodes: Vec<ScenarioNode> = tree
        .nodes()
        .iter()
        .filter(|n| n.stage < depth)
        .map(|n| ScenarioNode {
            forecast: weighted_block(n.children.iter().map(|&c| {
                let child = &tree.nodes()[c];
                (child.branch_prob, &child.forecast)
            })),
            children: n
                .children
                .iter()
                .copied()
                .filter(|&c| tree.nodes()[c].stage < depth)
                .collect(),
            ..n.clone()
        })
        .collect();
    let mut config = tree.config.clone();
    config.depth = depth - 1;
    // Breadth-first ids keep the retained nodes at the front.
    debug_assert!(nodes.iter().enumerate().all(|(i, n)| n.id == i));
    ScenarioTree::from_nodes(config, nodes).expect("decision tree of a valid tree is valid")
}

/// Tree plan: the first-stage actions of the decision tree's program.
pub fn plan_dst_smpc(
    tree: &ScenarioTree,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc: f64,
) -> Result<Plan, HarnessError> {
    if tree.depth() == 0 {
        return Err(HarnessError::InvalidInput("tree has no forecast stages".into()));
    }
    let (prog, sol) = solve_tree(&decision_tree(tree), battery, cfg, soc)?;
    let policy = extract_policy(&prog, &sol)?;
    Ok(Plan {
        actions: policy.first_stage().to_vec(),
        objective: sol.objective,
    })
}

/// First epoch hour: the first `start + k·H` with enough history.
pub fn first_epoch(range: &Range<usize>, stage_horizon: usize, min_context: usize) -> usize {
    let need = min_context.max(1);
    let mut t = range.start;
    while t < need {
        t += stage_horizon;
    }
    t
}

/// The plan a policy makes at series row `t` with state of charge `soc`,
/// for an episode ending at row `end`. The horizon is `depth` stages,
/// truncated at `end`; `perfect_mpc` plans through to `end`.
#[allow(clippy::too_many_arguments)]
pub fn plan_epoch(
    kind: PolicyKind,
    series: &Matrix,
    t: usize,
    end: usize,
    sampler: Option<&dyn TrajectorySampler>,
    cfg: &HarnessConfig,
    soc: f64,
    epoch: usize,
) -> Result<Plan, HarnessError> {
    let h = cfg.tree.stage_horizon;
    let (b, opt) = (&cfg.battery, &cfg.optimizer);
    if t > end || end > series.rows() {
        return Err(HarnessError::InvalidInput(format!("epoch at row {t} outside 0..{end}")));
    }
    let stages = cfg.tree.depth.min((end - t) / h);
    let horizon = stages * h;
    let seed = mix_seed(cfg.seed, epoch as u64);
    let history = || series.slice_rows(0, t);
    let sampler = || sampler.ok_or_else(|| HarnessError::InvalidInput(format!("{kind} needs a sampler")));
    let draw = |m: usize| -> Result<TrajectoryBatch, HarnessError> {
        let batch = sampler()?.sample(&SamplerRequest::new(history(), m, horizon, seed))?;
        batch.check(m, horizon, series.cols())?;
        Ok(batch)
    };
    match kind {
        PolicyKind::PerfectMpc => plan_perfect(&series.slice_rows(t, end), b, opt, soc),
        PolicyKind::OracleMpc => plan_oracle(&series.slice_rows(t, t + horizon), b, opt, soc),
        PolicyKind::DeterministicMpc => {
            let mean = draw(cfg.tree.samples_per_node)?.mean_trajectory();
            plan_deterministic(&mean, b, opt, soc)
        }
        PolicyKind::McSmpc => plan_mc_smpc(&draw(cfg.mc_sample_count(stages))?, b, opt, soc),
        PolicyKind::DstSmpc | PolicyKind::ArTreeSmpc => {
            if stages == 0 {
                return Ok(Plan::empty());
            }
            let tree_cfg = TreeConfig {
                depth: stages,
                master_seed: seed,
                ..cfg.tree.clone()
            };
            let tree = build_tree(sampler()?, &history(), &tree_cfg)?;
            plan_dst_smpc(&tree, b, opt, soc)
        }
    }
}

/// Runs one policy over `range` of `series`. Hours before `range.start` are
/// available as history. The episode covers whole stages only; trailing
/// hours that do not fill a stage are skipped.
pub fn run_episode(
    kind: PolicyKind,
    series: &Matrix,
    range: Range<usize>,
    sampler: Option<&dyn TrajectorySampler>,
    cfg: &HarnessConfig,
) -> Result<EpisodeResult, HarnessError> {
    cfg.tree.validate()?;
    cfg.battery
        .validate()
        .map_err(|e| HarnessError::InvalidInput(e.to_string()))?;
    cfg.optimizer.validate()?;
    if range.end > series.rows() || range.start > range.end {
        return Err(HarnessError::InvalidInput(format!(
            "episode range {range:?} outside a series of {} rows",
            series.rows()
        )));
    }
    if series.cols() != cfg.tree.series_dim || cfg.optimizer.trading_dim >= series.cols() {
        return Err(HarnessError::InvalidInput(format!(
            "series has {} columns, tree expects {} and trades column {}",
            series.cols(),
            cfg.tree.series_dim,
            cfg.optimizer.trading_dim
        )));
    }
    if kind.needs_sampler() && sampler.is_none() {
        return Err(HarnessError::InvalidInput(format!("{kind} needs a sampler")));
    }
    let h = cfg.tree.stage_horizon;
    let t0 = first_epoch(&range, h, cfg.min_context);
    let whole = range.end.saturating_sub(t0) / h;
    let end = t0 + whole * h;
    let b = &cfg.battery;
    let opt = &cfg.optimizer;

    let perfect = if kind == PolicyKind::PerfectMpc {
        // Re-planning with full information reproduces the tail of this plan.
        Some(plan_perfect(&series.slice_rows(t0, end), b, opt, b.soc_init)?)
    } else {
        None
    };

    let mut soc = b.soc_init;
    let mut epochs = Vec::with_capacity(whole);
    let mut wall_clock = Vec::with_capacity(whole);
    for (epoch, t) in (t0..end).step_by(h).enumerate() {
        let clock = Instant::now();
        let plan = match &perfect {
            Some(p) => p.actions[t - t0..t - t0 + h].to_vec(),
            None => plan_epoch(kind, series, t, end, sampler, cfg, soc, epoch)?.actions,
        };
        let applied = &plan[..h];
        let mut reward = 0.0;
        let mut prices = Vec::with_capacity(h);
        for (k, &act) in applied.iter().enumerate() {
            let obs = Observation {
                soc,
                prices: series.row(t + k).to_vec(),
                time: t + k,
            };
            let (next, r) = step(&obs, act, b, opt.trading_dim).map_err(|error| HarnessError::Infeasible {
                policy: kind,
                epoch,
                hour: t + k,
                error,
            })?;
            soc = next;
            reward += r;
            prices.push(obs.prices[opt.trading_dim]);
        }
        epochs.push(EpochLog {
            epoch,
            hour: t,
            prices,
            plan: applied.to_vec(),
            reward,
        });
        wall_clock.push(clock.elapsed());
    }
    if let Some(last) = epochs.last_mut() {
        last.reward += opt.terminal_value_rate * soc;
    }
    let total_reward = epochs.iter().map(|e| e.reward).sum();
    Ok(EpisodeResult {
        policy: kind,
        total_reward,
        epochs,
        final_soc: soc,
        wall_clock,
    })
}

/// One unit of work for [`run_episodes`].
#[derive(Clone)]
pub struct EpisodeJob<'a> {
    pub kind: PolicyKind,
    pub series: &'a Matrix,
    pub range: Range<usize>,
    pub sampler: Option<&'a dyn TrajectorySampler>,
    pub config: &'a HarnessConfig,
}

/// Runs independent episodes in parallel. Results keep the job order.
pub fn run_episodes(jobs: &[EpisodeJob<'_>]) -> Vec<Result<EpisodeResult, HarnessError>> {
    jobs.par_iter()
        .map(|j| run_episode(j.kind, j.series, j.range.clone(), j.sampler, j.config))
        .collect()
}

fn cell(v: f64) -> String {
    crate::scenario_tree::fixed(v, 2)
}

/// Report CSV: one row per month, one column per policy (in
/// [`PolicyKind::ALL`] order), then `Sum` and `Average` rows.
pub fn aggregate_report(results: &BTreeMap<String, BTreeMap<PolicyKind, EpisodeResult>>) -> String {
    let totals: BTreeMap<String, BTreeMap<PolicyKind, f64>> = results
        .iter()
        .map(|(month, row)| (month.clone(), row.iter().map(|(k, r)| (*k, r.total_reward)).collect()))
        .collect();
    report_from_totals(&totals)
}

/// [`aggregate_report`] on precomputed totals. Missing cells stay empty and
/// are left out of the column sums and averages.
pub fn report_from_totals(totals: &BTreeMap<String, BTreeMap<PolicyKind, f64>>) -> String {
    let policies: BTreeSet<PolicyKind> = totals.values().flat_map(|r| r.keys().copied()).collect();
    let mut out = String::from("month");
    for p in &policies {
        out.push(',');
        out.push_str(p.as_str());
    }
    out.push('\n');
    let mut sums: BTreeMap<PolicyKind, (f64, usize)> = BTreeMap::new();
    for (month, row) in totals {
        out.push_str(month);
        for p in &policies {
            out.push(',');
            if let Some(&v) = row.get(p) {
                out.push_str(&cell(v));
                let e = sums.entry(*p).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        out.push('\n');
    }
    for (label, average) in [("Sum", false), ("Average", true)] {
        out.push_str(label);
        for p in &policies {
            out.push(',');
            let (s, n) = sums.get(p).copied().unwrap_or_default();
            if n > 0 {
                out.push_str(&cell(if average { s / n as f64 } else { s }));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{GaussianArParams, GaussianArSampler, ReplaySampler};

    fn setup(h: usize, depth: usize) -> HarnessConfig {
        HarnessConfig {
            tree: TreeConfig {
                depth,
                stage_horizon: h,
                samples_per_node: 8,
                clusters: 3,
                keep_children: 2,
                series_dim: 1,
                master_seed: 0,
            },
            battery: BatteryParams::default(),
            optimizer: OptimizerConfig::default(),
            mc_samples: None,
            min_context: 1,
            seed: 3,
        }
    }

    #[test]
    fn constant_prices_idle_for_every_policy() {
        let series = Matrix::column(&[42.0; 40]);
        let replay = ReplaySampler::new(series.clone());
        let ar = GaussianArSampler::new(GaussianArParams::univariate(0.0, 42.0, 0.0).unwrap()).unwrap();
        let cfg = setup(4, 2);
        for kind in PolicyKind::ALL {
            let sampler: &dyn TrajectorySampler = if kind == PolicyKind::ArTreeSmpc { &ar } else { &replay };
            let r = run_episode(kind, &series, 4..40, Some(sampler), &cfg).unwrap();
            assert_eq!(r.total_reward, 0.0, "{kind}");
            assert!(
                r.epochs.iter().all(|e| e.plan.iter().all(HourlyAction::is_idle)),
                "{kind}"
            );
        }
    }

    #[test]
    fn replay_sampler_reproduces_oracle_epochs() {
        let prices: Vec<f64> = (0..60)
            .map(|t| 40.0 + 25.0 * ((t as f64) * 0.7).sin() + (t % 5) as f64)
            .collect();
        let series = Matrix::column(&prices);
        let replay = ReplaySampler::new(series.clone());
        let cfg = setup(3, 3);
        let oracle = run_episode(PolicyKind::OracleMpc, &series, 3..57, None, &cfg).unwrap();
        assert!(oracle.total_reward > 0.0);
        for kind in [PolicyKind::DeterministicMpc, PolicyKind::McSmpc, PolicyKind::DstSmpc] {
            let r = run_episode(kind, &series, 3..57, Some(&replay), &cfg).unwrap();
            for (a, b) in r.epochs.iter().zip(&oracle.epochs) {
                assert!((a.reward - b.reward).abs() < 1e-9, "{kind} epoch {}", a.epoch);
            }
        }
    }

    #[test]
    fn seeded_episodes_repeat_exactly() {
        let prices: Vec<f64> = (0..40).map(|t| 30.0 + 10.0 * ((t % 6) as f64)).collect();
        let series = Matrix::column(&prices);
        let ar = GaussianArSampler::new(GaussianArParams::univariate(0.6, 20.0, 8.0).unwrap()).unwrap();
        let cfg = setup(4, 2);
        let a = run_episode(PolicyKind::ArTreeSmpc, &series, 0..40, Some(&ar), &cfg).unwrap();
        let b = run_episode(PolicyKind::ArTreeSmpc, &series, 0..40, Some(&ar), &cfg).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.epoch_rewards().iter().sum();
        assert!((a.total_reward - sum).abs() < 1e-9);
        assert_eq!(a.epochs[0].hour, 4);
    }

    #[test]
    fn perfect_on_two_hour_instance() {
        let cfg = HarnessConfig {
            battery: BatteryParams::ideal(),
            ..setup(2, 1)
        };
        let series = Matrix::column(&[0.0, 10.0, 30.0]);
        let r = run_episode(PolicyKind::PerfectMpc, &series, 1..3, None, &cfg).unwrap();
        assert_eq!(r.epochs.len(), 1);
        assert!((r.total_reward - 20.0).abs() < 1e-9);
        let o = run_episode(PolicyKind::OracleMpc, &series, 1..3, None, &cfg).unwrap();
        assert_eq!(o.total_reward, r.total_reward);
    }

    #[test]
    fn empty_remainder_gives_empty_plan() {
        let p = plan_perfect(
            &Matrix::zeros(0, 1),
            &BatteryParams::default(),
            &OptimizerConfig::default(),
            0.0,
        )
        .unwrap();
        assert!(p.actions.is_empty() && p.objective == 0.0);
    }

    #[test]
    fn mc_with_one_sample_matches_deterministic() {
        let traj = Matrix::column(&[30.0, 10.0, 55.0, 20.0, 70.0, 65.0]);
        let batch = TrajectoryBatch::from_vec(1, 6, 1, traj.as_slice().to_vec());
        let b = BatteryParams::default();
        let cfg = OptimizerConfig::default();
        let mc = plan_mc_smpc(&batch, &b, &cfg, 0.2).unwrap();
        let det = plan_deterministic(&traj, &b, &cfg, 0.2).unwrap();
        assert_eq!(mc, det);
    }

    #[test]
    fn mirrored_scenarios_idle() {
        let up = [40.0, 40.0, 80.0, 80.0];
        let down = [80.0, 80.0, 40.0, 40.0];
        let batch = TrajectoryBatch::from_vec(2, 4, 1, up.iter().chain(&down).copied().collect());
        let p = plan_mc_smpc(&batch, &BatteryParams::default(), &OptimizerConfig::default(), 0.0).unwrap();
        assert!(p.actions.iter().all(HourlyAction::is_idle), "{p:?}");
    }

    #[test]
    fn cancelling_regime_means_idle_deterministic() {
        // Each regime admits a profitable cycle, their mean is flat.
        let a = [20.0, 80.0, 20.0, 80.0];
        let b_ = [80.0, 20.0, 80.0, 20.0];
        let mean = Matrix::column(&a.iter().zip(&b_).map(|(x, y)| (x + y) / 2.0).collect::<Vec<_>>());
        let battery = BatteryParams::default();
        let cfg = OptimizerConfig::default();
        let p = plan_deterministic(&mean, &battery, &cfg, 0.0).unwrap();
        assert!(p.actions.iter().all(HourlyAction::is_idle));
        assert_eq!(p.objective, 0.0);
        assert!(
            plan_deterministic(&Matrix::column(&a), &battery, &cfg, 0.0)
                .unwrap()
                .objective
                > 0.0
        );
    }

    #[test]
    fn chain_tree_matches_deterministic_on_centroids() {
        let blocks = vec![
            Matrix::column(&[50.0, 50.0]),
            Matrix::column(&[10.0, 90.0]),
            Matrix::column(&[30.0, 70.0]),
        ];
        let chain = ScenarioTree::chain(TreeConfig::default(), blocks.clone());
        let b = BatteryParams::default();
        let cfg = OptimizerConfig::default();
        let dst = plan_dst_smpc(&chain, &b, &cfg, 0.0).unwrap();
        let det = plan_deterministic(&blocks[1].vstack(&blocks[2]), &b, &cfg, 0.0).unwrap();
        assert_eq!(dst.objective, det.objective);
        assert_eq!(dst.actions, det.actions[..2]);
    }

    #[test]
    fn report_sums_and_averages() {
        let mut totals = BTreeMap::new();
        totals.insert("2024-02".to_string(), BTreeMap::from([(PolicyKind::DstSmpc, 20.0)]));
        totals.insert("2024-01".to_string(), BTreeMap::from([(PolicyKind::DstSmpc, 10.0)]));
        assert_eq!(
            report_from_totals(&totals),
            "month,dst_smpc\n2024-01,10.00\n2024-02,20.00\nSum,30.00\nAverage,15.00\n"
        );
        let single = BTreeMap::from([("m".to_string(), BTreeMap::from([(PolicyKind::OracleMpc, -0.001)]))]);
        assert_eq!(
            report_from_totals(&single),
            "month,oracle_mpc\nm,0.00\nSum,0.00\nAverage,0.00\n"
        );
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("dqn".parse::<PolicyKind>().is_err());
    }
}
