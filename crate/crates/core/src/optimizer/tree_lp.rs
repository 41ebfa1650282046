use super::lp::{ConstraintKind, LinearProgram};
use super::simplex::solve_lp;
use super::{OptError, OptimizerConfig, Solution};
use crate::environment::{reward_coefficients, BatteryParams, FEASIBILITY_TOL};
use crate::scenario_tree::ScenarioTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Charge = 0,
    Discharge = 1,
    Soc = 2,
}

/// The tree LP together with its variable layout.
///
/// Variables are ordered by node id, then hour, then charge, discharge,
/// state of charge. Each node has one hour per row of its forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeProgram {
    pub lp: LinearProgram,
    pub battery: BatteryParams,
    pub initial_soc: f64,
    hours: Vec<usize>,
    offsets: Vec<usize>,
    parents: Vec<Option<usize>>,
}

impl TreeProgram {
    pub fn num_nodes(&self) -> usize {
        self.hours.len()
    }

    pub fn hours(&self, node: usize) -> usize {
        self.hours[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    pub fn var(&self, node: usize, hour: usize, kind: VarKind) -> usize {
        debug_assert!(hour < self.hours[node]);
        self.offsets[node] + 3 * hour + kind as usize
    }

    /// Objective coefficients of charge and discharge at `(node, hour)`.
    pub fn action_costs(&self, node: usize, hour: usize) -> (f64, f64) {
        (
            self.lp.objective[self.var(node, hour, VarKind::Charge)],
            self.lp.objective[self.var(node, hour, VarKind::Discharge)],
        )
    }
}

/// Builds the multistage program on `tree`, each node weighted by its path
/// probability and priced by its own forecast.
pub fn formulate_tree_lp(
    tree: &ScenarioTree,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    initial_soc: f64,
) -> Result<TreeProgram, OptError> {
    tree.validate().map_err(|e| OptError::InvalidInput(e.to_string()))?;
    let weights: Vec<f64> = tree.nodes().iter().map(|n| n.path_prob).collect();
    formulate_weighted(tree, &weights, battery, cfg, initial_soc)
}

/// The open-loop restriction of [`formulate_tree_lp`]: every node of a stage
/// shares one action sequence, which reduces the tree to a chain priced at
/// the stage-expected forecast.
pub fn formulate_open_loop(
    tree: &ScenarioTree,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    initial_soc: f64,
) -> Result<TreeProgram, OptError> {
    tree.validate().map_err(|e| OptError::InvalidInput(e.to_string()))?;
    for t in 0..=tree.depth() {
        let mut rows = tree.nodes_at_stage(t).map(|n| n.forecast.rows());
        let first = rows.next();
        if rows.any(|r| Some(r) != first) {
            return Err(OptError::InvalidInput(format!("stage {t} mixes forecast lengths")));
        }
    }
    let chain = ScenarioTree::chain(tree.config.clone(), tree.expected_path());
    formulate_tree_lp(&chain, battery, cfg, initial_soc)
}

pub(crate) fn formulate_weighted(
    tree: &ScenarioTree,
    weights: &[f64],
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    initial_soc: f64,
) -> Result<TreeProgram, OptError> {
    battery.validate().map_err(|e| OptError::InvalidInput(e.to_string()))?;
    cfg.validate()?;
    if !(initial_soc >= battery.soc_min - FEASIBILITY_TOL && initial_soc <= battery.soc_max + FEASIBILITY_TOL) {
        return Err(OptError::InvalidInput(format!(
            "initial SoC {initial_soc} outside [{}, {}]",
            battery.soc_min, battery.soc_max
        )));
    }
    let soc0 = initial_soc.clamp(battery.soc_min, battery.soc_max);
    let nodes = tree.nodes();
    let mut hours = Vec::with_capacity(nodes.len());
    let mut offsets = Vec::with_capacity(nodes.len());
    let mut start_hour = vec![0usize; nodes.len()];
    let mut total = 0;
    for n in nodes {
        let h = n.forecast.rows();
        if h == 0 {
            return Err(OptError::InvalidInput(format!("node {} has an empty forecast", n.id)));
        }
        if cfg.trading_dim >= n.forecast.cols() {
            return Err(OptError::InvalidInput(format!(
                "trading dimension {} but node {} has {} price columns",
                cfg.trading_dim,
                n.id,
                n.forecast.cols()
            )));
        }
        if let Some(p) = n.parent_id {
            start_hour[n.id] = start_hour[p] + hours[p];
        }
        hours.push(h);
        offsets.push(total);
        total += 3 * h;
    }

    let mut prog = TreeProgram {
        lp: LinearProgram::new(),
        battery: battery.clone(),
        initial_soc: soc0,
        hours,
        offsets,
        parents: nodes.iter().map(|n| n.parent_id).collect(),
    };
    let b = battery;
    for n in nodes {
        let pi = weights[n.id];
        for j in 0..prog.hours[n.id] {
            let w = pi * cfg.discount.powi((start_hour[n.id] + j) as i32);
            let (cc, cd) = reward_coefficients(n.forecast.get(j, cfg.trading_dim), b);
            let prefix = format!("n{}_h{}", n.id, j);
            prog.lp.add_variable(format!("{prefix}_c"), 0.0, b.p_max, w * cc);
            prog.lp.add_variable(format!("{prefix}_d"), 0.0, b.p_max, w * cd);
            let terminal = if n.is_leaf() && j + 1 == prog.hours[n.id] {
                pi * cfg.discount.powi((start_hour[n.id] + j + 1) as i32) * cfg.terminal_value_rate
            } else {
                0.0
            };
            prog.lp
                .add_variable(format!("{prefix}_s"), b.soc_min, b.soc_max, terminal);
        }
    }
    for n in nodes {
        for j in 0..prog.hours[n.id] {
            let mut row = vec![
                (prog.var(n.id, j, VarKind::Soc), 1.0),
                (prog.var(n.id, j, VarKind::Charge), -b.eta_c * b.dt),
                (prog.var(n.id, j, VarKind::Discharge), b.dt / b.eta_d),
            ];
            let prev = if j > 0 {
                Some(prog.var(n.id, j - 1, VarKind::Soc))
            } else {
                n.parent_id.map(|p| prog.var(p, prog.hours[p] - 1, VarKind::Soc))
            };
            let rhs = match prev {
                Some(v) => {
                    row.push((v, -1.0));
                    0.0
                }
                None => soc0,
            };
            prog.lp.add_constraint(row, ConstraintKind::Eq, rhs);
        }
    }
    Ok(prog)
}

/// Formulates and solves the tree program. Any status other than optimal
/// is a solver failure, since the idle plan is always feasible.
pub fn solve_tree(
    tree: &ScenarioTree,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    initial_soc: f64,
) -> Result<(TreeProgram, Solution), OptError> {
    let prog = formulate_tree_lp(tree, battery, cfg, initial_soc)?;
    let sol = solve_lp(&prog.lp, cfg.solver_tolerance)?;
    if !sol.is_optimal() {
        return Err(OptError::SolverFailure(format!(
            "tree program reported {:?}",
            sol.status
        )));
    }
    Ok((prog, sol))
}
