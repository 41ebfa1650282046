use super::tree_lp::{formulate_tree_lp, TreeProgram, VarKind};
use super::{OptError, OptimizerConfig, Solution, SolveStatus};
use crate::environment::BatteryParams;
use crate::scenario_tree::ScenarioTree;

/// Uniform SoC grid with linear interpolation between points.
struct Grid {
    lo: f64,
    step: f64,
    points: Vec<f64>,
}

impl Grid {
    fn new(lo: f64, hi: f64, n: usize) -> Self {
        if hi <= lo {
            return Self {
                lo,
                step: 0.0,
                points: vec![lo],
            };
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|k| lo + step * k as f64).collect();
        points[n - 1] = hi;
        Self { lo, step, points }
    }

    fn interp(&self, values: &[f64], s: f64) -> f64 {
        if self.points.len() == 1 {
            return values[0];
        }
        let x = ((s - self.lo) / self.step).clamp(0.0, (self.points.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.points.len() - 2);
        let f = x - k as f64;
        values[k] + f * (values[k + 1] - values[k])
    }

    /// Indices of grid points inside `[a, b]`.
    fn within(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let start = self.points.partition_point(|&p| p < a);
        let end = self.points.partition_point(|&p| p <= b);
        start..end.max(start)
    }
}

struct HourModel<'a> {
    b: &'a BatteryParams,
    cc: f64,
    cd: f64,
    /// Objective weight on the end-of-hour SoC (terminal credit).
    cs: f64,
}

impl HourModel<'_> {
    /// Best charge/discharge split realising the SoC change `delta`, with its
    /// hour reward. Along a fixed `delta` the reward is linear in the amount
    /// of simultaneous charge and discharge, so only the netted split and the
    /// maximal split need checking.
    fn best_split(&self, delta: f64) -> (f64, f64, f64) {
        let b = self.b;
        let per_hour = delta / b.dt;
        let c_of = |d: f64| ((per_hour + d / b.eta_d) / b.eta_c).clamp(0.0, b.p_max);
        let d_min = if delta >= 0.0 {
            0.0
        } else {
            (-per_hour * b.eta_d).min(b.p_max)
        };
        let d_max = b.p_max.min((b.p_max * b.eta_c - per_hour) * b.eta_d);
        let value = |d: f64| {
            let c = c_of(d);
            (c, d, self.cc * c + self.cd * d)
        };
        let netted = value(d_min);
        if d_max > d_min {
            let waste = value(d_max);
            if waste.2 > netted.2 {
                return waste;
            }
        }
        netted
    }
}

/// Gridded dynamic program over the same objective as the tree LP.
///
/// Backward induction runs over nodes in reverse id order and hours in
/// reverse, with the state of charge on `soc_points` evenly spaced values and
/// candidate moves drawn from `action_points` evenly spaced net-energy values
/// plus every move that lands exactly on a grid point. The objective weights
/// already carry the path probabilities, so a node's continuation value is
/// the plain sum of its children's values, which equals the branch-weighted
/// expectation scaled by the node's own probability.
///
/// The returned objective is that of the greedy policy recovered by a
/// forward pass from `initial_soc`, evaluated exactly. Being a feasible point
/// of the tree LP it never exceeds the LP optimum.
pub fn solve_tree_dp(
    tree: &ScenarioTree,
    battery: &BatteryParams,
    cfg: &OptimizerConfig,
    soc_points: usize,
    action_points: usize,
    initial_soc: f64,
) -> Result<Solution, OptError> {
    if soc_points < 2 || action_points < 2 {
        return Err(OptError::InvalidInput("grids need at least two points".into()));
    }
    let prog = formulate_tree_lp(tree, battery, cfg, initial_soc)?;
    let b = battery;
    let grid = Grid::new(b.soc_min, b.soc_max, soc_points);
    let (d_lo, d_hi) = (-b.p_max * b.dt / b.eta_d, b.eta_c * b.p_max * b.dt);
    let actions: Vec<f64> = (0..action_points)
        .map(|k| d_lo + (d_hi - d_lo) * k as f64 / (action_points - 1) as f64)
        .collect();
    let switch = (b.p_max * b.eta_c - b.p_max / b.eta_d) * b.dt;
    let model = |node: usize, hour: usize| {
        let (cc, cd) = prog.action_costs(node, hour);
        let cs = prog.lp.objective[prog.var(node, hour, VarKind::Soc)];
        HourModel { b, cc, cd, cs }
    };

    // Best move from `s` given the next value function: (c, d, value).
    let choose = |m: &HourModel, next: &[f64], s: f64| -> (f64, f64, f64) {
        let lo = d_lo.max(b.soc_min - s);
        let hi = d_hi.min(b.soc_max - s).max(lo);
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        let mut consider = |delta: f64, v_next: f64| {
            let (c, d, r) = m.best_split(delta);
            let total = r + m.cs * (s + delta) + v_next;
            if total > best.2 {
                best = (c, d, total);
            }
        };
        for g in grid.within(s + lo, s + hi) {
            consider(grid.points[g] - s, next[g]);
        }
        for delta in [lo, hi, 0.0, switch].into_iter().chain(actions.iter().copied()) {
            if delta >= lo && delta <= hi {
                consider(delta, grid.interp(next, s + delta));
            }
        }
        best
    };

    let n = prog.num_nodes();
    let gsize = grid.points.len();
    // start[i][j]: value at the start of hour j of node i, per grid point.
    let mut start: Vec<Vec<Vec<f64>>> = (0..n).map(|i| vec![Vec::new(); prog.hours(i)]).collect();
    let mut end_value: Vec<Vec<f64>> = vec![vec![0.0; gsize]; n];
    for i in (0..n).rev() {
        for c in &tree.nodes()[i].children {
            let child_start = &start[*c][0];
            for (e, v) in end_value[i].iter_mut().zip(child_start) {
                *e += v;
            }
        }
        for j in (0..prog.hours(i)).rev() {
            let m = model(i, j);
            let next = if j + 1 < prog.hours(i) {
                &start[i][j + 1]
            } else {
                &end_value[i]
            };
            let values: Vec<f64> = grid.points.iter().map(|&s| choose(&m, next, s).2).collect();
            start[i][j] = values;
        }
    }

    let mut values = vec![0.0; prog.lp.num_vars()];
    let mut entry_soc = vec![prog.initial_soc; n];
    for i in 0..n {
        let mut s = match prog.parent(i) {
            Some(p) => entry_soc[p],
            None => prog.initial_soc,
        };
        for j in 0..prog.hours(i) {
            let m = model(i, j);
            let next = if j + 1 < prog.hours(i) {
                &start[i][j + 1]
            } else {
                &end_value[i]
            };
            let (c, d, _) = choose(&m, next, s);
            s = (s + b.eta_c * c * b.dt - d * b.dt / b.eta_d).clamp(b.soc_min, b.soc_max);
            values[prog.var(i, j, VarKind::Charge)] = c;
            values[prog.var(i, j, VarKind::Discharge)] = d;
            values[prog.var(i, j, VarKind::Soc)] = s;
        }
        // Children read the SoC at the end of this node.
        entry_soc[i] = s;
    }
    finish(&prog, values)
}

fn finish(prog: &TreeProgram, values: Vec<f64>) -> Result<Solution, OptError> {
    let violation = prog.lp.max_violation(&values);
    if violation > 1e-7 {
        return Err(OptError::SolverFailure(format!(
            "dynamic program produced an infeasible plan ({violation:e})"
        )));
    }
    Ok(Solution {
        status: SolveStatus::Optimal,
        objective: prog.lp.objective_value(&values),
        values,
    })
}
