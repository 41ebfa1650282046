use std::collections::BTreeMap;

use super::tree_lp::{TreeProgram, VarKind};
use super::{OptError, Solution};
use crate::environment::HourlyAction;

/// Hourly actions for every node of a solved tree program.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub actions: BTreeMap<usize, Vec<HourlyAction>>,
    root: usize,
}

impl Policy {
    /// Actions of the root node, the ones applied before re-planning.
    pub fn first_stage(&self) -> &[HourlyAction] {
        &self.actions[&self.root]
    }
}

/// Reads the per-node action plan out of an optimal solution.
///
/// Hours with simultaneous charge and discharge are replaced by the single
/// action with the same SoC change, unless that would lower the hour's
/// objective (possible at prices below minus the degradation cost).
pub fn extract_policy(prog: &TreeProgram, sol: &Solution) -> Result<Policy, OptError> {
    if !sol.is_optimal() {
        return Err(OptError::InvalidInput(format!(
            "cannot extract a policy from a {:?} solution",
            sol.status
        )));
    }
    if sol.values.len() != prog.lp.num_vars() {
        return Err(OptError::InvalidInput(
            "solution does not match the program layout".into(),
        ));
    }
    let b = &prog.battery;
    let tol = 1e-12;
    let tidy = |v: f64| if v.abs() <= tol { 0.0 } else { v.clamp(0.0, b.p_max) };
    let mut actions = BTreeMap::new();
    for node in 0..prog.num_nodes() {
        let plan = (0..prog.hours(node))
            .map(|j| {
                let c = tidy(sol.values[prog.var(node, j, VarKind::Charge)]);
                let d = tidy(sol.values[prog.var(node, j, VarKind::Discharge)]);
                if c == 0.0 || d == 0.0 {
                    return HourlyAction::new(c, d);
                }
                let delta = b.eta_c * c - d / b.eta_d;
                let netted = if delta >= 0.0 {
                    HourlyAction::new((delta / b.eta_c).min(b.p_max), 0.0)
                } else {
                    HourlyAction::new(0.0, (-delta * b.eta_d).min(b.p_max))
                };
                let (cc, cd) = prog.action_costs(node, j);
                if cc * netted.p_c + cd * netted.p_d >= cc * c + cd * d {
                    netted
                } else {
                    HourlyAction::new(c, d)
                }
            })
            .collect();
        actions.insert(node, plan);
    }
    Ok(Policy { actions, root: 0 })
}
