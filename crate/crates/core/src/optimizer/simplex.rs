//! Dense-tableau bounded-variable primal simplex.
//!
//! Rows are brought to equality form with one bounded slack per inequality.
//! Phase I starts from an all-artificial basis and minimises the total
//! artificial value; phase II fixes the artificials at zero and maximises the
//! true objective. Pricing is Dantzig's rule (ties to the lowest index) and
//! falls back to Bland's rule during runs of degenerate pivots, so the
//! sequence of pivots is a pure function of the input.

use super::lp::{ConstraintKind, LinearProgram};
use super::{OptError, Solution, SolveStatus};

/// Entries of the entering column smaller than this are treated as zero.
const PIVOT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 50;
/// Pivots between recomputations of the basic values.
const REFRESH_EVERY: usize = 100;
/// Pivots on elements smaller than this count as numerically weak.
const WEAK_PIVOT: f64 = 1e-7;
const MAX_WEAK_PIVOTS: usize = 1000;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Place {
    Basic(usize),
    Lower,
    Upper,
    /// Free variable resting at zero.
    Zero,
}

struct Tableau {
    m: usize,
    /// Total columns: structural, slacks, artificials.
    ncols: usize,
    n_struct: usize,
    art_start: usize,
    /// Row-major `m × ncols`, holds `B⁻¹A`.
    t: Vec<f64>,
    /// Original constraint matrix, dense, for recomputing basic values.
    a: Vec<f64>,
    b: Vec<f64>,
    art_sign: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Reduced costs of the current phase.
    d: Vec<f64>,
    x: Vec<f64>,
    place: Vec<Place>,
    basis: Vec<usize>,
    tol: f64,
    pivots: usize,
    weak: usize,
}

enum StepOutcome {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn build(lp: &LinearProgram, tol: f64) -> Self {
        let m = lp.num_constraints();
        let n = lp.num_vars();
        let n_slack = lp.constraints.iter().filter(|r| r.kind != ConstraintKind::Eq).count();
        let art_start = n + n_slack;
        let ncols = art_start + m;
        let mut a = vec![0.0; m * ncols];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut slack = n;
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                a[i * ncols + j] += v;
            }
            match row.kind {
                ConstraintKind::Eq => {}
                ConstraintKind::Le => {
                    a[i * ncols + slack] = 1.0;
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                    slack += 1;
                }
                ConstraintKind::Ge => {
                    a[i * ncols + slack] = 1.0;
                    lower.push(f64::NEG_INFINITY);
                    upper.push(0.0);
                    slack += 1;
                }
            }
        }
        let mut x = vec![0.0; ncols];
        let mut place = vec![Place::Lower; ncols];
        for j in 0..art_start {
            (x[j], place[j]) = if lower[j].is_finite() {
                (lower[j], Place::Lower)
            } else if upper[j].is_finite() {
                (upper[j], Place::Upper)
            } else {
                (0.0, Place::Zero)
            };
        }
        let b: Vec<f64> = lp.constraints.iter().map(|r| r.rhs).collect();
        let mut art_sign = vec![1.0; m];
        let mut t = a.clone();
        for i in 0..m {
            let resid = b[i] - (0..art_start).map(|j| a[i * ncols + j] * x[j]).sum::<f64>();
            let s = if resid >= 0.0 { 1.0 } else { -1.0 };
            art_sign[i] = s;
            a[i * ncols + art_start + i] = s;
            // B = diag(s), so B⁻¹A scales row i by s.
            for v in &mut t[i * ncols..(i + 1) * ncols] {
                *v *= s;
            }
            t[i * ncols + art_start + i] = 1.0;
            x[art_start + i] = resid.abs();
            place[art_start + i] = Place::Basic(i);
            lower.push(0.0);
            upper.push(f64::INFINITY);
        }
        let mut cost = lp.objective.clone();
        cost.resize(ncols, 0.0);
        Self {
            m,
            ncols,
            n_struct: n,
            art_start,
            t,
            a,
            b,
            art_sign,
            lower,
            upper,
            cost,
            d: vec![0.0; ncols],
            x,
            place,
            basis: (art_start..ncols).collect(),
            tol,
            pivots: 0,
            weak: 0,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.ncols..(i + 1) * self.ncols]
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for objective `c`.
    fn price(&mut self, c: &[f64]) {
        let mut d = c.to_vec();
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for (dj, &tij) in d.iter_mut().zip(self.row(i)) {
                    *dj -= cb * tij;
                }
            }
        }
        for &j in &self.basis {
            d[j] = 0.0;
        }
        self.d = d;
    }

    /// Recomputes basic values as `B⁻¹(b − N x_N)`, reading `B⁻¹` from the
    /// artificial columns of the tableau.
    fn refresh_basic_values(&mut self) {
        let mut r = self.b.clone();
        for j in 0..self.ncols {
            if matches!(self.place[j], Place::Basic(_)) || self.x[j] == 0.0 {
                continue;
            }
            for (i, ri) in r.iter_mut().enumerate() {
                *ri -= self.a[i * self.ncols + j] * self.x[j];
            }
        }
        for i in 0..self.m {
            let row = self.row(i);
            let v: f64 = (0..self.m)
                .map(|k| row[self.art_start + k] * self.art_sign[k] * r[k])
                .sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            let dir = match self.place[j] {
                Place::Basic(_) => continue,
                _ if self.lower[j] == self.upper[j] => continue,
                Place::Lower if self.d[j] > self.tol => 1.0,
                Place::Upper if self.d[j] < -self.tol => -1.0,
                Place::Zero if self.d[j].abs() > self.tol => self.d[j].signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = self.d[j].abs();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self, bland: bool) -> Result<(StepOutcome, bool), OptError> {
        let Some((q, dir)) = self.entering(bland) else {
            return Ok((StepOutcome::Optimal, false));
        };
        // Ratio test: the entering variable moves by `dir·θ`.
        let mut theta = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.ncols + q];
            let bv = self.basis[i];
            let limit = if alpha > PIVOT_TOL && self.lower[bv].is_finite() {
                (self.x[bv] - self.lower[bv]).max(0.0) / alpha
            } else if alpha < -PIVOT_TOL && self.upper[bv].is_finite() {
                (self.upper[bv] - self.x[bv]).max(0.0) / -alpha
            } else {
                continue;
            };
            let better = match leave {
                None => limit < theta,
                Some((r, _)) => limit < theta || (limit == theta && bv < self.basis[r]),
            };
            if better {
                theta = limit;
                leave = Some((i, alpha));
            }
        }
        if theta.is_infinite() {
            return Ok((StepOutcome::Unbounded, false));
        }
        let degenerate = theta <= self.tol;
        for i in 0..self.m {
            let tiq = self.t[i * self.ncols + q];
            if tiq != 0.0 {
                self.x[self.basis[i]] -= dir * theta * tiq;
            }
        }
        self.x[q] += dir * theta;
        let Some((r, alpha)) = leave else {
            // Bound flip: the entering variable crosses to its other bound.
            self.place[q] = if dir > 0.0 { Place::Upper } else { Place::Lower };
            self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            return Ok((StepOutcome::Moved, degenerate));
        };
        let out = self.basis[r];
        if alpha > 0.0 {
            self.place[out] = Place::Lower;
            self.x[out] = self.lower[out];
        } else {
            self.place[out] = Place::Upper;
            self.x[out] = self.upper[out];
        }
        self.pivot(r, q)?;
        Ok((StepOutcome::Moved, degenerate))
    }

    fn pivot(&mut self, r: usize, q: usize) -> Result<(), OptError> {
        let nc = self.ncols;
        let p = self.t[r * nc + q];
        if p.abs() < WEAK_PIVOT {
            self.weak += 1;
            if self.weak > MAX_WEAK_PIVOTS {
                return Err(OptError::SolverFailure("repeated pivots on near-zero elements".into()));
            }
        }
        for v in &mut self.t[r * nc..(r + 1) * nc] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + q];
            if f != 0.0 {
                for (v, &pr) in self.t[i * nc..(i + 1) * nc].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * nc + q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.d[q] = 0.0;
        self.basis[r] = q;
        self.place[q] = Place::Basic(r);
        self.pivots += 1;
        if self.pivots.is_multiple_of(REFRESH_EVERY) {
            self.refresh_basic_values();
        }
        Ok(())
    }

    fn run(&mut self, max_iters: usize) -> Result<StepOutcome, OptError> {
        let mut degenerate_run = 0usize;
        for _ in 0..max_iters {
            let (outcome, degenerate) = self.step(degenerate_run >= BLAND_AFTER)?;
            match outcome {
                StepOutcome::Moved => {
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                }
                done => return Ok(done),
            }
        }
        Err(OptError::SolverFailure(format!(
            "no convergence within {max_iters} iterations"
        )))
    }
}

/// Solves `lp` (a maximisation) to optimality, or reports infeasibility or
/// unboundedness. `tol` is the optimality and feasibility tolerance.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<Solution, OptError> {
    let n = lp.num_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(OptError::InvalidInput(
            "bound vectors do not match variable count".into(),
        ));
    }
    if lp.objective.iter().any(|c| !c.is_finite()) || lp.lower.iter().chain(&lp.upper).any(|v| v.is_nan()) {
        return Err(OptError::InvalidInput(
            "objective and bounds must not be NaN or infinite costs".into(),
        ));
    }
    for row in &lp.constraints {
        if !row.rhs.is_finite() || row.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err(OptError::InvalidInput(
                "constraint references an unknown variable or is not finite".into(),
            ));
        }
    }
    if (0..n).any(|j| lp.lower[j] > lp.upper[j] || lp.lower[j] == f64::INFINITY || lp.upper[j] == f64::NEG_INFINITY) {
        return Ok(Solution::without_point(SolveStatus::Infeasible));
    }

    let mut tab = Tableau::build(lp, tol);
    let max_iters = 50_000 + 50 * (tab.m + tab.ncols);
    let scale = 1.0 + lp.constraints.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);

    // Phase I: maximise minus the sum of artificials.
    let mut phase1 = vec![0.0; tab.ncols];
    phase1[tab.art_start..].iter_mut().for_each(|c| *c = -1.0);
    tab.price(&phase1);
    tab.run(max_iters)?;
    tab.refresh_basic_values();
    let infeasibility: f64 = (tab.art_start..tab.ncols).map(|j| tab.x[j].abs()).sum();
    if infeasibility > 1e-7 * scale {
        return Ok(Solution::without_point(SolveStatus::Infeasible));
    }

    // Phase II: artificials are pinned at zero.
    for j in tab.art_start..tab.ncols {
        tab.lower[j] = 0.0;
        tab.upper[j] = 0.0;
        if !matches!(tab.place[j], Place::Basic(_)) {
            tab.x[j] = 0.0;
        }
    }
    let cost = tab.cost.clone();
    tab.price(&cost);
    if let StepOutcome::Unbounded = tab.run(max_iters)? {
        return Ok(Solution::without_point(SolveStatus::Unbounded));
    }
    tab.refresh_basic_values();

    let mut values: Vec<f64> = tab.x[..tab.n_struct].to_vec();
    for (j, v) in values.iter_mut().enumerate() {
        // Snap round-off onto the bounds.
        *v = v.clamp(lp.lower[j], lp.upper[j]);
    }
    let violation = lp.max_violation(&values);
    if violation > 1e-6 * scale {
        return Err(OptError::SolverFailure(format!(
            "solution violates constraints by {violation:e}"
        )));
    }
    Ok(Solution {
        status: SolveStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::lp::ConstraintKind::*;

    #[test]
    fn two_variable_box() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, f64::INFINITY, 2.0);
        let y = lp.add_variable("y", 0.0, f64::INFINITY, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Le, 1.0);
        lp.add_constraint(vec![(y, 1.0)], Le, 1.0);
        let s = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert_eq!(s.values, vec![1.0, 1.0]);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", 2.0, 1.0, 1.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, 10.0, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Ge, 3.0);
        lp.add_constraint(vec![(x, 1.0)], Le, 2.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_variable("y", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Eq, 0.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_and_negative_variables() {
        // max -|y - 3| style: max -t with t >= y - 3, t >= 3 - y, y free, y <= 5.
        let mut lp = LinearProgram::new();
        let y = lp.add_variable("y", f64::NEG_INFINITY, 5.0, 0.0);
        let t = lp.add_variable("t", f64::NEG_INFINITY, f64::INFINITY, -1.0);
        lp.add_constraint(vec![(t, 1.0), (y, -1.0)], Ge, -3.0);
        lp.add_constraint(vec![(t, 1.0), (y, 1.0)], Ge, 3.0);
        let s = solve_lp(&lp, 1e-9).unwrap();
        assert!(s.objective.abs() < 1e-9, "{s:?}");
        assert!((s.values[y] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let mut lp = LinearProgram::new();
        let v: Vec<usize> = (0..6)
            .map(|j| lp.add_variable(format!("x{j}"), 0.0, 1.0, 1.0))
            .collect();
        lp.add_constraint(v.iter().map(|&j| (j, 1.0)).collect(), Le, 2.5);
        let a = solve_lp(&lp, 1e-9).unwrap();
        let b = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(a, b);
        assert!((a.objective - 2.5).abs() < 1e-12);
    }
}
