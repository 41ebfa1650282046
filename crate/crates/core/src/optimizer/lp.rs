use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Le,
    Ge,
    Eq,
}

/// Sparse row `Σ coeffs · x (kind) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: ConstraintKind,
    pub rhs: f64,
}

/// `maximize objective·x` subject to linear rows and variable bounds.
/// Bounds may be infinite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, kind: ConstraintKind, rhs: f64) {
        self.constraints.push(Constraint { coeffs, kind, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = lhs - row.rhs;
            worst = worst.max(match row.kind {
                ConstraintKind::Le => gap,
                ConstraintKind::Ge => -gap,
                ConstraintKind::Eq => gap.abs(),
            });
        }
        worst
    }

    /// CPLEX-style LP text for cross-checking with external solvers.
    pub fn to_lp_text(&self) -> String {
        fn term(out: &mut String, first: &mut bool, a: f64, name: &str) {
            if a == 0.0 {
                return;
            }
            let sign = if a < 0.0 {
                "- "
            } else if *first {
                ""
            } else {
                "+ "
            };
            let mag = a.abs();
            if mag == 1.0 {
                let _ = write!(out, " {sign}{name}");
            } else {
                let _ = write!(out, " {sign}{mag} {name}");
            }
            *first = false;
        }
        fn bound(v: f64) -> String {
            if v == f64::INFINITY {
                "+inf".into()
            } else if v == f64::NEG_INFINITY {
                "-inf".into()
            } else {
                format!("{v}")
            }
        }
        let mut out = String::from("Maximize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            term(&mut out, &mut first, c, &self.names[j]);
        }
        if first {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.constraints.iter().enumerate() {
            let _ = write!(out, " r{i}:");
            let mut first = true;
            for &(j, a) in &row.coeffs {
                term(&mut out, &mut first, a, &self.names[j]);
            }
            if first {
                out.push_str(" 0");
            }
            let op = match row.kind {
                ConstraintKind::Le => "<=",
                ConstraintKind::Ge => ">=",
                ConstraintKind::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_infinite() && u.is_infinite() {
                let _ = writeln!(out, " {} free", self.names[j]);
            } else {
                let _ = writeln!(out, " {} <= {} <= {}", bound(l), self.names[j], bound(u));
            }
        }
        out.push_str("End\n");
        out
    }
}
