//! Instance generators and brute-force oracles shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenario_mpc::optimizer::{ConstraintKind, LinearProgram};
use scenario_mpc::samplers::{
    BootstrapSampler, CyclicRegimeParams, CyclicRegimeSampler, GaussianArParams, GaussianArSampler,
    RegimeMixtureParams, RegimeMixtureSampler,
};
use scenario_mpc::{BatteryParams, Matrix, ScenarioNode, ScenarioTree, TrajectorySampler, TreeConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random battery with `soc_init` inside its bounds.
pub fn random_battery(rng: &mut ChaCha8Rng) -> BatteryParams {
    let capacity = rng.random_range(0.5..3.0);
    let soc_min = capacity * rng.random_range(0.0..0.3);
    let soc_max = capacity * rng.random_range(0.7..1.0);
    BatteryParams {
        capacity,
        soc_min,
        soc_max,
        p_max: rng.random_range(0.2..1.5),
        eta_c: rng.random_range(0.8..1.0),
        eta_d: rng.random_range(0.8..1.0),
        c_deg: rng.random_range(0.0..3.0),
        dt: 1.0,
        soc_init: rng.random_range(soc_min..=soc_max),
    }
}

/// Random tree of depth at most 2 with one or two children per node (at
/// most 7 nodes) and `h` price rows per node.
pub fn random_tree(rng: &mut ChaCha8Rng, h: usize) -> ScenarioTree {
    let depth = rng.random_range(0..=2usize);
    let mut nodes = vec![ScenarioNode {
        id: 0,
        parent_id: None,
        stage: 0,
        forecast: random_prices(rng, h),
        branch_prob: 1.0,
        path_prob: 1.0,
        children: vec![],
    }];
    let mut frontier = vec![0usize];
    for stage in 1..=depth {
        let mut next = Vec::new();
        for parent in frontier {
            let k = rng.random_range(1..=2usize);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for w in raw {
                let id = nodes.len();
                let p = if k == 1 { 1.0 } else { w / total };
                nodes.push(ScenarioNode {
                    id,
                    parent_id: Some(parent),
                    stage,
                    forecast: random_prices(rng, h),
                    branch_prob: p,
                    path_prob: nodes[parent].path_prob * p,
                    children: vec![],
                });
                nodes[parent].children.push(id);
                next.push(id);
            }
            // Make branch probabilities sum to one exactly.
            let kids = nodes[parent].children.clone();
            if kids.len() == 2 {
                let b0 = nodes[kids[0]].branch_prob;
                nodes[kids[1]].branch_prob = 1.0 - b0;
                nodes[kids[1]].path_prob = nodes[parent].path_prob * (1.0 - b0);
            }
        }
        frontier = next;
    }
    let config = TreeConfig {
        depth,
        stage_horizon: h,
        ..TreeConfig::default()
    };
    ScenarioTree::from_nodes(config, nodes).expect("generated tree is valid")
}

pub fn random_prices(rng: &mut ChaCha8Rng, h: usize) -> Matrix {
    Matrix::column(&(0..h).map(|_| rng.random_range(-10.0..100.0)).collect::<Vec<_>>())
}

/// Random bounded feasible LP with `n` variables in a box and `m` rows.
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    for (j, &x) in x0.iter().enumerate() {
        let lo = x - rng.random_range(0.0..2.0);
        let hi = x + rng.random_range(0.0..2.0);
        lp.add_variable(format!("x{j}"), lo, hi, rng.random_range(-5.0..5.0));
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-3.0..3.0))).collect();
        let at: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let slack = rng.random_range(0.0..1.0);
        match rng.random_range(0..3) {
            0 => lp.add_constraint(coeffs, ConstraintKind::Le, at + slack),
            1 => lp.add_constraint(coeffs, ConstraintKind::Ge, at - slack),
            _ => lp.add_constraint(coeffs, ConstraintKind::Eq, at),
        }
    }
    lp
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Maximum of a bounded LP by enumerating every vertex: each choice of `n`
/// active hyperplanes among rows and variable bounds.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &lp.constraints {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        planes.push((a, row.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::new();
    choose(&planes, n, 0, &mut pick, &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if lp.max_violation(&x) <= 1e-9 {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    });
    best
}

fn choose(planes: &[(Vec<f64>, f64)], k: usize, from: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in from..planes.len() {
        pick.push(i);
        choose(planes, k, i + 1, pick, f);
        pick.pop();
    }
}

/// One-sided sign test: `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut log_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    (wins..=n)
        .map(|k| (log_fact[n] - log_fact[k] - log_fact[n - k] - n as f64 * 2f64.ln()).exp())
        .sum()
}

/// A random sampler of dimension `d` together with a history it accepts.
pub fn random_sampler(rng: &mut ChaCha8Rng, d: usize, h: usize) -> (Box<dyn TrajectorySampler>, Matrix) {
    let history = Matrix::from_vec(8, d, (0..8 * d).map(|_| rng.random_range(20.0..60.0)).collect());
    let sampler: Box<dyn TrajectorySampler> = match rng.random_range(0..4) {
        0 => {
            let a: Vec<f64> = (0..d * d)
                .map(|i| {
                    if i % (d + 1) == 0 {
                        rng.random_range(-0.8..0.8)
                    } else {
                        0.05
                    }
                })
                .collect();
            let params = GaussianArParams::new(
                Matrix::from_vec(d, d, a),
                (0..d).map(|_| rng.random_range(10.0..40.0)).collect(),
                (0..d).map(|_| rng.random_range(0.5..5.0)).collect(),
            )
            .unwrap();
            Box::new(GaussianArSampler::new(params).unwrap())
        }
        1 => {
            let w = rng.random_range(0.2..0.8);
            let params = RegimeMixtureParams {
                weights: vec![w, 1.0 - w],
                drifts: (0..2)
                    .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
                    .collect(),
                noise_scale: rng.random_range(0.1..3.0),
            };
            Box::new(RegimeMixtureSampler::new(params).unwrap())
        }
        2 => {
            let len = h * rng.random_range(1..=3usize);
            let profile = |rng: &mut ChaCha8Rng| {
                Matrix::from_vec(len, d, (0..len * d).map(|_| rng.random_range(0.0..80.0)).collect())
            };
            let w = rng.random_range(0.2..0.8);
            let params = CyclicRegimeParams {
                weights: vec![w, 1.0 - w],
                profiles: vec![profile(rng), profile(rng)],
                noise_scale: rng.random_range(0.0..4.0),
                origin: 0,
            };
            Box::new(CyclicRegimeSampler::new(params).unwrap())
        }
        _ => {
            let rows = h * 12;
            let series = Matrix::from_vec(rows, d, (0..rows * d).map(|_| rng.random_range(0.0..80.0)).collect());
            Box::new(BootstrapSampler::from_series(&series, h).unwrap())
        }
    };
    (sampler, history)
}
