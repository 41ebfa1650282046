use rand::Rng;

use super::TreeError;
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

const MAX_ITERS: usize = 100;
const SHIFT_TOL: f64 = 1e-6;

/// Outcome of clustering M points into `k_eff` groups.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    /// `k_eff × (H·D)` centroids; row `j` is the mean of points labelled `j`.
    pub centroids: Matrix,
    pub sizes: Vec<usize>,
    pub k_eff: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of distinct rows, comparing bit patterns with `-0.0 == 0.0`.
fn distinct_rows(points: &Matrix) -> usize {
    let mut idx: Vec<usize> = (0..points.rows()).collect();
    let cmp = |a: &usize, b: &usize| {
        points
            .row(*a)
            .iter()
            .zip(points.row(*b))
            .map(|(x, y)| (x + 0.0).total_cmp(&(y + 0.0)))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    idx.sort_by(cmp);
    1 + idx.windows(2).filter(|w| cmp(&w[0], &w[1]).is_ne()).count()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn init_plus_plus(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            acc += w;
            if w > 0.0 && acc > target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave the target above the final partial sum.
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("fewer distinct points than k"));
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    let dim = points.cols();
    let mut data = Vec::with_capacity(k * dim);
    for &i in &chosen {
        data.extend_from_slice(points.row(i));
    }
    Matrix::from_vec(k, dim, data)
}

fn means(points: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let dim = points.cols();
    let mut out = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let n = counts[l] as f64;
        let row = out.row_mut(l);
        if counts[l] == 1 {
            row.copy_from_slice(points.row(i));
        } else {
            for (m, &x) in row.iter_mut().zip(points.row(i)) {
                *m += (x - *m) / n;
            }
        }
    }
    out
}

/// Moves the point farthest from its centroid into each empty cluster, taking
/// only from clusters that keep at least one member.
fn reseed_empty(points: &Matrix, labels: &mut [usize], centroids: &Matrix, k: usize) {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] > 1 {
                let d = sq_dist(points.row(i), centroids.row(l));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        if let Some(i) = far {
            sizes[labels[i]] -= 1;
            labels[i] = j;
            sizes[j] = 1;
        }
    }
}

/// Within-cluster sum of squared distances.
pub fn within_cluster_ss(points: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)))
        .sum()
}

/// K-means clustering of the rows of `points`.
///
/// Seeded k-means++ initialisation followed by Lloyd iterations (at most 100,
/// stopping once no centroid moves by 1e-6 or more). With fewer than `k`
/// distinct rows the number of clusters drops to the distinct count.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusterResult, TreeError> {
    kmeans_with_trace(points, k, seed).map(|(r, _)| r)
}

/// [`kmeans`] plus the within-cluster sum of squares after every iteration.
pub fn kmeans_with_trace(points: &Matrix, k: usize, seed: u64) -> Result<(ClusterResult, Vec<f64>), TreeError> {
    if points.rows() == 0 {
        return Err(TreeError::InvalidInput("kmeans needs at least one point".into()));
    }
    if k == 0 {
        return Err(TreeError::InvalidInput("kmeans needs k >= 1".into()));
    }
    if !points.is_finite() {
        return Err(TreeError::InvalidInput(
            "kmeans input contains non-finite values".into(),
        ));
    }
    let n = points.rows();
    let k_eff = k.min(distinct_rows(points));
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let centroids = if k_eff == 1 {
        let c = means(points, &labels, 1);
        trace.push(within_cluster_ss(points, &labels, &c));
        c
    } else {
        let mut centroids = init_plus_plus(points, k_eff, seed);
        for _ in 0..MAX_ITERS {
            for (i, l) in labels.iter_mut().enumerate() {
                *l = nearest(points.row(i), &centroids).0;
            }
            reseed_empty(points, &mut labels, &centroids, k_eff);
            let next = means(points, &labels, k_eff);
            let shift = (0..k_eff)
                .map(|j| sq_dist(next.row(j), centroids.row(j)).sqrt())
                .fold(0.0, f64::max);
            centroids = next;
            trace.push(within_cluster_ss(points, &labels, &centroids));
            if shift < SHIFT_TOL {
                break;
            }
        }
        centroids
    };
    let mut sizes = vec![0usize; k_eff];
    labels.iter().for_each(|&l| sizes[l] += 1);
    Ok((
        ClusterResult {
            labels,
            centroids,
            sizes,
            k_eff,
        },
        trace,
    ))
}
