use rayon::prelude::*;

use super::kmeans::kmeans;
use super::{ScenarioNode, ScenarioTree, TreeConfig, TreeError};
use crate::matrix::Matrix;
use crate::rng::mix_seed;
use crate::samplers::{SamplerError, SamplerRequest, TrajectorySampler};

/// Stream tag separating the clustering seed from the sampling seed of a node.
const KMEANS_STREAM: u64 = 0x6b6d_6561_6e73;

/// Keeps the `keep` most probable children and rescales them to sum to one.
///
/// Ties in probability go to the lower id. The result is ordered by
/// descending probability.
pub fn prune_and_renormalize(children: &[(usize, f64)], keep: usize) -> Result<Vec<(usize, f64)>, TreeError> {
    if keep == 0 {
        return Err(TreeError::InvalidInput("keep must be at least 1".into()));
    }
    if children.is_empty() {
        return Err(TreeError::InvalidInput("no children to prune".into()));
    }
    if let Some(&(id, p)) = children.iter().find(|(_, p)| !(*p > 0.0 && p.is_finite())) {
        return Err(TreeError::InvalidInput(format!("child {id} has probability {p}")));
    }
    let mut sorted = children.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.truncate(keep);
    let total: f64 = sorted.iter().map(|(_, p)| p).sum();
    Ok(sorted.into_iter().map(|(id, p)| (id, p / total)).collect())
}

/// Builds a scenario tree on the global rayon pool.
pub fn build_tree<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    history: &Matrix,
    config: &TreeConfig,
) -> Result<ScenarioTree, TreeError> {
    build_tree_with_workers(sampler, history, config, 0)
}

/// Builds a scenario tree expanding each stage on `workers` threads
/// (0 selects the global pool, 1 runs inline).
///
/// Every node samples with its own seed derived from the master seed and its
/// id, so the result does not depend on the worker count.
pub fn build_tree_with_workers<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    history: &Matrix,
    config: &TreeConfig,
    workers: usize,
) -> Result<ScenarioTree, TreeError> {
    config.validate()?;
    check_history(sampler, history, config)?;
    match workers {
        0 => build(sampler, history, config, true),
        1 => build(sampler, history, config, false),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| TreeError::InvalidInput(format!("cannot start worker pool: {e}")))?
            .install(|| build(sampler, history, config, true)),
    }
}

fn check_history<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    history: &Matrix,
    config: &TreeConfig,
) -> Result<(), TreeError> {
    let need = sampler.min_context().max(1);
    if history.rows() < need {
        return Err(TreeError::InvalidInput(format!(
            "history has {} rows, sampler {} needs at least {need}",
            history.rows(),
            sampler.name()
        )));
    }
    if history.cols() != config.series_dim || sampler.dim() != config.series_dim {
        return Err(TreeError::InvalidInput(format!(
            "series dimension mismatch: history {}, sampler {}, config {}",
            history.cols(),
            sampler.dim(),
            config.series_dim
        )));
    }
    if !history.is_finite() {
        return Err(TreeError::InvalidInput("history contains non-finite values".into()));
    }
    Ok(())
}

struct Pending {
    history: Matrix,
}

type Expansion = Vec<(Matrix, f64)>;

fn expand<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    config: &TreeConfig,
    id: usize,
    path_prob: f64,
    history: &Matrix,
) -> Result<Expansion, TreeError> {
    let (m, h, d) = (config.samples_per_node, config.stage_horizon, config.series_dim);
    let seed = mix_seed(config.master_seed, id as u64);
    let tag = |source: SamplerError| TreeError::Sampler { node: id, source };
    let batch = sampler
        .sample(&SamplerRequest::new(history.clone(), m, h, seed))
        .map_err(tag)?;
    batch.check(m, h, d).map_err(tag)?;
    let clusters = kmeans(&batch.to_points(), config.clusters, mix_seed(seed, KMEANS_STREAM))?;
    let candidates: Vec<(usize, f64)> = clusters
        .sizes
        .iter()
        .enumerate()
        .map(|(j, &size)| (j, path_prob * (size as f64 / m as f64)))
        .collect();
    let kept = prune_and_renormalize(&candidates, config.keep_children)?;
    Ok(kept
        .into_iter()
        .map(|(j, p)| (Matrix::from_vec(h, d, clusters.centroids.row(j).to_vec()), p))
        .collect())
}

fn build<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    history: &Matrix,
    config: &TreeConfig,
    parallel: bool,
) -> Result<ScenarioTree, TreeError> {
    let root = ScenarioNode {
        id: 0,
        parent_id: None,
        stage: 0,
        forecast: history.tail(config.stage_horizon),
        branch_prob: 1.0,
        path_prob: 1.0,
        children: Vec::new(),
    };
    let mut nodes = vec![root];
    let mut pending = vec![Pending {
        history: history.clone(),
    }];
    let mut frontier = vec![0usize];
    for stage in 0..config.depth {
        let jobs: Vec<(usize, f64, &Matrix)> = frontier
            .iter()
            .map(|&id| (id, nodes[id].path_prob, &pending[id].history))
            .collect();
        let run = |&(id, p, hist): &(usize, f64, &Matrix)| expand(sampler, config, id, p, hist);
        let results: Vec<Result<Expansion, TreeError>> = if parallel {
            jobs.par_iter().map(run).collect()
        } else {
            jobs.iter().map(run).collect()
        };
        let mut next = Vec::new();
        let mut new_pending = Vec::new();
        for (&parent, result) in frontier.iter().zip(results) {
            for (forecast, branch_prob) in result? {
                let id = nodes.len();
                let child_history = pending[parent].history.vstack(&forecast);
                nodes[parent].children.push(id);
                nodes.push(ScenarioNode {
                    id,
                    parent_id: Some(parent),
                    stage: stage + 1,
                    forecast,
                    branch_prob,
                    path_prob: nodes[parent].path_prob * branch_prob,
                    children: Vec::new(),
                });
                new_pending.push((id, child_history));
                next.push(id);
            }
        }
        // Only the newest stage's histories are needed going forward.
        for p in pending.iter_mut() {
            p.history = Matrix::default();
        }
        pending.resize_with(nodes.len(), || Pending {
            history: Matrix::default(),
        });
        for (id, hist) in new_pending {
            pending[id].history = hist;
        }
        frontier = next;
    }
    let tree = ScenarioTree::from_parts_unchecked(config.clone(), nodes);
    tree.validate()?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{GaussianArParams, GaussianArSampler, RegimeMixtureParams, RegimeMixtureSampler};
    use crate::scenario_tree::stage_probabilities;

    #[test]
    fn prune_examples() {
        let out = prune_and_renormalize(&[(0, 0.5), (1, 0.3), (2, 0.2)], 2).unwrap();
        assert_eq!(out.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
        assert!((out[0].1 - 0.625).abs() < 1e-15 && (out[1].1 - 0.375).abs() < 1e-15);

        let out = prune_and_renormalize(&[(0, 0.6), (1, 0.4)], 5).unwrap();
        assert_eq!(out, vec![(0, 0.6), (1, 0.4)]);

        let out = prune_and_renormalize(&[(9, 0.3), (8, 0.3), (7, 0.4)], 2).unwrap();
        assert_eq!(out.iter().map(|x| x.0).collect::<Vec<_>>(), vec![7, 8]);
        assert!((out[0].1 - 4.0 / 7.0).abs() < 1e-15 && (out[1].1 - 3.0 / 7.0).abs() < 1e-15);

        assert!(prune_and_renormalize(&[(0, 1.0)], 0).is_err());
        assert!(prune_and_renormalize(&[], 1).is_err());
    }

    fn constant_sampler() -> GaussianArSampler {
        GaussianArSampler::new(GaussianArParams::univariate(0.0, 42.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_variance_sampler_gives_chain() {
        let cfg = TreeConfig {
            depth: 2,
            stage_horizon: 4,
            samples_per_node: 16,
            clusters: 3,
            keep_children: 2,
            ..TreeConfig::default()
        };
        let t = build_tree(&constant_sampler(), &Matrix::column(&[1.0, 2.0]), &cfg).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.nodes().iter().all(|n| n.branch_prob == 1.0));
        assert_eq!(t.node(2).unwrap().forecast, Matrix::column(&[42.0; 4]));
        // Root carries the observed block, shorter than H here.
        assert_eq!(t.root().forecast, Matrix::column(&[1.0, 2.0]));
    }

    #[test]
    fn full_width_tree_has_seven_nodes() {
        let sampler = GaussianArSampler::new(GaussianArParams::univariate(0.5, 20.0, 5.0).unwrap()).unwrap();
        let cfg = TreeConfig {
            depth: 2,
            stage_horizon: 3,
            samples_per_node: 50,
            clusters: 3,
            keep_children: 2,
            ..TreeConfig::default()
        };
        let t = build_tree(&sampler, &Matrix::column(&[40.0]), &cfg).unwrap();
        assert_eq!(t.len(), 7);
        let s2: f64 = stage_probabilities(&t, 2).unwrap().values().sum();
        assert!((s2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn worker_count_does_not_change_tree() {
        let sampler = GaussianArSampler::new(GaussianArParams::univariate(0.8, 10.0, 3.0).unwrap()).unwrap();
        let cfg = TreeConfig {
            depth: 3,
            stage_horizon: 4,
            samples_per_node: 40,
            clusters: 4,
            keep_children: 3,
            master_seed: 11,
            ..TreeConfig::default()
        };
        let h = Matrix::column(&[50.0, 48.0]);
        let one = build_tree_with_workers(&sampler, &h, &cfg, 1).unwrap();
        let four = build_tree_with_workers(&sampler, &h, &cfg, 4).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn sampler_errors_carry_node_id() {
        let sampler = RegimeMixtureSampler::new(RegimeMixtureParams {
            weights: vec![1.0],
            drifts: vec![vec![0.0, 0.0]],
            noise_scale: 0.0,
        })
        .unwrap();
        let cfg = TreeConfig::default();
        // Dimension mismatch is caught before sampling.
        assert!(matches!(
            build_tree(&sampler, &Matrix::column(&[1.0]), &cfg),
            Err(TreeError::InvalidInput(_))
        ));
        struct Failing;
        impl TrajectorySampler for Failing {
            fn name(&self) -> &str {
                "failing"
            }
            fn dim(&self) -> usize {
                1
            }
            fn sample(&self, _: &SamplerRequest) -> Result<crate::samplers::TrajectoryBatch, SamplerError> {
                Err(SamplerError::Remote("boom".into()))
            }
        }
        assert!(matches!(
            build_tree(&Failing, &Matrix::column(&[1.0]), &cfg),
            Err(TreeError::Sampler { node: 0, .. })
        ));
    }
}
