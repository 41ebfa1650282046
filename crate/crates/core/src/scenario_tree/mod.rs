//! Scenario trees: data model, construction by recursive sampling and
//! clustering, probability queries and export.

mod builder;
mod export;
mod kmeans;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::samplers::SamplerError;

pub use builder::{build_tree, build_tree_with_workers, prune_and_renormalize};
pub use export::export_dot;
pub(crate) use export::fixed;
pub use kmeans::{kmeans, kmeans_with_trace, within_cluster_ss, ClusterResult};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sampler failed while expanding node {node}: {source}")]
    Sampler {
        node: usize,
        #[source]
        source: SamplerError,
    },
    #[error("malformed tree document: {0}")]
    Json(#[from] serde_json::Error),
}

fn default_depth() -> usize {
    3
}
fn default_stage_horizon() -> usize {
    24
}
fn default_samples() -> usize {
    256
}
fn default_clusters() -> usize {
    4
}
fn default_keep() -> usize {
    2
}
fn default_dim() -> usize {
    1
}

/// Shape parameters for tree construction.
///
/// The defaults (3 daily stages of 24 hours, 4 clusters, top-2 children, 256
/// samples per node) are project choices, not calibrated values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Number of branching stages below the root.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Hours per stage (H).
    #[serde(default = "default_stage_horizon")]
    pub stage_horizon: usize,
    /// Trajectories sampled per expanded node (M).
    #[serde(default = "default_samples")]
    pub samples_per_node: usize,
    /// K-means clusters per node (K).
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Children retained per node after pruning (L).
    #[serde(default = "default_keep")]
    pub keep_children: usize,
    /// Dimension of the stochastic observation (D).
    #[serde(default = "default_dim")]
    pub series_dim: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            depth: default_depth(),
            stage_horizon: default_stage_horizon(),
            samples_per_node: default_samples(),
            clusters: default_clusters(),
            keep_children: default_keep(),
            series_dim: default_dim(),
            master_seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        let fields = [
            ("depth", self.depth),
            ("stage_horizon", self.stage_horizon),
            ("samples_per_node", self.samples_per_node),
            ("clusters", self.clusters),
            ("keep_children", self.keep_children),
            ("series_dim", self.series_dim),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(TreeError::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNode {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub stage: usize,
    /// H×D price block. The root carries the most recent observed block
    /// (fewer rows when the history is shorter than H).
    pub forecast: Matrix,
    /// Probability conditional on the parent, after pruning.
    pub branch_prob: f64,
    /// Product of branch probabilities from the root.
    pub path_prob: f64,
    #[serde(default)]
    pub children: Vec<usize>,
}

impl ScenarioNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted scenario tree. Node ids equal their index in `nodes` and are
/// assigned breadth-first, so parents always precede their children.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    pub config: TreeConfig,
    nodes: Vec<ScenarioNode>,
    root_id: usize,
}

const PROB_SUM_TOL: f64 = 1e-9;
const PATH_PROB_TOL: f64 = 1e-12;

impl ScenarioTree {
    /// Assembles a tree from nodes and checks every structural and probability
    /// invariant.
    pub fn from_nodes(config: TreeConfig, nodes: Vec<ScenarioNode>) -> Result<Self, TreeError> {
        let tree = Self {
            config,
            nodes,
            root_id: 0,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub(crate) fn from_parts_unchecked(config: TreeConfig, nodes: Vec<ScenarioNode>) -> Self {
        Self {
            config,
            nodes,
            root_id: 0,
        }
    }

    /// Tree holding only a root node with the given block.
    pub fn single(forecast: Matrix) -> Self {
        let config = TreeConfig {
            depth: 0,
            stage_horizon: forecast.rows().max(1),
            series_dim: forecast.cols().max(1),
            ..TreeConfig::default()
        };
        Self::chain(config, vec![forecast])
    }

    /// A chain of blocks, one node per stage, every probability 1.
    pub fn chain(mut config: TreeConfig, blocks: Vec<Matrix>) -> Self {
        assert!(!blocks.is_empty(), "a chain needs at least one block");
        config.depth = blocks.len() - 1;
        let n = blocks.len();
        let nodes = blocks
            .into_iter()
            .enumerate()
            .map(|(i, forecast)| ScenarioNode {
                id: i,
                parent_id: i.checked_sub(1),
                stage: i,
                forecast,
                branch_prob: 1.0,
                path_prob: 1.0,
                children: if i + 1 < n { vec![i + 1] } else { Vec::new() },
            })
            .collect();
        Self::from_parts_unchecked(config, nodes)
    }

    pub fn root_id(&self) -> usize {
        self.root_id
    }

    pub fn root(&self) -> &ScenarioNode {
        &self.nodes[self.root_id]
    }

    pub fn node(&self, id: usize) -> Option<&ScenarioNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> &[ScenarioNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Deepest stage present in the tree.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.stage).max().unwrap_or(0)
    }

    pub fn nodes_at_stage(&self, stage: usize) -> impl Iterator<Item = &ScenarioNode> {
        self.nodes.iter().filter(move |n| n.stage == stage)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ScenarioNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent_id {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Checks structure (single root, ids, stages, parent/child links) and
    /// probabilities (per-parent sums, path products, per-stage sums).
    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |msg: String| Err(TreeError::InvalidInput(msg));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let roots = self.nodes.iter().filter(|n| n.parent_id.is_none()).count();
        if roots != 1 || self.nodes[0].parent_id.is_some() {
            return bad(format!("expected exactly one root at id 0, found {roots} roots"));
        }
        let root = &self.nodes[0];
        if root.stage != 0 || root.branch_prob != 1.0 || root.path_prob != 1.0 {
            return bad("root must be at stage 0 with probability 1".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return bad(format!("node at index {i} has id {}", node.id));
            }
            if !node.forecast.is_finite() {
                return bad(format!("node {i} has a non-finite forecast"));
            }
            if let Some(p) = node.parent_id {
                if p >= i {
                    return bad(format!("node {i} has parent {p}, ids must be topological"));
                }
                let parent = &self.nodes[p];
                if node.stage != parent.stage + 1 {
                    return bad(format!(
                        "node {i} stage {} under parent stage {}",
                        node.stage, parent.stage
                    ));
                }
                if !parent.children.contains(&i) {
                    return bad(format!("node {i} missing from parent {p}'s children"));
                }
                if !(node.branch_prob > 0.0 && node.branch_prob <= 1.0) {
                    return bad(format!(
                        "node {i} branch probability {} outside (0,1]",
                        node.branch_prob
                    ));
                }
                let expected = parent.path_prob * node.branch_prob;
                if (node.path_prob - expected).abs() > PATH_PROB_TOL {
                    return bad(format!(
                        "node {i} path probability {} != parent {} x branch {}",
                        node.path_prob, parent.path_prob, node.branch_prob
                    ));
                }
            }
            for &c in &node.children {
                if self.nodes.get(c).and_then(|n| n.parent_id) != Some(i) {
                    return bad(format!("child {c} of node {i} does not point back"));
                }
            }
            if !node.children.is_empty() {
                let sum: f64 = node.children.iter().map(|&c| self.nodes[c].branch_prob).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return bad(format!(
                        "children of node {i} have branch probabilities summing to {sum}"
                    ));
                }
            }
        }
        for t in 0..=self.depth() {
            let sum: f64 = self.nodes_at_stage(t).map(|n| n.path_prob).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return bad(format!("stage {t} path probabilities sum to {sum}"));
            }
        }
        Ok(())
    }

    /// Per-stage expected forecast `Σ_i π_i μ_i`, one block per stage.
    pub fn expected_path(&self) -> Vec<Matrix> {
        (0..=self.depth())
            .map(|t| weighted_block(self.nodes_at_stage(t).map(|n| (n.path_prob, &n.forecast))))
            .collect()
    }
}

/// `Σ_k w_k · block_k` for blocks of a common shape. A single block with
/// weight 1 is returned unchanged.
pub(crate) fn weighted_block<'a>(items: impl IntoIterator<Item = (f64, &'a Matrix)>) -> Matrix {
    let mut out: Option<Matrix> = None;
    for (w, block) in items {
        match out.as_mut() {
            None => {
                let mut m = block.clone();
                if w != 1.0 {
                    for i in 0..m.rows() {
                        m.row_mut(i).iter_mut().for_each(|v| *v *= w);
                    }
                }
                out = Some(m);
            }
            Some(acc) => {
                for i in 0..acc.rows() {
                    for (a, &b) in acc.row_mut(i).iter_mut().zip(block.row(i)) {
                        *a += w * b;
                    }
                }
            }
        }
    }
    out.unwrap_or_default()
}

/// Path probabilities π_i of every node at stage `t`.
pub fn stage_probabilities(tree: &ScenarioTree, t: usize) -> Result<BTreeMap<usize, f64>, TreeError> {
    let depth = tree.depth();
    if t > depth {
        return Err(TreeError::InvalidInput(format!("stage {t} outside 0..={depth}")));
    }
    Ok(tree.nodes_at_stage(t).map(|n| (n.id, n.path_prob)).collect())
}
