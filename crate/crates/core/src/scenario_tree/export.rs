use std::fmt::Write as _;

use serde::Deserialize;

use super::{ScenarioNode, ScenarioTree, TreeConfig, TreeError};
use crate::matrix::Matrix;

/// Fixed-point formatting that never prints `-0.00`.
pub(crate) fn fixed(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Positional decimal literal with 17 significant digits.
pub(crate) fn decimal17(value: f64) -> String {
    assert!(value.is_finite(), "cannot format {value}");
    let sci = format!("{:.16e}", value.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if value.is_sign_negative() && value != 0.0 {
        "-"
    } else {
        ""
    };
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let split = exp as usize + 1;
        if split >= digits.len() {
            format!("{digits}{}.0", "0".repeat(split - digits.len()))
        } else {
            format!("{}.{}", &digits[..split], &digits[split..])
        }
    };
    format!("{sign}{body}")
}

/// Renders the tree in Graphviz DOT: nodes in id order, then edges.
pub fn export_dot(tree: &ScenarioTree) -> String {
    let mut out = String::from("digraph scenario_tree {\n  node [shape=record];\n");
    for n in tree.nodes() {
        let _ = writeln!(
            out,
            "  n{} [label=\"{} | {} | {} | {}\"];",
            n.id,
            n.id,
            n.stage,
            fixed(n.path_prob, 4),
            fixed(n.forecast.mean(), 2)
        );
    }
    for n in tree.nodes() {
        for &c in &n.children {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"];",
                n.id,
                c,
                fixed(tree.nodes()[c].branch_prob, 4)
            );
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Deserialize)]
struct NodeDoc {
    id: usize,
    parent_id: Option<usize>,
    stage: usize,
    branch_prob: f64,
    path_prob: f64,
    forecast: Matrix,
}

#[derive(Deserialize)]
struct TreeDoc {
    config: TreeConfig,
    nodes: Vec<NodeDoc>,
}

impl ScenarioTree {
    /// JSON document `{config, nodes: [...]}`, one node per line. Children are
    /// implied by `parent_id`.
    pub fn to_json(&self) -> String {
        let config = serde_json::to_string(&self.config).expect("config serialises");
        let mut out = format!("{{\"config\":{config},\"nodes\":[\n");
        for (i, n) in self.nodes().iter().enumerate() {
            let parent = n.parent_id.map_or_else(|| "null".to_string(), |p| p.to_string());
            let forecast = serde_json::to_string(&n.forecast).expect("forecast serialises");
            let _ = write!(
                out,
                "{{\"id\":{},\"parent_id\":{parent},\"stage\":{},\"branch_prob\":{},\"path_prob\":{},\"forecast\":{forecast}}}",
                n.id,
                n.stage,
                decimal17(n.branch_prob),
                decimal17(n.path_prob)
            );
            out.push_str(if i + 1 < self.len() { ",\n" } else { "\n" });
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let doc: TreeDoc = serde_json::from_str(text)?;
        let mut nodes: Vec<ScenarioNode> = doc
            .nodes
            .into_iter()
            .map(|n| ScenarioNode {
                id: n.id,
                parent_id: n.parent_id,
                stage: n.stage,
                forecast: n.forecast,
                branch_prob: n.branch_prob,
                path_prob: n.path_prob,
                children: Vec::new(),
            })
            .collect();
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent_id {
                let id = nodes[i].id;
                nodes
                    .get_mut(p)
                    .ok_or_else(|| TreeError::InvalidInput(format!("node {id} has unknown parent {p}")))?
                    .children
                    .push(id);
            }
        }
        ScenarioTree::from_nodes(doc.config, nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::tests::binary_tree;

    #[test]
    fn decimal_literals() {
        assert_eq!(decimal17(1.0), "1.0000000000000000");
        assert_eq!(decimal17(0.625), "0.62500000000000000");
        assert_eq!(decimal17(0.1), "0.10000000000000001");
        assert_eq!(decimal17(123.5), "123.50000000000000");
        assert_eq!(decimal17(1e20), "100000000000000000000.0");
        for v in [0.390625, 1.0 / 3.0, 2.0 / 7.0, 1e-5, 0.7 * 0.3] {
            assert_eq!(decimal17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(fixed(-0.001, 2), "0.00");
        assert_eq!(fixed(-0.006, 2), "-0.01");
    }

    #[test]
    fn dot_counts() {
        let single = ScenarioTree::single(Matrix::column(&[1.0, 2.0]));
        let dot = export_dot(&single);
        assert_eq!(dot.matches("[label=").count(), 1);
        assert!(!dot.contains("->"));
        assert!(dot.contains("n0 [label=\"0 | 0 | 1.0000 | 1.50\"];"));

        let chain = ScenarioTree::chain(TreeConfig::default(), vec![Matrix::column(&[1.0]); 3]);
        let dot = export_dot(&chain);
        assert_eq!(dot.matches("->").count(), 2);
        assert_eq!(dot.matches("[label=\"1.0000\"]").count(), 2);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = binary_tree(0.625);
        let back = ScenarioTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }
}
