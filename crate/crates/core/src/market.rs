//! Finite discrete-time market: a scenario tree of discounted prices with a
//! finite vertex list of local priors at every non-terminal node.
//!
//! Nodes are addressed by the path of child labels from the root and stored
//! in breadth-first order, children in the order the document lists them.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::canonical;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-12;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("node {node}: vertex {vertex}: probability sum {sum} ≠ 1")]
    ProbabilitySum { node: String, vertex: usize, sum: f64 },
    #[error("node {node}: vertex {vertex}: negative probability {value}")]
    NegativeProbability { node: String, vertex: usize, value: f64 },
    #[error("node {node}: vertex {vertex} has {got} entries for {expected} children")]
    VertexLength { node: String, vertex: usize, got: usize, expected: usize },
    #[error("orphan node {0}: its parent does not list it as a child")]
    OrphanNode(String),
    #[error("node {0} is listed as a child but not defined")]
    MissingNode(String),
    #[error("node {0}: empty prior vertex list")]
    EmptyVertexList(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {node} has no child {child}")]
    UnknownChild { node: String, child: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Display form of a node path: `root` or `up/dn`.
pub fn path_key(path: &[String]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        path.join("/")
    }
}

/// Inverse of [`path_key`]; the empty string also denotes the root.
pub fn parse_path_key(key: &str) -> Vec<String> {
    if key.is_empty() || key == "root" {
        Vec::new()
    } else {
        key.split('/').map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub path: Vec<String>,
    pub price: Vec<f64>,
    #[serde(default)]
    pub children: Vec<String>,
    #[serde(default)]
    pub prior_vertices: Vec<Vec<f64>>,
}

/// The on-disk market document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub horizon: usize,
    pub assets: usize,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub path: Vec<String>,
    pub depth: usize,
    pub price: Vec<f64>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub child_labels: Vec<String>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }

    pub fn key(&self) -> String {
        path_key(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    horizon: usize,
    assets: usize,
    nodes: Vec<Node>,
    index: BTreeMap<Vec<String>, NodeId>,
}

impl ScenarioTree {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate()
    }

    pub fn find(&self, path: &[String]) -> Option<NodeId> {
        self.index.get(path).copied()
    }

    pub fn find_key(&self, key: &str) -> Option<NodeId> {
        self.find(&parse_path_key(key))
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_terminal())
            .map(|(i, _)| i)
    }

    pub fn terminal(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_terminal())
            .map(|(i, _)| i)
    }

    /// Nodes ordered by decreasing depth, for backward passes.
    pub fn backward_order(&self) -> Vec<NodeId> {
        // BFS storage order has nondecreasing depth.
        (0..self.nodes.len()).rev().collect()
    }

    /// `S_{t+1}(child) - S_t(node)` for the `k`-th child.
    pub fn increment(&self, node: NodeId, k: usize) -> Vec<f64> {
        let n = &self.nodes[node];
        let c = &self.nodes[n.children[k]];
        c.price.iter().zip(&n.price).map(|(a, b)| a - b).collect()
    }

    /// Price increment along `node -> child` addressed by path and label.
    pub fn delta_s(&self, node: &[String], child: &str) -> Result<Vec<f64>, MarketError> {
        let id = self
            .find(node)
            .ok_or_else(|| MarketError::UnknownNode(path_key(node)))?;
        let k = self.nodes[id]
            .child_labels
            .iter()
            .position(|l| l == child)
            .ok_or_else(|| MarketError::UnknownChild {
                node: path_key(node),
                child: child.to_string(),
            })?;
        Ok(self.increment(id, k))
    }

    /// All increments at `node`, one per child.
    pub fn increments(&self, node: NodeId) -> Vec<Vec<f64>> {
        (0..self.nodes[node].children.len())
            .map(|k| self.increment(node, k))
            .collect()
    }
}

/// Vertices of the local prior sets, indexed like the tree's nodes. Terminal
/// nodes carry an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    vertices: Vec<Vec<Vec<f64>>>,
}

impl PriorSet {
    pub fn vertices(&self, node: NodeId) -> &[Vec<f64>] {
        &self.vertices[node]
    }

    /// Children indices charged by at least one vertex.
    pub fn charged_children(&self, node: NodeId) -> Vec<usize> {
        let verts = &self.vertices[node];
        let n = verts.first().map_or(0, Vec::len);
        (0..n)
            .filter(|&k| verts.iter().any(|v| v[k] > 0.0))
            .collect()
    }

    /// A copy with one extra vertex at `node`. Used to probe monotonicity.
    pub fn with_extra_vertex(&self, node: NodeId, vertex: Vec<f64>) -> PriorSet {
        let mut out = self.clone();
        out.vertices[node].push(vertex);
        out
    }
}

/// A validated market: tree plus priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub tree: ScenarioTree,
    pub priors: PriorSet,
}

fn check_probability_vector(node: &str, vertex: usize, v: &[f64]) -> Result<(), MarketError> {
    for &p in v {
        if !p.is_finite() {
            return Err(MarketError::Schema(format!(
                "node {node}: vertex {vertex}: non-finite probability"
            )));
        }
        if p < 0.0 {
            return Err(MarketError::NegativeProbability {
                node: node.to_string(),
                vertex,
                value: p,
            });
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(MarketError::ProbabilitySum {
            node: node.to_string(),
            vertex,
            sum,
        });
    }
    Ok(())
}

impl Market {
    pub fn from_spec(spec: &MarketSpec) -> Result<Market, MarketError> {
        if spec.horizon < 1 {
            return Err(MarketError::Schema("horizon must be at least 1".into()));
        }
        if spec.assets < 1 {
            return Err(MarketError::Schema("assets must be at least 1".into()));
        }
        let mut by_path: BTreeMap<Vec<String>, &NodeSpec> = BTreeMap::new();
        for n in &spec.nodes {
            if n.path.iter().any(|l| l.is_empty() || l.contains('/')) {
                return Err(MarketError::Schema(format!(
                    "node {}: labels must be nonempty and must not contain '/'",
                    path_key(&n.path)
                )));
            }
            if by_path.insert(n.path.clone(), n).is_some() {
                return Err(MarketError::Schema(format!(
                    "duplicate node {}",
                    path_key(&n.path)
                )));
            }
        }
        let root_spec = by_path
            .get(&Vec::new())
            .ok_or_else(|| MarketError::Schema("missing root node (path [])".into()))?;

        let mut nodes: Vec<Node> = Vec::new();
        let mut vertices: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut index = BTreeMap::new();
        let mut queue: VecDeque<(&NodeSpec, Option<NodeId>)> = VecDeque::new();
        queue.push_back((root_spec, None));
        while let Some((ns, parent)) = queue.pop_front() {
            let id = nodes.len();
            let key = path_key(&ns.path);
            let depth = ns.path.len();
            if ns.price.len() != spec.assets {
                return Err(MarketError::Schema(format!(
                    "node {key}: price has {} entries, expected {}",
                    ns.price.len(),
                    spec.assets
                )));
            }
            if ns.price.iter().any(|p| !p.is_finite()) {
                return Err(MarketError::Schema(format!("node {key}: non-finite price")));
            }
            let terminal = depth == spec.horizon;
            if terminal && !ns.children.is_empty() {
                return Err(MarketError::Schema(format!(
                    "node {key} at the horizon has children"
                )));
            }
            if !terminal && ns.children.is_empty() {
                return Err(MarketError::Schema(format!(
                    "non-terminal node {key} has no children"
                )));
            }
            if terminal && !ns.prior_vertices.is_empty() {
                return Err(MarketError::Schema(format!(
                    "terminal node {key} carries prior vertices"
                )));
            }
            if !terminal {
                if ns.prior_vertices.is_empty() {
                    return Err(MarketError::EmptyVertexList(key));
                }
                let mut seen = std::collections::BTreeSet::new();
                for c in &ns.children {
                    if !seen.insert(c) {
                        return Err(MarketError::Schema(format!(
                            "node {key}: duplicate child label {c}"
                        )));
                    }
                }
                for (i, v) in ns.prior_vertices.iter().enumerate() {
                    if v.len() != ns.children.len() {
                        return Err(MarketError::VertexLength {
                            node: key.clone(),
                            vertex: i,
                            got: v.len(),
                            expected: ns.children.len(),
                        });
                    }
                    check_probability_vector(&key, i, v)?;
                }
            }
            index.insert(ns.path.clone(), id);
            nodes.push(Node {
                path: ns.path.clone(),
                depth,
                price: ns.price.clone(),
                parent,
                children: Vec::new(),
                child_labels: ns.children.clone(),
            });
            vertices.push(ns.prior_vertices.clone());
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            for label in &ns.children {
                let mut child_path = ns.path.clone();
                child_path.push(label.clone());
                let child = by_path
                    .get(&child_path)
                    .ok_or_else(|| MarketError::MissingNode(path_key(&child_path)))?;
                queue.push_back((child, Some(id)));
            }
        }
        if nodes.len() != spec.nodes.len() {
            let orphan = spec
                .nodes
                .iter()
                .find(|n| !index.contains_key(&n.path))
                .map(|n| path_key(&n.path))
                .unwrap_or_default();
            return Err(MarketError::OrphanNode(orphan));
        }
        Ok(Market {
            tree: ScenarioTree {
                horizon: spec.horizon,
                assets: spec.assets,
                nodes,
                index,
            },
            priors: PriorSet { vertices },
        })
    }

    pub fn from_json_str(s: &str) -> Result<Market, MarketError> {
        let spec: MarketSpec =
            serde_json::from_str(s).map_err(|e| MarketError::Schema(e.to_string()))?;
        Market::from_spec(&spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Market, MarketError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| MarketError::Io {
            path: p.display().to_string(),
            source,
        })?;
        Market::from_json_str(&text)
    }

    pub fn to_spec(&self) -> MarketSpec {
        MarketSpec {
            horizon: self.tree.horizon,
            assets: self.tree.assets,
            nodes: self
                .tree
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeSpec {
                    path: n.path.clone(),
                    price: n.price.clone(),
                    children: n.child_labels.clone(),
                    prior_vertices: self.priors.vertices[i].clone(),
                })
                .collect(),
        }
    }

    /// Sorted keys, 17-significant-digit floats.
    pub fn to_canonical_json(&self) -> String {
        let spec = self.to_spec();
        let nodes: Vec<serde_json::Value> = spec
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "path": n.path,
                    "price": n.price,
                    "children": n.children,
                    "prior_vertices": n.prior_vertices,
                })
            })
            .collect();
        let doc = json!({
            "horizon": spec.horizon,
            "assets": spec.assets,
            "nodes": nodes,
        });
        canonical::to_canonical_string(&doc)
    }

    /// `reach[n]` is true when every transition on the path to `n` is charged
    /// by some prior vertex at its parent.
    pub fn reachable_nodes(&self) -> Vec<bool> {
        let mut reach = vec![false; self.tree.len()];
        reach[0] = true;
        for id in 0..self.tree.len() {
            if !reach[id] {
                continue;
            }
            for k in self.priors.charged_children(id) {
                reach[self.tree.nodes[id].children[k]] = true;
            }
        }
        reach
    }

    /// Terminal nodes outside every polar set.
    pub fn reachable_paths(&self) -> Vec<NodeId> {
        let reach = self.reachable_nodes();
        self.tree.terminal().filter(|&n| reach[n]).collect()
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "market(T={}, d={}, {} nodes)",
            self.tree.horizon,
            self.tree.assets,
            self.tree.len()
        )
    }
}

/// One local prior per non-terminal node, recorded as a convex combination
/// of that node's vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelEntry {
    pub weights: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    entries: Vec<Option<KernelEntry>>,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("node {node}: {msg}")]
    Invalid { node: String, msg: String },
}

impl Kernel {
    /// Builds a kernel from per-node vertex weights (`None` at terminal nodes).
    pub fn from_weights(market: &Market, weights: Vec<Option<Vec<f64>>>) -> Result<Kernel, KernelError> {
        let tree = &market.tree;
        let mut entries = Vec::with_capacity(tree.len());
        for (id, w) in weights.into_iter().enumerate() {
            let node = tree.node(id);
            match (node.is_terminal(), w) {
                (true, _) => entries.push(None),
                (false, None) => {
                    return Err(KernelError::Invalid {
                        node: node.key(),
                        msg: "missing weights".into(),
                    })
                }
                (false, Some(w)) => {
                    let verts = market.priors.vertices(id);
                    if w.len() != verts.len() {
                        return Err(KernelError::Invalid {
                            node: node.key(),
                            msg: format!("{} weights for {} vertices", w.len(), verts.len()),
                        });
                    }
                    if w.iter().any(|&x| !(x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > PROB_SUM_TOL {
                        return Err(KernelError::Invalid {
                            node: node.key(),
                            msg: "weights must be nonnegative and sum to 1".into(),
                        });
                    }
                    let probs = mix(verts, &w);
                    entries.push(Some(KernelEntry { weights: w, probs }));
                }
            }
        }
        Ok(Kernel { entries })
    }

    /// Picks vertex `choice[node]` everywhere.
    pub fn from_vertex_choice(market: &Market, choice: &[usize]) -> Result<Kernel, KernelError> {
        let weights = market
            .tree
            .nodes()
            .map(|(id, n)| {
                (!n.is_terminal()).then(|| {
                    let n = market.priors.vertices(id).len();
                    let mut w = vec![0.0; n];
                    w[choice[id].min(n - 1)] = 1.0;
                    w
                })
            })
            .collect();
        Kernel::from_weights(market, weights)
    }

    pub fn entry(&self, node: NodeId) -> Option<&KernelEntry> {
        self.entries[node].as_ref()
    }

    pub fn probs(&self, node: NodeId) -> &[f64] {
        &self.entries[node].as_ref().expect("non-terminal node").probs
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-node mixture `lambda * self + (1 - lambda) * other`.
    pub fn mixed_with(&self, other: &Kernel, lambda: f64) -> Kernel {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => {
                    let weights: Vec<f64> = a
                        .weights
                        .iter()
                        .zip(&b.weights)
                        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                        .collect();
                    let probs = a
                        .probs
                        .iter()
                        .zip(&b.probs)
                        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                        .collect();
                    Some(KernelEntry { weights, probs })
                }
                _ => None,
            })
            .collect();
        Kernel { entries }
    }

    /// Reconstruction check: probabilities match the weighted vertices.
    pub fn is_consistent(&self, market: &Market) -> bool {
        self.entries.iter().enumerate().all(|(id, e)| match e {
            None => market.tree.node(id).is_terminal(),
            Some(e) => {
                let rebuilt = mix(market.priors.vertices(id), &e.weights);
                let wsum: f64 = e.weights.iter().sum();
                e.weights.iter().all(|&w| w >= 0.0)
                    && (wsum - 1.0).abs() <= PROB_SUM_TOL
                    && rebuilt
                        .iter()
                        .zip(&e.probs)
                        .all(|(a, b)| (a - b).abs() <= PROB_SUM_TOL)
            }
        })
    }
}

pub(crate) fn mix(vertices: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = vertices.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (v, &w) in vertices.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(v) {
            *o += w * p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example_one() -> &'static str {
        r#"{
          "horizon": 1, "assets": 1,
          "nodes": [
            {"path": [], "price": [0.0], "children": ["up", "dn"], "prior_vertices": [[0.6, 0.4]]},
            {"path": ["up"], "price": [1.0]},
            {"path": ["dn"], "price": [-1.0]}
          ]
        }"#
    }

    #[test]
    fn loads_example_one() {
        let m = Market::from_json_str(example_one()).unwrap();
        assert_eq!(m.tree.len(), 3);
        assert_eq!(m.priors.vertices(0).len(), 1);
        assert_eq!(m.tree.delta_s(&[], "up").unwrap(), vec![1.0]);
        assert_eq!(m.tree.delta_s(&[], "dn").unwrap(), vec![-1.0]);
    }

    #[test]
    fn rejects_bad_probability_sum() {
        let doc = example_one().replace("[0.6, 0.4]", "[0.5, 0.6]");
        let err = Market::from_json_str(&doc).unwrap_err();
        assert!(err.to_string().contains("probability sum 1.1 ≠ 1"), "{err}");
    }

    #[test]
    fn rejects_orphan_and_empty_vertices() {
        let doc = example_one().replace(
            r#"{"path": ["dn"], "price": [-1.0]}"#,
            r#"{"path": ["dn"], "price": [-1.0]}, {"path": ["zz"], "price": [3.0]}"#,
        );
        assert!(matches!(
            Market::from_json_str(&doc),
            Err(MarketError::OrphanNode(p)) if p == "zz"
        ));
        let doc = example_one().replace("[[0.6, 0.4]]", "[]");
        assert!(matches!(
            Market::from_json_str(&doc),
            Err(MarketError::EmptyVertexList(_))
        ));
        let doc = example_one().replace("\"horizon\"", "\"horizn\"");
        assert!(matches!(Market::from_json_str(&doc), Err(MarketError::Schema(_))));
    }

    #[test]
    fn two_period_structure() {
        let mut nodes = vec![];
        let paths: Vec<Vec<&str>> = vec![
            vec![],
            vec!["u"],
            vec!["d"],
            vec!["u", "u"],
            vec!["u", "d"],
            vec!["d", "u"],
            vec!["d", "d"],
        ];
        for p in &paths {
            let terminal = p.len() == 2;
            nodes.push(NodeSpec {
                path: p.iter().map(|s| s.to_string()).collect(),
                price: vec![p.iter().map(|s| if *s == "u" { 1.0 } else { -1.0 }).sum()],
                children: if terminal { vec![] } else { vec!["u".into(), "d".into()] },
                prior_vertices: if terminal { vec![] } else { vec![vec![0.5, 0.5]] },
            });
        }
        let m = Market::from_spec(&MarketSpec { horizon: 2, assets: 1, nodes }).unwrap();
        assert_eq!(m.tree.len(), 7);
        assert_eq!(m.tree.non_terminal().count(), 3);
        assert_eq!(m.reachable_paths().len(), 4);
    }

    #[test]
    fn constant_price_increment_is_zero() {
        let doc = example_one().replace("[1.0]", "[0.0]").replace("[-1.0]", "[0.0]");
        let m = Market::from_json_str(&doc).unwrap();
        assert_eq!(m.tree.delta_s(&[], "up").unwrap(), vec![0.0]);
        assert!(m.tree.delta_s(&[], "sideways").is_err());
    }

    #[test]
    fn reachable_paths_cases() {
        let m = Market::from_json_str(example_one()).unwrap();
        assert_eq!(m.reachable_paths().len(), 2);
        let m1 = Market::from_json_str(&example_one().replace("[0.6, 0.4]", "[1.0, 0.0]")).unwrap();
        let r = m1.reachable_paths();
        assert_eq!(r.len(), 1);
        assert_eq!(m1.tree.node(r[0]).key(), "up");
        let m2 = Market::from_json_str(&example_one().replace("[[0.6, 0.4]]", "[[1.0, 0.0], [0.0, 1.0]]"))
            .unwrap();
        assert_eq!(m2.reachable_paths().len(), 2);
    }

    #[test]
    fn canonical_round_trip() {
        let m = Market::from_json_str(example_one()).unwrap();
        let c = m.to_canonical_json();
        assert!(c.contains("0.59999999999999998"));
        let back = Market::from_json_str(&c).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_canonical_json(), c);
    }

    #[test]
    fn kernel_mixture_consistency() {
        let doc = example_one().replace("[[0.6, 0.4]]", "[[1.0, 0.0], [0.0, 1.0]]");
        let m = Market::from_json_str(&doc).unwrap();
        let k = Kernel::from_weights(&m, vec![Some(vec![0.5, 0.5]), None, None]).unwrap();
        assert_eq!(k.probs(0), &[0.5, 0.5]);
        assert!(k.is_consistent(&m));
        assert!(Kernel::from_weights(&m, vec![Some(vec![0.7, 0.7]), None, None]).is_err());
    }
}
