use std::collections::BTreeMap;

use serde::Serialize;

use crate::market::{Market, NodeId};
use crate::utility::Utility;
use crate::xreal::XReal;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStep {
    pub node: String,
    #[serde(skip)]
    pub id: NodeId,
    pub wealth: f64,
    pub h: Vec<f64>,
    pub value_cl: XReal,
    pub k1: Option<XReal>,
    pub bound_active: bool,
    pub in_aff: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalWealth {
    pub node: String,
    pub wealth: f64,
}

/// A strategy materialized along the reachable part of the tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    pub x0: f64,
    pub steps: Vec<PolicyStep>,
    pub terminal: Vec<TerminalWealth>,
}

impl Policy {
    pub fn strategy(&self) -> BTreeMap<NodeId, Vec<f64>> {
        self.steps.iter().map(|s| (s.id, s.h.clone())).collect()
    }
}

/// Wealth at every node from `x0` under `strategy` (missing nodes hold
/// nothing).
pub fn wealths(market: &Market, strategy: &BTreeMap<NodeId, Vec<f64>>, x0: f64) -> Vec<f64> {
    let tree = &market.tree;
    let mut w = vec![0.0; tree.len()];
    w[tree.root()] = x0;
    for id in 0..tree.len() {
        let node = tree.node(id);
        for (k, &c) in node.children.iter().enumerate() {
            let gain = strategy
                .get(&id)
                .map_or(0.0, |h| h.iter().zip(tree.increment(id, k)).map(|(a, b)| a * b).sum());
            w[c] = w[id] + gain;
        }
    }
    w
}

fn backward(market: &Market, leaf: impl Fn(NodeId) -> XReal, worst: bool) -> XReal {
    let tree = &market.tree;
    let mut v = vec![XReal::ZERO; tree.len()];
    for id in tree.backward_order() {
        let node = tree.node(id);
        v[id] = if node.is_terminal() {
            leaf(id)
        } else {
            let each = market
                .priors
                .vertices(id)
                .iter()
                .map(|p| XReal::weighted_sum(p.iter().copied().zip(node.children.iter().map(|&c| v[c]))));
            if worst {
                each.min()
            } else {
                each.max()
            }
            .expect("nonempty vertex list")
        };
    }
    v[tree.root()]
}

/// `inf_P E_P U(V_T)` over the product prior set, for a fixed strategy.
pub fn lower_value(market: &Market, utility: &Utility, strategy: &BTreeMap<NodeId, Vec<f64>>, x0: f64) -> XReal {
    let w = wealths(market, strategy, x0);
    backward(market, |id| utility.eval(id, w[id]), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBound {
    pub realized_floor: XReal,
    /// `sup_P E_P` of the terminal right jump of `U` at `V_T`.
    pub bound: XReal,
}

pub fn gap_bound(market: &Market, utility: &Utility, strategy: &BTreeMap<NodeId, Vec<f64>>, x0: f64) -> GapBound {
    let w = wealths(market, strategy, x0);
    GapBound {
        realized_floor: backward(market, |id| utility.eval(id, w[id]), true),
        bound: backward(market, |id| utility.jump(id, w[id]), false),
    }
}
