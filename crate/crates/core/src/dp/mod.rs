//! Backward recursion over the scenario tree: `C_t`, the robust value
//! functions `U_t`, the kernel value functions `U_t^P`, the closure values
//! `u_t^cl`, and strategy synthesis.
//!
//! Value functions of non-terminal nodes are evaluated lazily: each query
//! builds the node's one-period problem whose atoms carry the children's
//! value functions, themselves evaluated recursively. Results are memoized
//! on `(kind, node, x)` with `x` rounded to `1e-12`.

mod audit;
mod grid;
mod policy;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::market::{Kernel, Market, NodeId};
use crate::one_period::{
    NoAttainment, Objective, OnePeriodConstants, OnePeriodError, OnePeriodProblem, SearchOptions, N0_CAP,
};
use crate::structure;
use crate::utility::{Utility, ValueFunction};
use crate::xreal::XReal;

pub use audit::{AuditReport, NodeAudit, WellDefinedness};
pub use grid::GridValue;
pub use policy::{gap_bound, lower_value, wealths, GapBound, Policy, PolicyStep, TerminalWealth};

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("exact recursion allowed up to horizon {max}, got {horizon}")]
    Guard { horizon: usize, max: usize },
    #[error("no kernel in H found; failing nodes: {0:?}")]
    NoKernel(Vec<String>),
    #[error("node {node}: {source}")]
    Node { node: String, source: OnePeriodError },
    #[error("eta: {0}")]
    Eta(String),
    #[error("wealth grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpOptions {
    /// Search settings at the queried node.
    pub top: SearchOptions,
    /// Search settings for values consumed by a parent problem.
    pub nested: SearchOptions,
    pub max_exact_horizon: usize,
    pub n0_cap: u64,
    /// Overrides the certificate's `eta`.
    pub eta: Option<f64>,
    /// Keep going when `K1` is infinite or `n0*` is missing, searching a ball
    /// of radius `force_radius` instead.
    pub force: bool,
    pub force_radius: f64,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            top: SearchOptions::dp_top(),
            nested: SearchOptions::nested(),
            max_exact_horizon: 3,
            n0_cap: N0_CAP,
            eta: None,
            force: false,
            force_radius: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// `U_t`: sup over `h` of the min over prior vertices.
    Robust,
    /// `U_t^P` for the engine's kernel.
    Kernel,
    /// `u_t^cl`: sup over `h` of the closure of the robust objective.
    Closure,
}

impl ValueKind {
    fn child(self) -> ValueKind {
        match self {
            ValueKind::Kernel => ValueKind::Kernel,
            _ => ValueKind::Robust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSolution {
    pub value: XReal,
    pub h_hat: Vec<f64>,
    pub k1: Option<XReal>,
    pub bound_active: bool,
    pub no_attainment: Option<NoAttainment>,
    pub approximate: bool,
}

impl NodeSolution {
    fn terminal(value: XReal) -> Self {
        NodeSolution {
            value,
            h_hat: Vec::new(),
            k1: None,
            bound_active: false,
            no_attainment: None,
            approximate: false,
        }
    }
}

/// `C_t` by backward maximization over prior vertices of child expectations.
pub fn c_recursion(market: &Market, c_terminal: &dyn Fn(NodeId) -> XReal) -> Vec<XReal> {
    let tree = &market.tree;
    let mut c = vec![XReal::ZERO; tree.len()];
    for id in tree.backward_order() {
        let node = tree.node(id);
        c[id] = if node.is_terminal() {
            c_terminal(id)
        } else {
            market
                .priors
                .vertices(id)
                .iter()
                .map(|p| XReal::weighted_sum(p.iter().copied().zip(node.children.iter().map(|&k| c[k]))))
                .max()
                .unwrap_or(XReal::ZERO)
        };
    }
    c
}

fn wealth_key(x: f64) -> i128 {
    if x.abs() < 1e20 {
        (x * 1e12).round() as i128
    } else {
        (1i128 << 100) + x.to_bits() as i128
    }
}

type CacheKey = (ValueKind, NodeId, bool, i128);

/// Exact-recursive evaluator for one market, utility and kernel.
pub struct Engine<'m> {
    market: &'m Market,
    utility: &'m Utility,
    kernel: Kernel,
    opts: DpOptions,
    eta: f64,
    c_t: Vec<XReal>,
    continuous: bool,
    consts: Mutex<HashMap<(ValueKind, NodeId), Result<OnePeriodConstants, OnePeriodError>>>,
    cache: Mutex<HashMap<CacheKey, NodeSolution>>,
    failure: Mutex<Option<DpError>>,
}

/// The value function `x -> kind value at node`, as seen by the parent.
pub struct NodeValue<'e, 'm> {
    engine: &'e Engine<'m>,
    node: NodeId,
    kind: ValueKind,
}

impl NodeValue<'_, '_> {
    fn terminal(&self) -> bool {
        self.engine.market.tree.node(self.node).is_terminal()
    }

    fn step(x: f64) -> f64 {
        1e-9 * (1.0 + x.abs())
    }
}

impl ValueFunction for NodeValue<'_, '_> {
    fn value(&self, x: f64) -> XReal {
        self.engine.nested_value(self.kind, self.node, x)
    }

    fn right_limit(&self, x: f64) -> XReal {
        if self.terminal() {
            self.engine.utility.cl_eval(self.node, x)
        } else if self.engine.continuous {
            self.value(x)
        } else {
            self.value(x + Self::step(x))
        }
    }

    fn left_limit(&self, x: f64) -> XReal {
        if self.terminal() {
            self.engine.utility.at(self.node).left(x)
        } else if self.engine.continuous {
            self.value(x)
        } else {
            self.value(x - Self::step(x))
        }
    }

    fn may_jump_at(&self, x: f64) -> bool {
        if self.terminal() {
            self.engine.utility.at(self.node).may_jump_at(x)
        } else {
            !self.engine.continuous
        }
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        if self.terminal() {
            Some(self.engine.utility.at(self.node).breakpoints().to_vec())
        } else {
            None
        }
    }
}

impl<'m> Engine<'m> {
    /// Uses `kernel` as `p*` at every node, or searches one in `H` when absent.
    pub fn new(market: &'m Market, utility: &'m Utility, kernel: Option<Kernel>, opts: DpOptions) -> Result<Self, DpError> {
        let kernel = match kernel {
            Some(k) => k,
            None => {
                let found = structure::find_h_kernel(market);
                found.kernel.ok_or(DpError::NoKernel(found.failing_nodes))?
            }
        };
        let eta = match opts.eta {
            Some(e) => utility.cert.with_eta(e).map_err(|e| DpError::Eta(e.to_string()))?.eta,
            None => utility.cert.eta,
        };
        let c_t = c_recursion(market, &|id| utility.c_terminal()[&id]);
        Ok(Engine {
            market,
            utility,
            kernel,
            eta,
            c_t,
            continuous: utility.is_continuous(),
            opts,
            consts: Mutex::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            failure: Mutex::new(None),
        })
    }

    pub fn market(&self) -> &Market {
        self.market
    }

    pub fn utility(&self) -> &Utility {
        self.utility
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn options(&self) -> &DpOptions {
        &self.opts
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `C_t` per node.
    pub fn c_t(&self) -> &[XReal] {
        &self.c_t
    }

    fn key(&self, node: NodeId) -> String {
        self.market.tree.node(node).key()
    }

    fn guard(&self) -> Result<(), DpError> {
        let horizon = self.market.tree.horizon();
        if horizon > self.opts.max_exact_horizon {
            return Err(DpError::Guard {
                horizon,
                max: self.opts.max_exact_horizon,
            });
        }
        Ok(())
    }

    fn children(&self, kind: ValueKind, node: NodeId) -> Vec<NodeValue<'_, 'm>> {
        self.market
            .tree
            .node(node)
            .children
            .iter()
            .map(|&c| NodeValue {
                engine: self,
                node: c,
                kind: kind.child(),
            })
            .collect()
    }

    /// The one-period problem at a non-terminal node for `kind`.
    pub fn problem<'a>(&self, kind: ValueKind, node: NodeId, children: &'a [NodeValue<'_, 'm>]) -> Result<OnePeriodProblem<'a>, DpError> {
        self.problem_with(kind, node, children.iter().map(|c| c as &dyn ValueFunction).collect())
    }

    /// The node's one-period problem with the given child value functions.
    pub fn problem_with<'a>(&self, kind: ValueKind, node: NodeId, v: Vec<&'a dyn ValueFunction>) -> Result<OnePeriodProblem<'a>, DpError> {
        let tree = &self.market.tree;
        let p_star = self.kernel.probs(node).to_vec();
        let vertices = match kind {
            ValueKind::Kernel => vec![p_star.clone()],
            _ => self.market.priors.vertices(node).to_vec(),
        };
        let cert = &self.utility.cert;
        OnePeriodProblem::new(
            tree.increments(node),
            vertices,
            p_star,
            v,
            tree.node(node).children.iter().map(|&c| self.c_t[c]).collect(),
            cert.gamma_lo,
            cert.gamma_hi,
            self.eta,
        )
        .map_err(|source| DpError::Node {
            node: self.key(node),
            source,
        })
    }

    /// One-period constants at a node, cached.
    pub fn constants(&self, kind: ValueKind, node: NodeId) -> Result<OnePeriodConstants, DpError> {
        let kind = match kind {
            ValueKind::Closure => ValueKind::Robust,
            k => k,
        };
        if let Some(c) = self.consts.lock().expect("constants cache").get(&(kind, node)) {
            return c.clone().map_err(|source| DpError::Node {
                node: self.key(node),
                source,
            });
        }
        let children = self.children(kind, node);
        let problem = self.problem(kind, node, &children)?;
        let c = problem.constants(None, self.opts.n0_cap);
        self.take_failure()?;
        self.consts
            .lock()
            .expect("constants cache")
            .insert((kind, node), c.clone());
        c.map_err(|source| DpError::Node {
            node: self.key(node),
            source,
        })
    }

    fn take_failure(&self) -> Result<(), DpError> {
        match self.failure.lock().expect("failure slot").take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn nested_value(&self, kind: ValueKind, node: NodeId, x: f64) -> XReal {
        match self.solve(kind, node, x, false) {
            Ok(s) => s.value,
            Err(e) => {
                self.failure.lock().expect("failure slot").get_or_insert(e);
                XReal::NEG_INF
            }
        }
    }

    fn solve(&self, kind: ValueKind, node: NodeId, x: f64, top: bool) -> Result<NodeSolution, DpError> {
        if self.market.tree.node(node).is_terminal() {
            return Ok(NodeSolution::terminal(self.utility.eval(node, x)));
        }
        let key = (kind, node, top, wealth_key(x));
        if let Some(s) = self.cache.lock().expect("value cache").get(&key) {
            return Ok(s.clone());
        }
        let consts = self.constants(kind, node);
        let children = self.children(kind, node);
        let problem = self.problem(kind, node, &children)?;
        let opts = if top { &self.opts.top } else { &self.opts.nested };
        let objective = match kind {
            ValueKind::Closure => Objective::ClPsi,
            _ => Objective::Psi,
        };
        let result = consts.and_then(|c| {
            problem.maximize(&c, x, objective, opts).map_err(|source| DpError::Node {
                node: self.key(node),
                source,
            })
        });
        let m = match result {
            Ok(m) => m,
            Err(_) if self.opts.force => problem.maximize_in_ball(x, self.opts.force_radius, objective, opts),
            Err(e) => return Err(e),
        };
        self.take_failure()?;
        let s = NodeSolution {
            value: m.value,
            k1: m.bounds.map(|b| b.k1),
            bound_active: m.bound_active,
            no_attainment: m.no_attainment,
            approximate: m.approximate,
            h_hat: m.h_hat,
        };
        self.cache.lock().expect("value cache").insert(key, s.clone());
        Ok(s)
    }

    fn query(&self, kind: ValueKind, node: NodeId, x: f64) -> Result<NodeSolution, DpError> {
        self.guard()?;
        let r = self.solve(kind, node, x, true);
        self.failure.lock().expect("failure slot").take();
        r
    }

    /// `U_t^P(node, x)` for the engine's kernel.
    pub fn kernel_value(&self, node: NodeId, x: f64) -> Result<NodeSolution, DpError> {
        self.query(ValueKind::Kernel, node, x)
    }

    /// `U_t(node, x)`.
    pub fn robust_value(&self, node: NodeId, x: f64) -> Result<NodeSolution, DpError> {
        self.query(ValueKind::Robust, node, x)
    }

    /// `u_t^cl(node, x)` with its maximizer `H*`.
    pub fn u_cl_value(&self, node: NodeId, x: f64) -> Result<NodeSolution, DpError> {
        self.query(ValueKind::Closure, node, x)
    }

    /// `Cl(U_t)(node, x)`: the right limit of the robust value, taken
    /// numerically at non-terminal nodes.
    pub fn cl_robust_value(&self, node: NodeId, x: f64) -> Result<XReal, DpError> {
        if self.market.tree.node(node).is_terminal() {
            return Ok(self.utility.cl_eval(node, x));
        }
        if self.continuous {
            return Ok(self.robust_value(node, x)?.value);
        }
        Ok(self.robust_value(node, x + NodeValue::step(x))?.value)
    }

    /// Checks `U_t <= Cl(U_t) <= u_t^cl` at `(node, x)` with relative
    /// tolerance `tol`.
    pub fn chain(&self, node: NodeId, x: f64, tol: f64) -> Result<Chain, DpError> {
        let u = self.robust_value(node, x)?.value;
        let cl_u = self.cl_robust_value(node, x)?;
        let u_cl = self.u_cl_value(node, x)?;
        let le = |a: XReal, b: XReal| {
            a <= b || (a.is_finite() && b.is_finite() && a.value() - b.value() <= tol * (1.0 + b.value().abs()))
        };
        Ok(Chain {
            node: self.key(node),
            x,
            u,
            cl_u,
            u_cl: u_cl.value,
            h_star: u_cl.h_hat,
            holds: le(u, cl_u) && le(cl_u, u_cl.value),
        })
    }

    /// Forward pass gluing the maximizers `H*` from `x0`.
    pub fn synthesize_strategy(&self, x0: f64) -> Result<Policy, DpError> {
        self.guard()?;
        let tree = &self.market.tree;
        let reachable = self.market.reachable_nodes();
        let mut wealth = vec![f64::NAN; tree.len()];
        wealth[tree.root()] = x0;
        let mut steps = Vec::new();
        for id in 0..tree.len() {
            let node = tree.node(id);
            if node.is_terminal() || !reachable[id] {
                continue;
            }
            let s = self.u_cl_value(id, wealth[id])?;
            let aff = structure::support_hull(self.market, id);
            let in_aff = aff.contains_f64(&s.h_hat, 1e-9);
            for (k, &c) in node.children.iter().enumerate() {
                let dy = tree.increment(id, k);
                wealth[c] = wealth[id] + s.h_hat.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
            }
            steps.push(PolicyStep {
                node: node.key(),
                id,
                wealth: wealth[id],
                h: s.h_hat,
                value_cl: s.value,
                k1: s.k1,
                bound_active: s.bound_active,
                in_aff,
            });
        }
        let terminal = tree
            .terminal()
            .filter(|&id| reachable[id])
            .map(|id| TerminalWealth {
                node: tree.node(id).key(),
                wealth: wealth[id],
            })
            .collect();
        Ok(Policy { x0, steps, terminal })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chain {
    pub node: String,
    pub x: f64,
    pub u: XReal,
    pub cl_u: XReal,
    pub u_cl: XReal,
    pub h_star: Vec<f64>,
    pub holds: bool,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn ce_market(q: f64) -> Market {
        Market::from_json_str(&format!(
            r#"{{"horizon":1,"assets":1,"nodes":[
            {{"path":[],"price":[0],"children":["up","dn"],"prior_vertices":[[{q},{r}]]}},
            {{"path":["up"],"price":[1]}},{{"path":["dn"],"price":[-1]}}]}}"#,
            r = 1.0 - q
        ))
        .unwrap()
    }

    pub(crate) fn ce_utility(m: &Market) -> Utility {
        Utility::from_json_str(
            r#"{"breakpoints":[0],
            "segments":[{"kind":"affine","slope":1,"intercept":0},{"kind":"constant","value":1}],
            "values":["left"],
            "ae_certificate":{"gamma_lo":0.5,"gamma_hi":1,"C":1,"eta":0.75}}"#,
            m,
        )
        .unwrap()
    }

    #[test]
    fn c_recursion_examples() {
        let m = ce_market(0.6);
        let c = c_recursion(&m, &|id| if m.tree.node(id).key() == "up" { XReal::new(2.0) } else { XReal::ZERO });
        assert!((c[0].value() - 1.2).abs() < 1e-15);
        let c = c_recursion(&m, &|_| XReal::ONE);
        assert!(c.iter().all(|&v| v == XReal::ONE));
        let two = Market::from_json_str(
            r#"{"horizon":1,"assets":1,"nodes":[
            {"path":[],"price":[0],"children":["up","dn"],"prior_vertices":[[1,0],[0,1]]},
            {"path":["up"],"price":[1]},{"path":["dn"],"price":[-1]}]}"#,
        )
        .unwrap();
        let c = c_recursion(&two, &|id| if two.tree.node(id).key() == "up" { XReal::new(2.0) } else { XReal::ZERO });
        assert_eq!(c[0], XReal::new(2.0));
    }

    #[test]
    fn ce_values() {
        let m = ce_market(0.6);
        let u = ce_utility(&m);
        let e = Engine::new(&m, &u, None, DpOptions::default()).unwrap();
        let r = e.robust_value(0, 0.0).unwrap();
        assert!((r.value.value() - 0.6).abs() < 1e-6);
        assert!(r.no_attainment.is_some());
        let k = e.kernel_value(0, 0.0).unwrap();
        assert_eq!(k.value, r.value);
        let cl = e.u_cl_value(0, 0.0).unwrap();
        assert_eq!(cl.value, XReal::ONE);
        assert_eq!(cl.h_hat, vec![0.0]);
        let p = e.synthesize_strategy(0.0).unwrap();
        assert_eq!(p.steps[0].h, vec![0.0]);
        assert!(p.terminal.iter().all(|t| t.wealth == 0.0));
        assert!(e.chain(0, 0.0, 1e-9).unwrap().holds);
    }

    #[test]
    fn guard() {
        let m = ce_market(0.6);
        let u = ce_utility(&m);
        let opts = DpOptions {
            max_exact_horizon: 0,
            ..DpOptions::default()
        };
        let e = Engine::new(&m, &u, None, opts).unwrap();
        assert!(matches!(e.robust_value(0, 0.0), Err(DpError::Guard { .. })));
    }

    #[test]
    fn flat_child_keeps_utility() {
        let m = Market::from_json_str(
            r#"{"horizon":2,"assets":1,"nodes":[
            {"path":[],"price":[1],"children":["a"],"prior_vertices":[[1]]},
            {"path":["a"],"price":[1],"children":["b"],"prior_vertices":[[1]]},
            {"path":["a","b"],"price":[1]}]}"#,
        )
        .unwrap();
        let u = Utility::from_json_str(
            r#"{"breakpoints":[0],
            "segments":[{"kind":"signed_power","a":1,"c":0,"gamma":1.5,"k":0},
                        {"kind":"signed_power","a":1,"c":0,"gamma":0.5,"k":0}],
            "ae_certificate":{"gamma_lo":0.5,"gamma_hi":1.5,"C":0}}"#,
            &m,
        )
        .unwrap();
        let e = Engine::new(&m, &u, None, DpOptions::default()).unwrap();
        for x in [-2.0, 0.0, 0.3, 4.0] {
            assert_eq!(e.kernel_value(0, x).unwrap().value, u.eval(2, x));
            assert_eq!(e.robust_value(1, x).unwrap().value, u.eval(2, x));
        }
    }
}
