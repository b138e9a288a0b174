//! Random, nondecreasing, piecewise utilities with exact one-sided limits.
//!
//! A utility attaches one [`Piecewise`] function to every terminal node. The
//! document gives a default function plus optional per-node overrides.

mod checks;
mod segment;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{Market, NodeId};
use crate::xreal::XReal;

pub use checks::{audit_x_grid, check_ae, check_ae_function, check_negativity, check_type_a, AeReport, AeViolation, CheckReport, AuditGrid};
pub use segment::Segment;

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("certificate rejected: {0}")]
    Certificate(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Something the one-period machinery can evaluate: a nondecreasing
/// extended-real function of wealth with one-sided limits.
pub trait ValueFunction: Sync {
    fn value(&self, x: f64) -> XReal;
    fn right_limit(&self, x: f64) -> XReal;
    fn left_limit(&self, x: f64) -> XReal;
    /// False only where the function is known to be continuous.
    fn may_jump_at(&self, x: f64) -> bool;
    /// Every point where the closed form changes, when known.
    fn breakpoints(&self) -> Option<Vec<f64>>;
}

/// Value stored at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BreakValue {
    Left,
    Right,
    At(XReal),
}

impl Serialize for BreakValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BreakValue::Left => s.serialize_str("left"),
            BreakValue::Right => s.serialize_str("right"),
            BreakValue::At(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for BreakValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) if s == "left" => Ok(BreakValue::Left),
            serde_json::Value::String(s) if s == "right" => Ok(BreakValue::Right),
            _ => XReal::deserialize(v)
                .map(BreakValue::At)
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseSpec {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    /// One entry per breakpoint; missing means right-continuous.
    #[serde(default)]
    pub values: Vec<BreakValue>,
}

/// A scalar or a per-terminal-node table keyed by path (`up/dn`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeParam {
    Uniform(XReal),
    PerNode(BTreeMap<String, XReal>),
}

impl NodeParam {
    pub fn get(&self, key: &str) -> Option<XReal> {
        match self {
            NodeParam::Uniform(v) => Some(*v),
            NodeParam::PerNode(m) => m.get(key).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeCertificateSpec {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    #[serde(rename = "C")]
    pub c: NodeParam,
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeASpec {
    #[serde(rename = "C1")]
    pub c1: NodeParam,
    pub p: f64,
}

/// The on-disk utility document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub values: Vec<BreakValue>,
    #[serde(default)]
    pub per_node_overrides: BTreeMap<String, PiecewiseSpec>,
    pub ae_certificate: AeCertificateSpec,
    #[serde(default)]
    pub type_a: Option<TypeASpec>,
    #[serde(default)]
    pub x_low: Option<NodeParam>,
}

/// A single nondecreasing piecewise function.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
    values: Vec<XReal>,
}

impl Piecewise {
    pub fn new(spec: &PiecewiseSpec) -> Result<Piecewise, UtilityError> {
        let m = spec.breakpoints.len();
        if spec.segments.len() != m + 1 {
            return Err(UtilityError::Schema(format!(
                "{} breakpoints need {} segments, got {}",
                m,
                m + 1,
                spec.segments.len()
            )));
        }
        if spec.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(UtilityError::Schema("breakpoints must be finite".into()));
        }
        if spec.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(UtilityError::Schema("breakpoints must be strictly increasing".into()));
        }
        if !spec.values.is_empty() && spec.values.len() != m {
            return Err(UtilityError::Schema(format!(
                "{} breakpoint values for {} breakpoints",
                spec.values.len(),
                m
            )));
        }
        for (i, s) in spec.segments.iter().enumerate() {
            s.check()
                .map_err(|e| UtilityError::Schema(format!("segment {i}: {e}")))?;
        }
        let values = (0..m)
            .map(|i| {
                let b = spec.breakpoints[i];
                match spec.values.get(i).copied().unwrap_or(BreakValue::Right) {
                    BreakValue::Left => spec.segments[i].eval(b),
                    BreakValue::Right => spec.segments[i + 1].eval(b),
                    BreakValue::At(v) => v,
                }
            })
            .collect();
        let f = Piecewise {
            breakpoints: spec.breakpoints.clone(),
            segments: spec.segments.clone(),
            values,
        };
        for (i, &b) in f.breakpoints.iter().enumerate() {
            let (l, v, r) = (f.left_limit(b), f.values[i], f.right_limit(b));
            if !(l <= v && v <= r) {
                return Err(UtilityError::Schema(format!(
                    "not nondecreasing at breakpoint {b}: left {l}, value {v}, right {r}"
                )));
            }
        }
        Ok(f)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_index(&self, x: f64) -> Result<usize, usize> {
        // Ok(i): x is breakpoint i. Err(i): x lies inside segment i.
        self.breakpoints
            .binary_search_by(|b| b.partial_cmp(&x).expect("finite breakpoints"))
    }

    pub fn eval(&self, x: f64) -> XReal {
        match self.segment_index(x) {
            Ok(i) => self.values[i],
            Err(i) => self.segments[i].eval(x),
        }
    }

    pub fn cl_eval(&self, x: f64) -> XReal {
        match self.segment_index(x) {
            Ok(i) => self.segments[i + 1].eval(x),
            Err(i) => self.segments[i].eval(x),
        }
    }

    pub fn left(&self, x: f64) -> XReal {
        match self.segment_index(x) {
            Ok(i) => self.segments[i].eval(x),
            Err(i) => self.segments[i].eval(x),
        }
    }

    /// `Cl(U)(x) - U(x)`, zero wherever the two agree (including infinite).
    pub fn jump(&self, x: f64) -> XReal {
        let (r, v) = (self.cl_eval(x), self.eval(x));
        if r == v {
            XReal::ZERO
        } else {
            r - v
        }
    }

    /// Breakpoints with a strictly positive right jump.
    pub fn jumps(&self) -> Vec<(f64, XReal)> {
        self.breakpoints
            .iter()
            .map(|&b| (b, self.jump(b)))
            .filter(|(_, j)| *j > XReal::ZERO)
            .collect()
    }

    /// Points where left limit, value and right limit are not all equal.
    pub fn discontinuities(&self) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|&b| !(self.left(b) == self.eval(b) && self.eval(b) == self.cl_eval(b)))
            .collect()
    }
}

impl ValueFunction for Piecewise {
    fn value(&self, x: f64) -> XReal {
        self.eval(x)
    }

    fn right_limit(&self, x: f64) -> XReal {
        self.cl_eval(x)
    }

    fn left_limit(&self, x: f64) -> XReal {
        self.left(x)
    }

    fn may_jump_at(&self, x: f64) -> bool {
        self.segment_index(x).is_ok()
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        Some(self.breakpoints.clone())
    }
}

/// Validated asymptotic-elasticity data.
#[derive(Debug, Clone, PartialEq)]
pub struct AeCertificate {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub eta: f64,
    c: NodeParam,
}

impl AeCertificate {
    pub fn new(gamma_lo: f64, gamma_hi: f64, c: NodeParam, eta: Option<f64>) -> Result<Self, UtilityError> {
        if !(gamma_lo > 0.0 && gamma_lo < gamma_hi && gamma_hi.is_finite()) {
            return Err(UtilityError::Certificate(format!(
                "need 0 < gamma_lo < gamma_hi, got gamma_lo={gamma_lo}, gamma_hi={gamma_hi}"
            )));
        }
        let eta = eta.unwrap_or(default_eta(gamma_lo, gamma_hi));
        if !(eta > 0.0 && eta < 1.0 && gamma_lo < eta * gamma_hi) {
            return Err(UtilityError::Certificate(format!(
                "eta={eta} must lie in (0,1) with gamma_lo < eta * gamma_hi"
            )));
        }
        let check = |v: XReal| {
            if v < XReal::ZERO {
                Err(UtilityError::Certificate("C must be nonnegative".into()))
            } else {
                Ok(())
            }
        };
        match &c {
            NodeParam::Uniform(v) => check(*v)?,
            NodeParam::PerNode(m) => m.values().try_for_each(|v| check(*v))?,
        }
        Ok(AeCertificate { gamma_lo, gamma_hi, eta, c })
    }

    pub fn from_spec(spec: &AeCertificateSpec) -> Result<Self, UtilityError> {
        AeCertificate::new(spec.gamma_lo, spec.gamma_hi, spec.c.clone(), spec.eta)
    }

    /// Same certificate with another `eta`.
    pub fn with_eta(&self, eta: f64) -> Result<Self, UtilityError> {
        AeCertificate::new(self.gamma_lo, self.gamma_hi, self.c.clone(), Some(eta))
    }

    /// `C` at a terminal node given by its path key.
    pub fn c_at(&self, key: &str) -> Option<XReal> {
        self.c.get(key)
    }

    pub fn c_param(&self) -> &NodeParam {
        &self.c
    }
}

/// `(gamma_lo / gamma_hi + 1) / 2`
pub fn default_eta(gamma_lo: f64, gamma_hi: f64) -> f64 {
    (gamma_lo / gamma_hi + 1.0) / 2.0
}

/// A utility bound to a market: one piecewise function per terminal node.
#[derive(Debug, Clone)]
pub struct Utility {
    spec: UtilitySpec,
    functions: BTreeMap<NodeId, Piecewise>,
    c_terminal: BTreeMap<NodeId, XReal>,
    pub cert: AeCertificate,
}

impl UtilitySpec {
    pub fn from_json_str(s: &str) -> Result<UtilitySpec, UtilityError> {
        serde_json::from_str(s).map_err(|e| UtilityError::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<UtilitySpec, UtilityError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| UtilityError::Io {
            path: p.display().to_string(),
            source,
        })?;
        UtilitySpec::from_json_str(&text)
    }

    pub fn default_spec(&self) -> PiecewiseSpec {
        PiecewiseSpec {
            breakpoints: self.breakpoints.clone(),
            segments: self.segments.clone(),
            values: self.values.clone(),
        }
    }

    /// Default function alone, without market binding.
    pub fn default_function(&self) -> Result<Piecewise, UtilityError> {
        Piecewise::new(&self.default_spec())
    }
}

impl Utility {
    pub fn new(spec: UtilitySpec, market: &Market) -> Result<Utility, UtilityError> {
        let cert = AeCertificate::from_spec(&spec.ae_certificate)?;
        let tree = &market.tree;
        for key in spec.per_node_overrides.keys() {
            match tree.find_key(key) {
                Some(id) if tree.node(id).is_terminal() => {}
                _ => {
                    return Err(UtilityError::Schema(format!(
                        "override for {key}, which is not a terminal node"
                    )))
                }
            }
        }
        let default = spec.default_function()?;
        let mut functions = BTreeMap::new();
        let mut c_terminal = BTreeMap::new();
        for id in tree.terminal() {
            let key = tree.node(id).key();
            let f = match spec.per_node_overrides.get(&key) {
                Some(o) => Piecewise::new(o)
                    .map_err(|e| UtilityError::Schema(format!("override {key}: {e}")))?,
                None => default.clone(),
            };
            functions.insert(id, f);
            let c = cert.c_at(&key).ok_or_else(|| {
                UtilityError::Schema(format!("ae_certificate.C has no entry for node {key}"))
            })?;
            c_terminal.insert(id, c);
        }
        for (name, p) in [
            ("type_a.C1", spec.type_a.as_ref().map(|t| &t.c1)),
            ("x_low", spec.x_low.as_ref()),
        ] {
            if let Some(NodeParam::PerNode(m)) = p {
                for id in tree.terminal() {
                    let key = tree.node(id).key();
                    if !m.contains_key(&key) {
                        return Err(UtilityError::Schema(format!("{name} has no entry for node {key}")));
                    }
                }
            }
        }
        if let Some(t) = &spec.type_a {
            if !(t.p >= 1.0) {
                return Err(UtilityError::Schema("type_a.p must be >= 1".into()));
            }
        }
        Ok(Utility { spec, functions, c_terminal, cert })
    }

    pub fn from_json_str(s: &str, market: &Market) -> Result<Utility, UtilityError> {
        Utility::new(UtilitySpec::from_json_str(s)?, market)
    }

    pub fn load(path: impl AsRef<Path>, market: &Market) -> Result<Utility, UtilityError> {
        Utility::new(UtilitySpec::load(path)?, market)
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    /// The function at a terminal node. Panics on non-terminal ids.
    pub fn at(&self, node: NodeId) -> &Piecewise {
        &self.functions[&node]
    }

    pub fn eval(&self, node: NodeId, x: f64) -> XReal {
        self.at(node).eval(x)
    }

    pub fn cl_eval(&self, node: NodeId, x: f64) -> XReal {
        self.at(node).cl_eval(x)
    }

    pub fn jump(&self, node: NodeId, x: f64) -> XReal {
        self.at(node).jump(x)
    }

    /// `C_T` at each terminal node.
    pub fn c_terminal(&self) -> &BTreeMap<NodeId, XReal> {
        &self.c_terminal
    }

    pub fn terminal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.functions.keys().copied()
    }

    /// True when no terminal function jumps anywhere.
    pub fn is_continuous(&self) -> bool {
        self.functions.values().all(|f| f.discontinuities().is_empty())
    }

    /// True when every terminal function takes its right limit at each
    /// breakpoint.
    pub fn is_usc(&self) -> bool {
        self.functions
            .values()
            .all(|f| f.breakpoints().iter().all(|&b| f.eval(b) == f.cl_eval(b)))
    }

    pub fn x_low(&self, node: NodeId, market: &Market) -> Option<f64> {
        let key = market.tree.node(node).key();
        self.spec
            .x_low
            .as_ref()
            .and_then(|p| p.get(&key))
            .map(XReal::value)
    }
}
