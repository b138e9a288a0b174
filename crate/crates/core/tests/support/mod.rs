//! Random admissible instances shared by the integration and acceptance
//! suites. Numbers are dyadic so that sums and products stay exact.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_maxmin::geometry::zero_in_rel_interior_f64;
use robust_maxmin::market::MarketSpec;
use robust_maxmin::one_period::OnePeriodProblem;
use robust_maxmin::utility::{default_eta, Piecewise, PiecewiseSpec, UtilitySpec};
use robust_maxmin::{Market, Utility, ValueFunction, XReal};
use serde_json::{json, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k / denom` with `k` uniform in `[lo * denom, hi * denom]`.
pub fn dyadic(rng: &mut ChaCha8Rng, lo: f64, hi: f64, denom: f64) -> f64 {
    let (a, b) = ((lo * denom).ceil() as i64, (hi * denom).floor() as i64);
    rng.gen_range(a..=b) as f64 / denom
}

/// Probability vector with entries in multiples of `1/denom`, each at
/// least `min_units / denom`.
pub fn dyadic_probs(rng: &mut ChaCha8Rng, n: usize, denom: u32, min_units: u32) -> Vec<f64> {
    let free = denom - min_units * n as u32;
    let mut cuts: Vec<u32> = (0..n - 1).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&free)) {
        out.push((c - prev + min_units) as f64 / denom as f64);
        prev = c;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Power branches with elasticities matching the exponents, plus a shift.
    Smooth,
    /// Power branches plus bounded upward steps at random breakpoints.
    Stepped,
    /// Piecewise affine with dyadic slopes and steps.
    Lipschitz,
}

/// Direct evaluation of a generated function from its parameters.
#[derive(Debug, Clone)]
pub struct PlainFn {
    pub shape: Shape,
    pub bps: Vec<f64>,
    /// Additive level on segment `i`, left of `bps[i]`.
    pub levels: Vec<f64>,
    /// Value taken at `bps[i]`.
    pub at: Vec<f64>,
    pub a_neg: f64,
    pub a_pos: f64,
    pub g_neg: f64,
    pub g_pos: f64,
}

impl PlainFn {
    fn branch(&self, seg: usize, x: f64) -> f64 {
        let neg = self.bps.iter().position(|&b| b == 0.0).is_some_and(|z| seg <= z);
        let (a, g) = if neg { (self.a_neg, self.g_neg) } else { (self.a_pos, self.g_pos) };
        let core = match self.shape {
            Shape::Lipschitz => a * x,
            _ if x == 0.0 => 0.0,
            _ => a * x.signum() * x.abs().powf(g),
        };
        core + self.levels[seg]
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.bps.iter().position(|&b| b == x) {
            Some(i) => self.at[i],
            None => self.branch(self.bps.iter().filter(|&&b| b < x).count(), x),
        }
    }

    pub fn left(&self, x: f64) -> f64 {
        self.branch(self.bps.iter().filter(|&&b| b < x).count(), x)
    }

    pub fn right(&self, x: f64) -> f64 {
        self.branch(self.bps.iter().filter(|&&b| b <= x).count(), x)
    }
}

pub struct RandomFunction {
    pub spec: PiecewiseSpec,
    pub plain: PlainFn,
    /// AE constant valid for the function.
    pub c: f64,
    /// Constant of the polynomial lower bound `U >= -C1 (1 + |x|^p)`.
    pub c1: f64,
    pub p: f64,
}

fn spec_of(v: Value) -> PiecewiseSpec {
    serde_json::from_value(v).expect("generated spec")
}

/// A nondecreasing function with `U(lx) <= l^g (U(x) + C)` for both
/// exponents when `shape` is not `Lipschitz`.
pub fn random_function(rng: &mut ChaCha8Rng, gamma_lo: f64, gamma_hi: f64, shape: Shape) -> RandomFunction {
    let shift = dyadic(rng, -1.0, 1.0, 8.0);
    let mut bps: Vec<f64> = vec![0.0];
    let mut steps: Vec<f64> = vec![0.0];
    if shape != Shape::Smooth {
        for _ in 0..rng.gen_range(1..=3) {
            let b = dyadic(rng, -3.0, 3.0, 4.0);
            if !bps.contains(&b) {
                bps.push(b);
            }
        }
        bps.sort_by(f64::total_cmp);
        steps = bps.iter().map(|_| dyadic(rng, 0.0, 1.0, 8.0)).collect();
    }
    let zero = bps.iter().position(|&b| b == 0.0).expect("0 is a breakpoint");
    let a_neg = dyadic(rng, 0.25, 2.0, 8.0);
    let a_pos = dyadic(rng, 0.25, 2.0, 8.0);
    let g_neg = dyadic(rng, gamma_hi, gamma_hi + 0.75, 8.0);
    let g_pos = dyadic(rng, (gamma_lo - 0.25).max(0.125), gamma_lo, 8.0);
    let mut segments = Vec::new();
    let mut level = shift;
    for i in 0..=bps.len() {
        if i > 0 {
            level += steps[i - 1];
        }
        let neg = i <= zero;
        segments.push(match shape {
            Shape::Lipschitz => json!({"kind":"affine","slope": if neg { a_neg } else { a_pos },"intercept": level}),
            _ => json!({"kind":"signed_power","a": if neg { a_neg } else { a_pos },"c":0,
                        "gamma": if neg { g_neg } else { g_pos },"k": level}),
        });
    }
    let values: Vec<Value> = steps
        .iter()
        .map(|&s| {
            if s == 0.0 {
                json!("right")
            } else {
                match rng.gen_range(0..3) {
                    0 => json!("left"),
                    1 => json!("right"),
                    _ => json!("mid"),
                }
            }
        })
        .collect();
    // "mid" stands for the midpoint of the two one-sided limits.
    let mut spec = json!({"breakpoints": bps, "segments": segments, "values": values});
    let probe = Piecewise::new(&spec_of(json!({"breakpoints": bps, "segments": segments}))).expect("valid");
    for (i, b) in bps.iter().enumerate() {
        if spec["values"][i] == json!("mid") {
            let mid = (probe.left(*b).value() + probe.cl_eval(*b).value()) / 2.0;
            spec["values"][i] = json!(mid);
        }
    }
    let mut levels = vec![shift];
    for st in &steps {
        levels.push(levels.last().unwrap() + st);
    }
    let mut plain = PlainFn {
        shape,
        at: Vec::new(),
        bps: bps.clone(),
        levels,
        a_neg,
        a_pos,
        g_neg,
        g_pos,
    };
    plain.at = bps
        .iter()
        .enumerate()
        .map(|(i, &b)| match &spec["values"][i] {
            Value::Number(n) => n.as_f64().unwrap(),
            v if v == "left" => plain.left(b),
            _ => plain.right(b),
        })
        .collect();
    let total: f64 = steps.iter().sum();
    RandomFunction {
        spec: spec_of(spec),
        plain,
        c: total + shift.abs(),
        c1: a_neg + shift.abs() + 1.0,
        p: g_neg,
    }
}

/// A usc version: every breakpoint takes its right limit.
pub fn make_usc(f: &mut RandomFunction) {
    let mut v: Value = serde_json::to_value(&f.spec).unwrap();
    let n = f.plain.bps.len();
    v["values"] = json!(vec!["right"; n]);
    f.spec = spec_of(v);
    f.plain.at = f.plain.bps.iter().map(|&b| f.plain.right(b)).collect();
}

pub struct OneInstance {
    pub ys: Vec<Vec<f64>>,
    pub vertices: Vec<Vec<f64>>,
    pub p_star: Vec<f64>,
    pub fs: Vec<Piecewise>,
    pub plain: Vec<PlainFn>,
    pub c: Vec<XReal>,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub eta: f64,
}

impl OneInstance {
    pub fn problem(&self) -> OnePeriodProblem<'_> {
        OnePeriodProblem::new(
            self.ys.clone(),
            self.vertices.clone(),
            self.p_star.clone(),
            self.fs.iter().map(|f| f as &dyn ValueFunction).collect(),
            self.c.clone(),
            self.gamma_lo,
            self.gamma_hi,
            self.eta,
        )
        .expect("generated problem")
    }

    pub fn breakpoints(&self) -> Vec<(usize, f64)> {
        self.fs
            .iter()
            .enumerate()
            .flat_map(|(j, f)| f.breakpoints().iter().map(move |&b| (j, b)))
            .collect()
    }
}

/// Atoms with dyadic coordinates and `0` in the relative interior of their
/// convex hull.
pub fn random_atoms(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<Vec<f64>> {
    loop {
        let ys: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| dyadic(rng, -2.0, 2.0, 4.0)).collect())
            .collect();
        let distinct = (0..m).all(|i| (0..i).all(|k| ys[i] != ys[k]));
        if distinct && ys.iter().all(|y| y.iter().any(|&v| v != 0.0)) && zero_in_rel_interior_f64(&ys).unwrap() {
            return ys;
        }
    }
}

/// `d <= 2`, at most 6 atoms and 3 vertices; vertex 0 is `p*` with full
/// support.
pub fn random_one_period(rng: &mut ChaCha8Rng, shape: Shape) -> OneInstance {
    let d = rng.gen_range(1..=2);
    let m = rng.gen_range(if d == 1 { 2 } else { 3 }..=6);
    let ys = random_atoms(rng, d, m);
    let p_star = dyadic_probs(rng, m, 64, 2);
    let mut vertices = vec![p_star.clone()];
    for _ in 0..rng.gen_range(0..=2) {
        vertices.push(dyadic_probs(rng, m, 64, 0));
    }
    let gamma_lo = dyadic(rng, 0.25, 0.75, 8.0);
    let gamma_hi = dyadic(rng, 1.0, 2.0, 8.0);
    let mut fs = Vec::new();
    let mut plain = Vec::new();
    let mut c = Vec::new();
    for _ in 0..m {
        let f = random_function(rng, gamma_lo, gamma_hi, shape);
        fs.push(Piecewise::new(&f.spec).expect("valid"));
        plain.push(f.plain);
        c.push(XReal::new(f.c));
    }
    OneInstance {
        ys,
        vertices,
        p_star,
        fs,
        plain,
        c,
        gamma_lo,
        gamma_hi,
        eta: default_eta(gamma_lo, gamma_hi),
    }
}

/// A one-asset tree of the given horizon, 2 or 3 children per node, and
/// `vertices` prior vertices per node (the first with full support).
pub fn random_tree(rng: &mut ChaCha8Rng, horizon: usize, vertices: usize) -> MarketSpec {
    let labels = ["a", "b", "c"];
    let mut nodes = Vec::new();
    let mut frontier: Vec<(Vec<String>, f64)> = vec![(vec![], 0.0)];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for (path, price) in frontier {
            let k = rng.gen_range(2..=3);
            let dys = random_atoms(rng, 1, k);
            let children: Vec<String> = labels[..k].iter().map(|s| s.to_string()).collect();
            let mut verts = vec![dyadic_probs(rng, k, 16, 1)];
            for _ in 1..vertices {
                verts.push(dyadic_probs(rng, k, 16, 0));
            }
            nodes.push(json!({"path": path, "price": [price], "children": children, "prior_vertices": verts}));
            for (label, dy) in children.iter().zip(&dys) {
                let mut p = path.clone();
                p.push(label.clone());
                next.push((p, price + dy[0]));
            }
        }
        frontier = next;
    }
    for (path, price) in frontier {
        nodes.push(json!({"path": path, "price": [price]}));
    }
    serde_json::from_value(json!({"horizon": horizon, "assets": 1, "nodes": nodes})).expect("tree spec")
}

/// Per-terminal random functions sharing the exponents, with the AE
/// constants and the type-(A) data. The second entry holds the plain
/// evaluators indexed by node id.
pub fn random_tree_utility(
    rng: &mut ChaCha8Rng,
    market: &Market,
    shape: Shape,
    usc: bool,
) -> (Utility, Vec<Option<PlainFn>>) {
    let mut plain = vec![None; market.tree.len()];
    let gamma_lo = dyadic(rng, 0.25, 0.75, 8.0);
    let gamma_hi = dyadic(rng, 1.0, 2.0, 8.0);
    let mut overrides = serde_json::Map::new();
    let mut cs = serde_json::Map::new();
    let mut c1s = serde_json::Map::new();
    let mut p: f64 = 1.0;
    let mut default = None;
    for id in market.tree.terminal() {
        let mut f = random_function(rng, gamma_lo, gamma_hi, shape);
        if usc {
            make_usc(&mut f);
        }
        let key = market.tree.node(id).key();
        cs.insert(key.clone(), json!(f.c));
        c1s.insert(key.clone(), json!(f.c1));
        p = p.max(f.p);
        if default.is_none() {
            default = Some(f.spec.clone());
        }
        overrides.insert(key, serde_json::to_value(&f.spec).unwrap());
        plain[id] = Some(f.plain);
    }
    let default = serde_json::to_value(default.expect("terminal nodes")).unwrap();
    let doc = json!({
        "breakpoints": default["breakpoints"],
        "segments": default["segments"],
        "values": default["values"],
        "per_node_overrides": overrides,
        "ae_certificate": {"gamma_lo": gamma_lo, "gamma_hi": gamma_hi, "C": cs},
        "type_a": {"C1": c1s, "p": p},
    });
    let spec: UtilitySpec = serde_json::from_value(doc).expect("utility spec");
    (Utility::new(spec, market).expect("utility"), plain)
}
