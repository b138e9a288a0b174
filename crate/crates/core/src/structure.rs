//! Conditional supports, the search for a quantitatively arbitrage-free
//! kernel, and the constant `alpha` of that kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, q_of, q_vec, AffineSubspace, Q};
use crate::market::{Kernel, Market, NodeId};
use num_traits::{Signed, Zero};

#[derive(Debug, Error, PartialEq)]
pub enum StructureError {
    #[error("node {0} is terminal")]
    Terminal(String),
    #[error("node {0} fails the local H condition")]
    NotInH(String),
    #[error("no valid alpha found at node {0}")]
    NoAlpha(String),
}

/// Distinct increments over children charged by some prior vertex.
pub fn conditional_support(market: &Market, node: NodeId) -> Vec<Vec<f64>> {
    let charged = market.priors.charged_children(node);
    dedup_points(charged.iter().map(|&k| market.tree.increment(node, k)))
}

/// Distinct increments over children charged by the kernel entry.
pub fn kernel_support(market: &Market, kernel: &Kernel, node: NodeId) -> Vec<Vec<f64>> {
    let probs = kernel.probs(node);
    dedup_points(
        (0..probs.len())
            .filter(|&k| probs[k] > 0.0)
            .map(|k| market.tree.increment(node, k)),
    )
}

fn dedup_points(it: impl Iterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in it {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Linear span of the support at a node, `Aff(D)`.
pub fn support_hull(market: &Market, node: NodeId) -> AffineSubspace {
    geometry::affine_hull_f64(&conditional_support(market, node))
        .expect("non-terminal nodes have a nonempty support")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSupport {
    pub node: String,
    pub d_points: Vec<Vec<f64>>,
    pub d_p_points: Vec<Vec<f64>>,
    pub dim_aff_d: usize,
    pub dim_aff_d_p: usize,
    pub zero_in_ri_d_p: bool,
    pub same_hull: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HReport {
    pub pass: bool,
    pub nodes: Vec<NodeSupport>,
}

impl HReport {
    pub fn failing_nodes(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| !n.pass)
            .map(|n| n.node.clone())
            .collect()
    }
}

pub fn node_support(market: &Market, kernel_probs: &[f64], node: NodeId) -> NodeSupport {
    let d_points = conditional_support(market, node);
    let d_p_points = dedup_points(
        (0..kernel_probs.len())
            .filter(|&k| kernel_probs[k] > 0.0)
            .map(|k| market.tree.increment(node, k)),
    );
    let aff_d = geometry::affine_hull_f64(&d_points).expect("nonempty support");
    let (dim_p, zero_in_ri, same) = match geometry::affine_hull_f64(&d_p_points) {
        Ok(aff_p) => (
            aff_p.dim(),
            geometry::zero_in_rel_interior_f64(&d_p_points).unwrap_or(false),
            aff_p.same_as(&aff_d),
        ),
        Err(_) => (0, false, false),
    };
    NodeSupport {
        node: market.tree.node(node).key(),
        dim_aff_d: aff_d.dim(),
        dim_aff_d_p: dim_p,
        d_points,
        d_p_points,
        zero_in_ri_d_p: zero_in_ri,
        same_hull: same,
        pass: zero_in_ri && same,
    }
}

/// Membership of the kernel's product measure in the quantitatively
/// arbitrage-free family, checked on reachable nodes.
pub fn check_h_membership(market: &Market, kernel: &Kernel) -> HReport {
    let reach = market.reachable_nodes();
    let nodes: Vec<NodeSupport> = market
        .tree
        .non_terminal()
        .filter(|&n| reach[n])
        .map(|n| node_support(market, kernel.probs(n), n))
        .collect();
    HReport {
        pass: nodes.iter().all(|n| n.pass),
        nodes,
    }
}

/// How a node's kernel entry was picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HChoice {
    Vertex(usize),
    UniformMixture,
    /// Unreachable node, or no candidate passed; first vertex kept.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct HSearch {
    pub kernel: Option<Kernel>,
    pub choices: Vec<(String, HChoice)>,
    pub failing_nodes: Vec<String>,
}

/// Per-node search over the vertices, then the uniform mixture.
pub fn find_h_kernel(market: &Market) -> HSearch {
    let reach = market.reachable_nodes();
    let mut weights: Vec<Option<Vec<f64>>> = vec![None; market.tree.len()];
    let mut choices = Vec::new();
    let mut failing = Vec::new();
    for node in market.tree.non_terminal() {
        let verts = market.priors.vertices(node);
        let nv = verts.len();
        let unit = |i: usize| {
            let mut w = vec![0.0; nv];
            w[i] = 1.0;
            w
        };
        let key = market.tree.node(node).key();
        let mut pick = None;
        if reach[node] {
            for i in 0..nv {
                if node_support(market, &verts[i], node).pass {
                    pick = Some((unit(i), HChoice::Vertex(i)));
                    break;
                }
            }
            if pick.is_none() && nv > 1 {
                let w = vec![1.0 / nv as f64; nv];
                let probs = crate::market::mix(verts, &w);
                if node_support(market, &probs, node).pass {
                    pick = Some((w, HChoice::UniformMixture));
                }
            }
            if pick.is_none() {
                failing.push(key.clone());
            }
        }
        let (w, c) = pick.unwrap_or_else(|| (unit(0), HChoice::Fallback));
        weights[node] = Some(w);
        choices.push((key, c));
    }
    let kernel = failing
        .is_empty()
        .then(|| Kernel::from_weights(market, weights).expect("weights built from vertices"));
    HSearch {
        kernel,
        choices,
        failing_nodes: failing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMethod {
    /// No nonzero direction; any alpha in (0, 1] is valid.
    Trivial,
    /// Exact search over the two directions of a line, verified in rationals.
    ExactLine,
    /// Bisection with an arc-coverage sweep on the unit circle.
    CircleSweep,
    /// Bisection against sampled unit directions; not certified.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alpha {
    pub value: f64,
    pub method: AlphaMethod,
}

/// Checks `q(h.Y < -alpha |h|) >= alpha` for one direction `h`, exactly.
pub fn alpha_holds_exact(points: &[Vec<Q>], probs: &[Q], h: &[Q], alpha: &Q) -> bool {
    let hh = geometry::dot(h, h);
    let a2 = alpha * alpha;
    let mass = points
        .iter()
        .zip(probs)
        .filter(|(y, _)| {
            let v = geometry::dot(h, y);
            v.is_negative() && &v * &v > &a2 * &hh
        })
        .fold(Q::zero(), |acc, (_, p)| acc + p);
    mass >= *alpha
}

/// A certified lower bound for the best quantitative no-arbitrage constant
/// of the probabilities `probs` over `points`, in the linear space `aff`.
pub fn alpha_for(points: &[Vec<f64>], probs: &[f64], aff: &AffineSubspace) -> Option<Alpha> {
    let basis = aff.orthonormal_f64();
    let atoms: Vec<(Vec<f64>, f64)> = points
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(y, &p)| {
            let z = basis
                .iter()
                .map(|b| b.iter().zip(y).map(|(u, v)| u * v).sum())
                .collect();
            (z, p)
        })
        .collect();
    match basis.len() {
        0 => Some(Alpha { value: 1.0, method: AlphaMethod::Trivial }),
        1 => alpha_line(points, probs, aff, &atoms),
        2 => bisect(|a| circle_coverage(&atoms, a) >= a).map(|value| Alpha {
            value,
            method: AlphaMethod::CircleSweep,
        }),
        _ => {
            let dirs = sample_directions(&atoms, basis.len());
            bisect(|a| sampled_coverage(&atoms, &dirs, a) >= a).map(|value| Alpha {
                value,
                method: AlphaMethod::Sampled,
            })
        }
    }
}

fn alpha_line(points: &[Vec<f64>], probs: &[f64], aff: &AffineSubspace, atoms: &[(Vec<f64>, f64)]) -> Option<Alpha> {
    // g_s(a) = mass of atoms with s * z < -a, for s = +1, -1.
    let mut ts: Vec<f64> = atoms.iter().map(|(z, _)| z[0].abs()).filter(|&t| t > 0.0).collect();
    ts.push(0.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mass = |s: f64, a: f64| -> f64 {
        atoms
            .iter()
            .filter(|(z, _)| s * z[0] < -a)
            .map(|(_, p)| p)
            .sum()
    };
    let mut best: f64 = 0.0;
    for i in 0..ts.len() {
        let lo = ts[i];
        let g = mass(1.0, lo).min(mass(-1.0, lo));
        let hi = ts.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let cand = if g < lo {
            continue;
        } else if g < hi {
            g
        } else {
            hi * (1.0 - 1e-9)
        };
        best = best.max(cand.min(1.0));
    }
    if best <= 0.0 {
        return None;
    }
    let pts: Vec<Vec<Q>> = points.iter().map(|p| q_vec(p).expect("finite")).collect();
    let qs: Vec<Q> = probs.iter().map(|&p| q_of(p).expect("finite")).collect();
    let dir = &aff.basis[0];
    let neg: Vec<Q> = dir.iter().map(|v| -v).collect();
    for _ in 0..64 {
        let a = q_of(best).expect("finite");
        if alpha_holds_exact(&pts, &qs, dir, &a) && alpha_holds_exact(&pts, &qs, &neg, &a) {
            return Some(Alpha { value: best, method: AlphaMethod::ExactLine });
        }
        best *= 1.0 - 1e-12;
    }
    None
}

/// Largest `a` in (0, 1] with `valid(a)`, for an antitone predicate.
fn bisect(valid: impl Fn(f64) -> bool) -> Option<f64> {
    if valid(1.0) {
        return Some(1.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if valid(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// Minimum over unit `c` of the mass of atoms with `c.z < -a`.
///
/// Each atom covers an open arc around `-z/|z|` of half-width `acos(a/|z|)`.
/// The minimum sits on an arc endpoint; there an arc is counted only when it
/// contains the probe with a margin, so rounding only lowers the result.
fn circle_coverage(atoms: &[(Vec<f64>, f64)], a: f64) -> f64 {
    use std::f64::consts::PI;
    const MARGIN: f64 = 1e-9;
    let mut arcs = Vec::new();
    for (z, p) in atoms {
        let r = z[0].hypot(z[1]);
        if r > a {
            let centre = (-z[1]).atan2(-z[0]);
            let half = (a / r).acos();
            if half > 0.0 {
                arcs.push((centre, half, *p));
            }
        }
    }
    if arcs.is_empty() {
        return 0.0;
    }
    let covered = |theta: f64, (c, w, _): &(f64, f64, f64)| {
        let mut d = (theta - c).rem_euclid(2.0 * PI);
        if d > PI {
            d = 2.0 * PI - d;
        }
        d < *w - MARGIN
    };
    let mut probes = Vec::with_capacity(2 * arcs.len());
    for (c, w, _) in &arcs {
        probes.push(c - w);
        probes.push(c + w);
    }
    probes
        .iter()
        .map(|&t| arcs.iter().filter(|arc| covered(t, arc)).map(|a| a.2).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn sample_directions(atoms: &[(Vec<f64>, f64)], dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dirs: Vec<Vec<f64>> = atoms
        .iter()
        .filter_map(|(z, _)| {
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            (n > 0.0).then(|| z.iter().map(|v| -v / n).collect())
        })
        .collect();
    for _ in 0..10_000 {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            dirs.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    dirs
}

fn sampled_coverage(atoms: &[(Vec<f64>, f64)], dirs: &[Vec<f64>], a: f64) -> f64 {
    dirs.iter()
        .map(|c| {
            atoms
                .iter()
                .filter(|(z, _)| c.iter().zip(z).map(|(u, v)| u * v).sum::<f64>() < -a)
                .map(|(_, p)| p)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `alpha` at a node for the kernel entry there.
pub fn alpha_qna(market: &Market, node: NodeId, kernel: &Kernel) -> Result<Alpha, StructureError> {
    let key = market.tree.node(node).key();
    if market.tree.node(node).is_terminal() {
        return Err(StructureError::Terminal(key));
    }
    let probs = kernel.probs(node);
    if !node_support(market, probs, node).pass {
        return Err(StructureError::NotInH(key));
    }
    let points = market.tree.increments(node);
    alpha_for(&points, probs, &support_hull(market, node)).ok_or(StructureError::NoAlpha(key))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(vertices: &str, up: &str, dn: &str, d: usize) -> Market {
        let doc = format!(
            r#"{{"horizon":1,"assets":{d},"nodes":[
              {{"path":[],"price":{zero},"children":["up","dn"],"prior_vertices":{vertices}}},
              {{"path":["up"],"price":{up}}},{{"path":["dn"],"price":{dn}}}]}}"#,
            zero = serde_json::to_string(&vec![0.0; d]).unwrap()
        );
        Market::from_json_str(&doc).unwrap()
    }

    #[test]
    fn supports() {
        let m = market("[[0.6,0.4]]", "[1.0]", "[-1.0]", 1);
        assert_eq!(conditional_support(&m, 0), vec![vec![1.0], vec![-1.0]]);
        let m = market("[[1.0,0.0]]", "[1.0]", "[-1.0]", 1);
        assert_eq!(conditional_support(&m, 0), vec![vec![1.0]]);
        let m = market("[[0.5,0.5]]", "[1.0,0.0]", "[0.0,1.0]", 2);
        assert_eq!(conditional_support(&m, 0).len(), 2);
    }

    #[test]
    fn h_membership_and_search() {
        let m = market("[[0.6,0.4]]", "[1.0]", "[-1.0]", 1);
        let s = find_h_kernel(&m);
        let k = s.kernel.unwrap();
        assert_eq!(k.probs(0), &[0.6, 0.4]);
        assert!(check_h_membership(&m, &k).pass);

        let m2 = market("[[1.0,0.0],[0.0,1.0]]", "[1.0]", "[-1.0]", 1);
        let bad = Kernel::from_vertex_choice(&m2, &[0, 0, 0]).unwrap();
        assert!(!check_h_membership(&m2, &bad).pass);
        let s = find_h_kernel(&m2);
        assert_eq!(s.choices[0].1, HChoice::UniformMixture);
        assert_eq!(s.kernel.unwrap().probs(0), &[0.5, 0.5]);

        let arb = market("[[0.5,0.5]]", "[1.0]", "[2.0]", 1);
        let s = find_h_kernel(&arb);
        assert!(s.kernel.is_none());
        assert_eq!(s.failing_nodes, vec!["root".to_string()]);
    }

    #[test]
    fn alpha_examples() {
        for (v, want) in [("[[0.6,0.4]]", 0.4), ("[[0.5,0.5]]", 0.5), ("[[0.99,0.01]]", 0.01)] {
            let m = market(v, "[1.0]", "[-1.0]", 1);
            let k = find_h_kernel(&m).kernel.unwrap();
            let a = alpha_qna(&m, 0, &k).unwrap();
            assert_eq!(a.value, want, "{v}");
            assert_eq!(a.method, AlphaMethod::ExactLine);
        }
    }

    #[test]
    fn alpha_in_the_plane() {
        let doc = r#"{"horizon":1,"assets":2,"nodes":[
          {"path":[],"price":[0,0],"children":["a","b","c"],"prior_vertices":[[0.4,0.3,0.3]]},
          {"path":["a"],"price":[1,0]},{"path":["b"],"price":[-1,1]},{"path":["c"],"price":[-1,-1]}]}"#;
        let m = Market::from_json_str(doc).unwrap();
        let k = find_h_kernel(&m).kernel.unwrap();
        let a = alpha_qna(&m, 0, &k).unwrap();
        assert_eq!(a.method, AlphaMethod::CircleSweep);
        assert!(a.value > 0.0 && a.value <= 0.3 + 1e-12);
        let pts: Vec<Vec<Q>> = m.tree.increments(0).iter().map(|p| q_vec(p).unwrap()).collect();
        let qs: Vec<Q> = k.probs(0).iter().map(|&p| q_of(p).unwrap()).collect();
        let aq = q_of(a.value).unwrap();
        for i in 0..360 {
            let t = i as f64 * std::f64::consts::PI / 180.0;
            let h = q_vec(&[t.cos(), t.sin()]).unwrap();
            assert!(alpha_holds_exact(&pts, &qs, &h, &aq), "direction {i}");
        }
    }

    #[test]
    fn small_atom_limits_alpha() {
        // The lightest atom (0.03125) alone covers some directions.
        let ys = vec![
            vec![1.25, -2.0],
            vec![-0.5, -0.5],
            vec![-0.5, -0.25],
            vec![2.0, -0.5],
            vec![-1.0, -1.75],
            vec![-1.75, 1.75],
        ];
        let p = vec![0.109375, 0.078125, 0.515625, 0.1875, 0.078125, 0.03125];
        let aff = geometry::affine_hull_f64(&ys).unwrap();
        let a = alpha_for(&ys, &p, &aff).unwrap();
        assert_eq!(a.method, AlphaMethod::CircleSweep);
        assert!(a.value > 0.03 && a.value <= 0.03125, "{}", a.value);
    }
}
