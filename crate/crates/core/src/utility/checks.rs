//! Sampling checkers for the growth, negativity and type-(A) conditions.

use serde::Serialize;

use super::{NodeParam, Piecewise, Utility};
use crate::market::Market;
use crate::xreal::XReal;

/// Relative slack allowed before a sampled inequality counts as violated.
/// Equality cases (e.g. `U(lx) = l U(x)` on a linear piece) only differ by
/// rounding.
const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditGrid {
    pub lambdas: Vec<f64>,
    pub xs: Vec<f64>,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Wealth points: 0, breakpoints with small offsets, and a symmetric log grid
/// from 1e-6 to 1e6.
pub fn audit_x_grid(breakpoints: &[f64]) -> Vec<f64> {
    let mut xs = vec![0.0];
    for &b in breakpoints {
        xs.push(b);
        for off in [1e-9, 1e-6, 1e-3, 0.5] {
            xs.push(b - off);
            xs.push(b + off);
        }
    }
    for v in log_space(1e-6, 1e6, 61) {
        xs.push(v);
        xs.push(-v);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

impl AuditGrid {
    pub fn for_function(f: &Piecewise) -> AuditGrid {
        let mut lambdas = log_space(1.0, 1e6, 25);
        lambdas.extend([1.5, 2.0, 3.0]);
        lambdas.sort_by(f64::total_cmp);
        AuditGrid {
            lambdas,
            xs: audit_x_grid(f.breakpoints()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AeViolation {
    pub node: String,
    pub lambda: f64,
    pub x: f64,
    pub exponent: f64,
    /// `rhs - lhs`, negative on a violation.
    pub slack: XReal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AeReport {
    pub pass: bool,
    pub samples: usize,
    pub violations: Vec<AeViolation>,
}

/// True when `lhs <= rhs` up to rounding.
pub(crate) fn le_tol(lhs: XReal, rhs: XReal) -> bool {
    if lhs <= rhs {
        return true;
    }
    if lhs.is_finite() && rhs.is_finite() {
        let scale = 1f64.max(lhs.value().abs()).max(rhs.value().abs());
        return lhs.value() - rhs.value() <= REL_TOL * scale;
    }
    false
}

/// `U(l x) <= l^g (U(x) + C)` for both exponents on every sampled pair.
pub fn check_ae_function(f: &Piecewise, c: XReal, gamma_lo: f64, gamma_hi: f64, node: &str, grid: &AuditGrid) -> Vec<AeViolation> {
    let mut out = Vec::new();
    if c.is_pos_inf() {
        return out;
    }
    for &x in &grid.xs {
        let base = f.eval(x) + c;
        for &l in &grid.lambdas {
            let lhs = f.eval(l * x);
            for g in [gamma_hi, gamma_lo] {
                let rhs = base * l.powf(g);
                if !le_tol(lhs, rhs) {
                    out.push(AeViolation {
                        node: node.to_string(),
                        lambda: l,
                        x,
                        exponent: g,
                        slack: rhs - lhs,
                    });
                }
            }
        }
    }
    out
}

pub fn check_ae(u: &Utility, market: &Market) -> AeReport {
    let cert = &u.cert;
    let mut violations = Vec::new();
    let mut samples = 0;
    for node in u.terminal_nodes() {
        let f = u.at(node);
        let grid = AuditGrid::for_function(f);
        samples += grid.xs.len() * grid.lambdas.len();
        let key = market.tree.node(node).key();
        violations.extend(check_ae_function(
            f,
            u.c_terminal()[&node],
            cert.gamma_lo,
            cert.gamma_hi,
            &key,
            &grid,
        ));
    }
    AeReport {
        pass: violations.is_empty(),
        samples,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub pass: bool,
    pub failures: Vec<String>,
}

impl CheckReport {
    fn from_failures(failures: Vec<String>) -> CheckReport {
        CheckReport {
            pass: failures.is_empty(),
            failures,
        }
    }
}

/// `U(X_low) < -C` on every reachable terminal node.
pub fn check_negativity(u: &Utility, market: &Market, x_low: &NodeParam) -> CheckReport {
    let mut failures = Vec::new();
    for node in market.reachable_paths() {
        let key = market.tree.node(node).key();
        let Some(xl) = x_low.get(&key) else {
            failures.push(format!("{key}: no X_low"));
            continue;
        };
        if !(xl < XReal::ZERO) || !xl.is_finite() {
            failures.push(format!("{key}: X_low = {xl} is not a negative number"));
            continue;
        }
        let c = u.c_terminal()[&node];
        let v = u.eval(node, xl.value());
        if !(v < -c) {
            failures.push(format!("{key}: U({xl}) = {v} is not below -C = {}", -c));
        }
    }
    CheckReport::from_failures(failures)
}

/// Usc on reachable nodes, polynomial lower bound `-C1 (1 + |x|^p)` on the
/// audit grid, and finite `U+(1)`.
pub fn check_type_a(u: &Utility, market: &Market, c1: &NodeParam, p: f64) -> CheckReport {
    let mut failures = Vec::new();
    for node in market.reachable_paths() {
        let key = market.tree.node(node).key();
        failures.extend(type_a_failures(u.at(node), &key, c1.get(&key), p));
    }
    CheckReport::from_failures(failures)
}

fn type_a_failures(f: &Piecewise, key: &str, c1: Option<XReal>, p: f64) -> Vec<String> {
    let mut failures = Vec::new();
    for (b, j) in f.jumps() {
        failures.push(format!("{key}: not usc at {b} (jump {j})"));
    }
    match c1 {
        Some(c1) if c1.is_finite() && c1 >= XReal::ZERO => {
            for x in audit_x_grid(f.breakpoints()) {
                let bound = -c1 * (1.0 + x.abs().powf(p));
                if !le_tol(bound, f.eval(x)) {
                    failures.push(format!(
                        "{key}: lower bound fails at {x}: U = {}, bound = {bound}",
                        f.eval(x)
                    ));
                    break;
                }
            }
        }
        _ => failures.push(format!("{key}: C1 missing, negative or infinite")),
    }
    if !f.eval(1.0).pos_part().is_finite() {
        failures.push(format!("{key}: U+(1) is infinite"));
    }
    failures
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::PiecewiseSpec;

    fn piece(json: &str) -> Piecewise {
        Piecewise::new(&serde_json::from_str::<PiecewiseSpec>(json).unwrap()).unwrap()
    }

    const CE: &str = r#"{"breakpoints":[0],
        "segments":[{"kind":"affine","slope":1,"intercept":0},{"kind":"constant","value":1}],
        "values":["left"]}"#;
    const S_SHAPE: &str = r#"{"breakpoints":[0],"segments":[
        {"kind":"signed_power","a":1,"c":0,"gamma":1.5,"k":0},
        {"kind":"signed_power","a":1,"c":0,"gamma":0.5,"k":0}]}"#;

    #[test]
    fn ce_certificate_passes() {
        let f = piece(CE);
        let grid = AuditGrid::for_function(&f);
        assert!(check_ae_function(&f, XReal::ONE, 0.5, 1.0, "up", &grid).is_empty());
        // lx <= l^2 x fails for x < 0, l > 1
        let bad = check_ae_function(&f, XReal::ZERO, 1.0, 2.0, "up", &grid);
        assert!(!bad.is_empty());
    }

    #[test]
    fn s_shape_certificate_passes() {
        let f = piece(S_SHAPE);
        let grid = AuditGrid::for_function(&f);
        assert!(check_ae_function(&f, XReal::ZERO, 0.5, 1.5, "up", &grid).is_empty());
    }

    #[test]
    fn type_a_cases() {
        assert!(type_a_failures(&piece(S_SHAPE), "up", Some(XReal::ONE), 2.0).is_empty());
        let ce = type_a_failures(&piece(CE), "up", Some(XReal::ONE), 2.0);
        assert!(ce.iter().any(|m| m.contains("not usc at 0")));
        let plateau = piece(
            r#"{"breakpoints":[0],"segments":[{"kind":"neg_inf"},{"kind":"affine","slope":1,"intercept":0}]}"#,
        );
        let f = type_a_failures(&plateau, "up", Some(XReal::ONE), 2.0);
        assert!(f.iter().any(|m| m.contains("lower bound")));
    }
}
