use serde::Serialize;

use super::{Engine, ValueKind};
use crate::xreal::XReal;

/// Per-node constants for the engine's kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeAudit {
    pub node: String,
    pub alpha: Option<f64>,
    pub c_t: XReal,
    pub c_p: Option<XReal>,
    pub i_p: Option<XReal>,
    pub l_p: Option<XReal>,
    pub n_p: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellDefinedness {
    pub t: usize,
    pub theta: Vec<f64>,
    pub positive_part: XReal,
    pub negative_part: XReal,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub x_ref: f64,
    pub nodes: Vec<NodeAudit>,
    pub u0_p_at_ref: Option<XReal>,
    pub u0_p_finite: bool,
    pub well_defined: Vec<WellDefinedness>,
    pub well_defined_pass: bool,
    pub zero_policy_wealth: f64,
    /// Reachable terminal nodes where `U(x0) = -inf`.
    pub zero_policy_failures: Vec<String>,
    pub errors: Vec<String>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.u0_p_finite && self.well_defined_pass && self.zero_policy_failures.is_empty() && self.errors.is_empty()
    }
}

impl Engine<'_> {
    /// Kernel constants per node, `U_0^P(x_ref) < +inf`, the generalized
    /// well-definedness of `E_P (U_t^P)^{+/-}(1 + theta.dS_t)`, and the zero
    /// strategy's admissibility from `x0`.
    pub fn audit(&self, x_ref: f64, x0: f64) -> AuditReport {
        let market = self.market();
        let tree = &market.tree;
        let reach = market.reachable_nodes();
        let mut errors = Vec::new();
        let mut nodes = Vec::new();
        for id in tree.non_terminal() {
            if !reach[id] {
                continue;
            }
            let key = tree.node(id).key();
            let mut a = NodeAudit {
                node: key.clone(),
                alpha: None,
                c_t: self.c_t()[id],
                c_p: None,
                i_p: None,
                l_p: None,
                n_p: None,
                error: None,
            };
            match self.constants(ValueKind::Kernel, id) {
                Ok(c) => {
                    a.alpha = Some(c.alpha_star);
                    a.c_p = Some(c.c_star);
                    a.i_p = Some(XReal::ONE + c.c_star * (2.0 / c.alpha_star));
                    a.l_p = Some(c.l_star);
                    a.n_p = c.n0_star;
                    if !c.is_complete() {
                        a.error = Some(c.failures.join("; "));
                    }
                }
                Err(e) => {
                    a.error = Some(e.to_string());
                    errors.push(format!("node {key}: {e}"));
                }
            }
            nodes.push(a);
        }
        let u0 = match self.kernel_value(tree.root(), x_ref) {
            Ok(s) => Some(s.value),
            Err(e) => {
                errors.push(format!("U_0^P({x_ref}): {e}"));
                None
            }
        };
        let (well_defined, wd_errors) = self.well_definedness();
        errors.extend(wd_errors);
        let zero_policy_failures = market
            .reachable_paths()
            .into_iter()
            .filter(|&id| self.utility().eval(id, x0).is_neg_inf())
            .map(|id| tree.node(id).key())
            .collect();
        AuditReport {
            x_ref,
            nodes,
            u0_p_finite: u0.is_some_and(|v| !v.is_pos_inf()),
            u0_p_at_ref: u0,
            well_defined_pass: well_defined.iter().all(|w| w.pass),
            well_defined,
            zero_policy_wealth: x0,
            zero_policy_failures,
            errors,
        }
    }

    fn well_definedness(&self) -> (Vec<WellDefinedness>, Vec<String>) {
        let tree = &self.market().tree;
        let d = tree.assets();
        let mut prob = vec![0.0; tree.len()];
        prob[tree.root()] = 1.0;
        for id in tree.non_terminal() {
            let q = self.kernel().probs(id);
            for (k, &c) in tree.node(id).children.iter().enumerate() {
                prob[c] = prob[id] * q[k];
            }
        }
        let mut thetas: Vec<Vec<f64>> = (0..1u32 << d)
            .map(|m| (0..d).map(|i| if m & (1 << i) != 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        thetas.push(vec![0.0; d]);
        let mut out = Vec::new();
        let mut errors = Vec::new();
        for t in 1..=tree.horizon() {
            let level: Vec<usize> = (0..tree.len())
                .filter(|&id| tree.node(id).depth == t && prob[id] > 0.0)
                .collect();
            for theta in &thetas {
                let mut terms = Vec::new();
                for &id in &level {
                    let parent = tree.node(id).parent.expect("depth >= 1");
                    let k = tree.node(parent).children.iter().position(|&c| c == id).expect("child");
                    let dy = tree.increment(parent, k);
                    let x = 1.0 + theta.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
                    match self.kernel_value(id, x) {
                        Ok(s) => terms.push((prob[id], s.value)),
                        Err(e) => errors.push(format!("U_{t}^P({}, {x}): {e}", tree.node(id).key())),
                    }
                }
                let positive_part = XReal::weighted_sum(terms.iter().map(|&(p, v)| (p, v.pos_part())));
                let negative_part = XReal::weighted_sum(terms.iter().map(|&(p, v)| (p, v.neg_part())));
                out.push(WellDefinedness {
                    t,
                    theta: theta.clone(),
                    positive_part,
                    negative_part,
                    pass: positive_part.is_finite() || negative_part.is_finite(),
                });
            }
        }
        (out, errors)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{ce_market, ce_utility};
    use super::super::DpOptions;
    use super::*;
    use crate::market::Market;
    use crate::utility::Utility;

    #[test]
    fn ce_audit_passes() {
        let m = ce_market(0.6);
        let u = ce_utility(&m);
        let e = Engine::new(&m, &u, None, DpOptions::default()).unwrap();
        let r = e.audit(1.0, 0.0);
        assert!(r.pass(), "{r:?}");
        assert_eq!(r.u0_p_at_ref, Some(XReal::ONE));
        assert_eq!(r.nodes[0].n_p, Some(6));
        assert_eq!(r.nodes[0].i_p, Some(XReal::new(6.0)));
    }

    #[test]
    fn neg_inf_plateau_fails_zero_policy() {
        let m = Market::from_json_str(
            r#"{"horizon":1,"assets":1,"nodes":[
            {"path":[],"price":[0],"children":["up","dn"],"prior_vertices":[[0.5,0.5]]},
            {"path":["up"],"price":[1]},{"path":["dn"],"price":[-1]}]}"#,
        )
        .unwrap();
        let u = Utility::from_json_str(
            r#"{"breakpoints":[0],
            "segments":[{"kind":"neg_inf"},{"kind":"signed_power","a":1,"c":0,"gamma":0.5,"k":0}],
            "per_node_overrides":{"dn":{"segments":[{"kind":"neg_inf"}]}},
            "ae_certificate":{"gamma_lo":0.25,"gamma_hi":0.5,"C":0}}"#,
            &m,
        )
        .unwrap();
        let e = Engine::new(&m, &u, None, DpOptions::default()).unwrap();
        let r = e.audit(1.0, 1.0);
        assert_eq!(r.zero_policy_failures, vec!["dn".to_string()]);
        assert!(!r.pass());
    }
}
