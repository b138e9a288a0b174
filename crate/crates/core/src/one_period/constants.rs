use serde::Serialize;

use super::{OnePeriodError, OnePeriodProblem};
use crate::structure::AlphaMethod;
use crate::xreal::XReal;

/// Default cap on the `n0*` search.
pub const N0_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnePeriodConstants {
    pub alpha_star: f64,
    pub alpha_method: Option<AlphaMethod>,
    pub c_star: XReal,
    pub l_star: XReal,
    /// `None` when no `n <= cap` qualifies.
    pub n0_star: Option<u64>,
    pub eta: f64,
    pub failures: Vec<String>,
}

impl OnePeriodConstants {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Bounds above this are replaced by it, so that `x + h.Y` stays finite.
pub const K_SATURATION: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KBounds {
    pub k0: f64,
    pub k1: XReal,
    /// A finite bound exceeded [`K_SATURATION`] (or overflowed) and was cut.
    pub saturated: bool,
}

impl<'a> OnePeriodProblem<'a> {
    /// `c*`, `l*`, `n0*` for a given `alpha*` (computed from `p*` when absent).
    pub fn constants(&self, alpha: Option<f64>, n0_cap: u64) -> Result<OnePeriodConstants, OnePeriodError> {
        let (alpha_star, alpha_method) = match alpha {
            Some(a) => (a, None),
            None => {
                let a = self.alpha_star().ok_or(OnePeriodError::NoAlpha)?;
                (a.value, Some(a.method))
            }
        };
        let mut failures = Vec::new();
        let c_star = XReal::weighted_sum(self.p_star.iter().copied().zip(self.c.iter().copied()));
        if !c_star.is_finite() {
            failures.push("c* is infinite".to_string());
        }
        let d = self.dim();
        let mut l_star = XReal::ZERO;
        for mask in 0..(1u32 << d) {
            let theta: Vec<f64> = (0..d)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 })
                .collect();
            l_star = l_star
                + XReal::weighted_sum((0..self.atoms()).map(|j| {
                    let a = 1.0 + theta.iter().zip(&self.ys[j]).map(|(t, y)| t * y).sum::<f64>();
                    (self.p_star[j], self.v[j].value(a).pos_part())
                }));
        }
        if !l_star.is_finite() {
            failures.push("l* is infinite".to_string());
        }
        let n0_star = self.n0_star(alpha_star, c_star, n0_cap);
        if n0_star.is_none() {
            failures.push(format!("n0* not found below {n0_cap}"));
        }
        Ok(OnePeriodConstants {
            alpha_star,
            alpha_method,
            c_star,
            l_star,
            n0_star,
            eta: self.eta,
            failures,
        })
    }

    /// Smallest `n >= 1` with `p*(V(-n) <= -(1 + 2 c*/alpha)) >= 1 - alpha/2`.
    fn n0_star(&self, alpha: f64, c_star: XReal, cap: u64) -> Option<u64> {
        let threshold = -(XReal::ONE + c_star * (2.0 / alpha));
        let ok = |n: u64| {
            let mass: f64 = (0..self.atoms())
                .filter(|&j| self.v[j].value(-(n as f64)) <= threshold)
                .map(|j| self.p_star[j])
                .sum();
            mass >= 1.0 - alpha / 2.0
        };
        // The event grows with n, so the predicate is monotone.
        let mut hi = 1u64;
        while !ok(hi) {
            if hi >= cap {
                return None;
            }
            hi = (hi * 2).min(cap);
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    /// `K0(x)` and `K1(x)`; `K1 = +inf` when `Psi(x, 0) = -inf` or a
    /// constant is infinite.
    pub fn k_bounds(&self, consts: &OnePeriodConstants, x: f64) -> Result<KBounds, OnePeriodError> {
        let n0 = consts.n0_star.ok_or(OnePeriodError::N0NotFound(N0_CAP))? as f64;
        let a = consts.alpha_star;
        let xp = x.max(0.0);
        let r = (xp + n0) / a;
        let k0 = 1f64.max(xp).max(r).max(r.powf(1.0 / (1.0 - consts.eta)));
        let eg = consts.eta * self.gamma_hi;
        let growth = 1.0 / (eg - self.gamma_lo);
        let psi0 = self.psi(x, &vec![0.0; self.dim()]);
        let cut = |k: f64| (k.min(K_SATURATION), !(k <= K_SATURATION));
        if !consts.l_star.is_finite() || !consts.c_star.is_finite() || psi0.is_neg_inf() {
            let (k0, saturated) = cut(k0);
            return Ok(KBounds { k0, k1: XReal::POS_INF, saturated });
        }
        let k1 = k0
            .max((6.0 * consts.l_star.value() / a).powf(growth))
            .max((6.0 * consts.c_star.value() / a).powf(growth))
            .max((6.0 / a * psi0.neg_part().value()).powf(1.0 / eg));
        let (k0, s0) = cut(k0);
        let (k1, s1) = cut(k1);
        Ok(KBounds { k0, k1: XReal::new(k1), saturated: s0 || s1 })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{ce_problem, ce_utility};
    use super::*;
    use crate::utility::{Piecewise, PiecewiseSpec};

    #[test]
    fn ce_constants() {
        let u = ce_utility();
        let p = ce_problem(&u, 0.6);
        let c = p.constants(None, N0_CAP).unwrap();
        assert_eq!(c.alpha_star, 0.4);
        assert_eq!(c.c_star, XReal::ONE);
        assert_eq!(c.l_star, XReal::ONE);
        assert_eq!(c.n0_star, Some(6));
        let k = p.k_bounds(&c, 0.0).unwrap();
        assert!((k.k0 - 50625.0).abs() < 1e-6 * 50625.0, "{}", k.k0);
        assert!((k.k1.value() - 50625.0).abs() < 1e-6 * 50625.0);
        assert!(!k.saturated);
    }

    #[test]
    fn huge_wealth_saturates() {
        let u = ce_utility();
        let p = ce_problem(&u, 0.6);
        let c = p.constants(None, N0_CAP).unwrap();
        let k = p.k_bounds(&c, 1e200).unwrap();
        assert!(k.saturated);
        assert_eq!(k.k0, K_SATURATION);
        assert_eq!(k.k1, XReal::new(K_SATURATION));
    }

    #[test]
    fn nonnegative_v_has_no_n0() {
        let pos = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(r#"{"segments":[{"kind":"constant","value":0}]}"#).unwrap(),
        )
        .unwrap();
        let p = OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![&pos, &pos],
            vec![XReal::ZERO, XReal::ZERO],
            0.5,
            1.0,
            0.75,
        )
        .unwrap();
        let c = p.constants(None, 1000).unwrap();
        assert_eq!(c.n0_star, None);
        assert!(!c.is_complete());
        assert!(p.k_bounds(&c, 0.0).is_err());
    }

    #[test]
    fn s_shape_n0_is_one() {
        let s = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(
                r#"{"breakpoints":[0],"segments":[
                {"kind":"signed_power","a":1,"c":0,"gamma":1.5,"k":0},
                {"kind":"signed_power","a":1,"c":0,"gamma":0.5,"k":0}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        let p = OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![&s, &s],
            vec![XReal::ZERO, XReal::ZERO],
            0.5,
            1.5,
            default_eta(),
        )
        .unwrap();
        let c = p.constants(None, N0_CAP).unwrap();
        assert_eq!(c.c_star, XReal::ZERO);
        assert_eq!(c.n0_star, Some(1));
    }

    fn default_eta() -> f64 {
        crate::utility::default_eta(0.5, 1.5)
    }

    #[test]
    fn trivial_bounds() {
        let zero = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(
                r#"{"breakpoints":[0],"segments":[{"kind":"neg_inf"},{"kind":"constant","value":0}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        let p = OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![&zero, &zero],
            vec![XReal::ZERO, XReal::ZERO],
            0.2,
            1.0,
            0.5,
        )
        .unwrap();
        let c = OnePeriodConstants {
            alpha_star: 1.0,
            alpha_method: None,
            c_star: XReal::ZERO,
            l_star: XReal::ZERO,
            n0_star: Some(1),
            eta: 0.5,
            failures: vec![],
        };
        let k = p.k_bounds(&c, 0.0).unwrap();
        assert_eq!(k.k0, 1.0);
        assert_eq!(k.k1, XReal::ONE);
        assert_eq!(p.k_bounds(&c, -1.0).unwrap().k1, XReal::POS_INF);
    }
}
