//! Approximate backward induction on a wealth grid, for horizons beyond the
//! exact-recursion guard. Values between grid points are interpolated
//! linearly; beyond the ends the first and last segments are extended.

use super::{DpError, Engine, ValueKind};
use crate::market::NodeId;
use crate::one_period::Objective;
use crate::utility::ValueFunction;
use crate::xreal::XReal;

#[derive(Debug, Clone, PartialEq)]
pub struct GridValue {
    xs: Vec<f64>,
    ys: Vec<XReal>,
}

impl GridValue {
    /// `xs` strictly increasing, at least two points.
    pub fn new(xs: Vec<f64>, ys: Vec<XReal>) -> Option<GridValue> {
        (xs.len() >= 2 && xs.len() == ys.len() && xs.windows(2).all(|w| w[0] < w[1])).then_some(GridValue { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[XReal] {
        &self.ys
    }

    fn lerp(&self, i: usize, x: f64) -> XReal {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        if x == x0 {
            return y0;
        }
        if x == x1 {
            return y1;
        }
        if !y0.is_finite() || !y1.is_finite() {
            return if x < x0 { y0.min(y1) } else if x > x1 { y0.max(y1) } else { y0 };
        }
        let t = (x - x0) / (x1 - x0);
        XReal::new(y0.value() + t * (y1.value() - y0.value()))
    }
}

impl ValueFunction for GridValue {
    fn value(&self, x: f64) -> XReal {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&g| g <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        self.lerp(i, x)
    }

    fn right_limit(&self, x: f64) -> XReal {
        self.value(x)
    }

    fn left_limit(&self, x: f64) -> XReal {
        self.value(x)
    }

    fn may_jump_at(&self, _x: f64) -> bool {
        false
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        None
    }
}

impl Engine<'_> {
    /// `U_t` (or `U_t^P`) tabulated on `xs` at every non-terminal node by
    /// backward induction over interpolated children. Approximate.
    pub fn grid_values(&self, kind: ValueKind, xs: &[f64]) -> Result<Vec<Option<GridValue>>, DpError> {
        let tree = &self.market().tree;
        let mut out: Vec<Option<GridValue>> = vec![None; tree.len()];
        let opts = &self.options().nested;
        for id in tree.backward_order() {
            let node = tree.node(id);
            if node.is_terminal() {
                continue;
            }
            let v: Vec<&dyn ValueFunction> = node
                .children
                .iter()
                .map(|&c: &NodeId| match &out[c] {
                    Some(g) => g as &dyn ValueFunction,
                    None => self.utility().at(c) as &dyn ValueFunction,
                })
                .collect();
            let problem = self.problem_with(kind, id, v)?;
            let consts = problem.constants(None, self.options().n0_cap);
            let mut ys = Vec::with_capacity(xs.len());
            for &x in xs {
                let m = consts
                    .clone()
                    .and_then(|c| problem.maximize(&c, x, Objective::Psi, opts));
                let m = match m {
                    Ok(m) => m,
                    Err(_) if self.options().force => {
                        problem.maximize_in_ball(x, self.options().force_radius, Objective::Psi, opts)
                    }
                    Err(source) => {
                        return Err(DpError::Node {
                            node: node.key(),
                            source,
                        })
                    }
                };
                ys.push(m.value);
            }
            let g = GridValue::new(xs.to_vec(), ys).ok_or(DpError::Grid("must be increasing with at least two points".into()))?;
            out[id] = Some(g);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{ce_market, ce_utility};
    use super::super::DpOptions;
    use super::*;

    #[test]
    fn interpolation() {
        let g = GridValue::new(vec![0.0, 1.0, 3.0], vec![XReal::ZERO, XReal::ONE, XReal::new(2.0)]).unwrap();
        assert_eq!(g.value(0.5), XReal::new(0.5));
        assert_eq!(g.value(2.0), XReal::new(1.5));
        assert_eq!(g.value(5.0), XReal::new(3.0));
        assert_eq!(g.value(-1.0), XReal::new(-1.0));
        let h = GridValue::new(vec![0.0, 1.0], vec![XReal::NEG_INF, XReal::ONE]).unwrap();
        assert!(h.value(0.5).is_neg_inf());
        assert_eq!(h.value(1.0), XReal::ONE);
    }

    #[test]
    fn ce_grid_matches_exact() {
        let m = ce_market(0.6);
        let u = ce_utility(&m);
        let e = Engine::new(&m, &u, None, DpOptions::default()).unwrap();
        let g = e.grid_values(ValueKind::Robust, &[-1.0, 0.0, 1.0]).unwrap();
        let root = g[0].as_ref().unwrap();
        assert!((root.ys()[1].value() - 0.6).abs() < 1e-6);
    }
}
