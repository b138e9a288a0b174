//! Global-by-candidates maximization over `Aff(D)` intersected with a ball.
//!
//! Candidates: the origin, preimages of every breakpoint of every atom's
//! value function (with one-sided offsets), nested uniform grids of
//! shrinking radius, then compass search from the best few.

use std::cmp::Ordering;

use serde::Serialize;

use super::constants::KBounds;
use super::{OnePeriodConstants, OnePeriodError, OnePeriodProblem};
use crate::xreal::XReal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize the closure `Cl(Psi)(x, .)`.
    ClPsi,
    /// Maximize `Psi(x, .)` itself; the supremum may not be attained.
    Psi,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOptions {
    /// Points per direction on the widest grid (one-dimensional case).
    pub grid: usize,
    /// Points per direction on each narrower grid of radius `<= far_radius`.
    pub fine_grid: usize,
    /// Points per direction on narrower grids of radius `> far_radius`.
    pub far_grid: usize,
    pub far_radius: f64,
    /// Points per direction for two-dimensional grids (widest, near, far).
    pub plane_grid: (usize, usize, usize),
    pub min_radius: f64,
    pub max_levels: usize,
    /// Radius ratio between consecutive grids, raised when needed to reach
    /// `min_radius` within `max_levels`.
    pub level_ratio: f64,
    pub refine_starts: usize,
    pub tol: f64,
    /// Search radius overriding `K1(x)`.
    pub radius: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid: 2000,
            fine_grid: 400,
            far_grid: 40,
            far_radius: 1e3,
            plane_grid: (201, 41, 15),
            min_radius: 1e-4,
            max_levels: 40,
            level_ratio: 10.0,
            refine_starts: 10,
            tol: 1e-10,
            radius: None,
        }
    }
}

impl SearchOptions {
    /// Settings for a queried node whose atoms carry nested value functions.
    pub fn dp_top() -> Self {
        SearchOptions {
            grid: 400,
            fine_grid: 100,
            far_grid: 16,
            plane_grid: (61, 25, 9),
            refine_starts: 6,
            ..SearchOptions::default()
        }
    }

    /// Coarser settings for value functions that are themselves maximizers.
    pub fn nested() -> Self {
        SearchOptions {
            grid: 60,
            fine_grid: 24,
            far_grid: 8,
            plane_grid: (15, 9, 5),
            min_radius: 1e-3,
            level_ratio: 4.0,
            refine_starts: 2,
            tol: 1e-9,
            ..SearchOptions::default()
        }
    }
}

/// The best value is approached near `limit_point`, where the objective
/// itself is strictly lower.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoAttainment {
    pub limit_point: Vec<f64>,
    pub value_at_limit: XReal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Maximizer {
    pub h_hat: Vec<f64>,
    pub value: XReal,
    pub radius: f64,
    pub bounds: Option<KBounds>,
    pub bound_active: bool,
    pub approximate: bool,
    pub no_attainment: Option<NoAttainment>,
    pub evaluations: usize,
}

struct Eval<'p, 'a> {
    problem: &'p OnePeriodProblem<'a>,
    x: f64,
    objective: Objective,
    count: usize,
    approximate: bool,
}

impl Eval<'_, '_> {
    fn h(&self, c: &[f64]) -> Vec<f64> {
        let d = self.problem.dim();
        let mut h = vec![0.0; d];
        for (ci, b) in c.iter().zip(self.problem.basis()) {
            for (hk, bk) in h.iter_mut().zip(b) {
                *hk += ci * bk;
            }
        }
        h
    }

    fn at(&mut self, c: &[f64]) -> XReal {
        self.count += 1;
        let h = self.h(c);
        match self.objective {
            Objective::Psi => self.problem.psi(self.x, &h),
            Objective::ClPsi => {
                let v = self.problem.cl_psi(self.x, &h);
                self.approximate |= v.approximate;
                v.value
            }
        }
    }
}

fn norm(c: &[f64]) -> f64 {
    OnePeriodProblem::norm(c)
}

/// Larger value first, then smaller norm, then lexicographic.
fn better(a: (&XReal, &[f64]), b: (&XReal, &[f64])) -> bool {
    match a.0.cmp(b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match norm(a.1).partial_cmp(&norm(b.1)).unwrap_or(Ordering::Equal) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.1.iter().zip(b.1).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y),
        },
    }
}

/// The best few distinct candidates, best first.
/// The best points found so far, at most one per basin: a point within
/// `sep` of a kept point counts as the same basin.
struct TopK {
    cap: usize,
    items: Vec<(XReal, Vec<f64>, f64)>,
}

impl TopK {
    fn new(cap: usize) -> Self {
        TopK { cap, items: Vec::with_capacity(cap + 1) }
    }

    fn offer(&mut self, v: XReal, c: &[f64], sep: f64) {
        let near = |d: &[f64], s: f64| norm(&c.iter().zip(d).map(|(a, b)| a - b).collect::<Vec<_>>()) <= sep.max(s);
        if self.items.iter().any(|(w, d, s)| near(d, *s) && !better((&v, c), (w, d))) {
            return;
        }
        self.items.retain(|(_, d, s)| !near(d, *s));
        let pos = self
            .items
            .iter()
            .position(|(w, d, _)| better((&v, c), (w, d)))
            .unwrap_or(self.items.len());
        self.items.insert(pos, (v, c.to_vec(), sep));
        self.items.truncate(self.cap);
    }
}

fn uniform(r: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64).collect()
}

impl<'a> OnePeriodProblem<'a> {
    /// Maximizes the objective over `Aff(D) ∩ {|h| <= K1(x)}` (or the radius
    /// from `opts`).
    pub fn maximize(
        &self,
        consts: &OnePeriodConstants,
        x: f64,
        objective: Objective,
        opts: &SearchOptions,
    ) -> Result<Maximizer, OnePeriodError> {
        if self.basis().is_empty() {
            return Ok(self.maximize_in_ball(x, 0.0, objective, opts));
        }
        let bounds = self.k_bounds(consts, x)?;
        let radius = match opts.radius {
            Some(r) => r,
            None if bounds.k1.is_finite() => bounds.k1.value(),
            None => {
                return Err(OnePeriodError::K1Infinite(format!(
                    "Psi({x}, 0) = {} or an infinite constant",
                    self.psi(x, &vec![0.0; self.dim()])
                )))
            }
        };
        let mut m = self.maximize_in_ball(x, radius, objective, opts);
        m.bounds = Some(bounds);
        Ok(m)
    }

    /// Points per direction on a grid of radius `r` at level `level`.
    fn grid_size(&self, k: usize, level: usize, r: f64, opts: &SearchOptions) -> usize {
        let which = if level == 0 {
            0
        } else if r > opts.far_radius {
            2
        } else {
            1
        };
        let (line, plane) = match which {
            0 => (opts.grid, opts.plane_grid.0),
            1 => (opts.fine_grid, opts.plane_grid.1),
            _ => (opts.far_grid, opts.plane_grid.2),
        };
        match k {
            1 => line,
            2 => plane,
            _ => ((line as f64).powf(1.0 / k as f64).ceil() as usize).max(3),
        }
    }

    /// Breakpoint preimages in basis coordinates, with the lines they lie on.
    fn preimages(&self, x: f64, radius: f64) -> Vec<Vec<f64>> {
        let k = self.basis().len();
        let mut lines: Vec<(Vec<f64>, f64)> = Vec::new();
        for j in 0..self.atoms() {
            if !self.vertices().iter().any(|p| p[j] > 0.0) {
                continue;
            }
            let Some(bs) = self.value_function(j).breakpoints() else { continue };
            let z: Vec<f64> = self
                .basis()
                .iter()
                .map(|b| b.iter().zip(&self.ys()[j]).map(|(u, v)| u * v).sum())
                .collect();
            if norm(&z) == 0.0 {
                continue;
            }
            for b in bs {
                lines.push((z.clone(), b - x));
            }
        }
        let mut out = Vec::new();
        match k {
            1 => {
                for (z, rhs) in &lines {
                    out.push(vec![rhs / z[0]]);
                }
            }
            2 => {
                for (z, rhs) in &lines {
                    let n2 = z[0] * z[0] + z[1] * z[1];
                    out.push(vec![rhs * z[0] / n2, rhs * z[1] / n2]);
                }
                if lines.len() <= 300 {
                    for i in 0..lines.len() {
                        for j in i + 1..lines.len() {
                            let ((a, r), (b, s)) = (&lines[i], &lines[j]);
                            let det = a[0] * b[1] - a[1] * b[0];
                            if det.abs() > 1e-14 * norm(a) * norm(b) {
                                out.push(vec![(r * b[1] - s * a[1]) / det, (a[0] * s - b[0] * r) / det]);
                            }
                        }
                    }
                }
            }
            _ => {
                for (z, rhs) in &lines {
                    let n2: f64 = z.iter().map(|v| v * v).sum();
                    out.push(z.iter().map(|v| rhs * v / n2).collect());
                }
            }
        }
        out.retain(|c| c.iter().all(|v| v.is_finite()) && norm(c) <= radius);
        out
    }

    /// Maximizer over `Aff(D) ∩ {|h| <= radius}`.
    pub fn maximize_in_ball(&self, x: f64, radius: f64, objective: Objective, opts: &SearchOptions) -> Maximizer {
        let k = self.basis().len();
        let mut ev = Eval {
            problem: self,
            x,
            objective,
            count: 0,
            approximate: false,
        };
        if k == 0 {
            let value = ev.at(&[]);
            return Maximizer {
                h_hat: vec![0.0; self.dim()],
                value,
                radius,
                bounds: None,
                bound_active: false,
                approximate: ev.approximate,
                no_attainment: None,
                evaluations: ev.count,
            };
        }
        let pre = self.preimages(x, radius);
        let mut top = TopK::new(opts.refine_starts.max(1));
        let zero = vec![0.0; k];
        let v0 = ev.at(&zero);
        top.offer(v0, &zero, 0.0);
        for c in &pre {
            let scale = norm(c).max(1.0);
            // The probes around one preimage share a basin.
            let mut offer = |c: &[f64]| {
                if norm(c) <= radius {
                    let v = ev.at(c);
                    top.offer(v, c, 3e-6 * scale);
                }
            };
            offer(c);
            for eps in [1e-6, 1e-9, 1e-12] {
                for i in 0..k {
                    for s in [-1.0, 1.0] {
                        let mut e = c.clone();
                        e[i] += s * eps * scale;
                        offer(&e);
                    }
                }
            }
        }
        let mut spacing = Vec::new();
        let mut r = radius;
        // Wide balls get coarser level ratios so the last level still
        // reaches min_radius.
        let ratio = if radius > opts.min_radius {
            opts.level_ratio.max((radius / opts.min_radius).powf(1.0 / opts.max_levels.saturating_sub(1).max(1) as f64))
        } else {
            opts.level_ratio
        };
        let mut level = 0;
        while level < opts.max_levels && (level == 0 || r >= opts.min_radius) {
            let n = self.grid_size(k, level, r, opts).max(2);
            let axis = uniform(r, n);
            let step = 2.0 * r / (n - 1) as f64;
            spacing.push((r, step));
            let total = n.pow(k as u32);
            let coords = |flat: usize| {
                let mut f = flat;
                (0..k)
                    .map(|_| {
                        let i = f % n;
                        f /= n;
                        axis[i]
                    })
                    .collect::<Vec<f64>>()
            };
            let vals: Vec<XReal> = (0..total)
                .map(|flat| {
                    let c = coords(flat);
                    if norm(&c) <= radius {
                        ev.at(&c)
                    } else {
                        XReal::NEG_INF
                    }
                })
                .collect();
            // Grid local maxima seed the refinement.
            for flat in 0..total {
                let v = vals[flat];
                if v.is_neg_inf() {
                    continue;
                }
                let mut peak = true;
                let mut stride = 1;
                for _ in 0..k {
                    let i = flat / stride % n;
                    if (i > 0 && vals[flat - stride] > v) || (i + 1 < n && vals[flat + stride] > v) {
                        peak = false;
                        break;
                    }
                    stride *= n;
                }
                if peak {
                    top.offer(v, &coords(flat), step);
                }
            }
            r /= ratio;
            level += 1;
        }
        let step_for = |c: &[f64]| {
            let n = norm(c);
            spacing
                .iter()
                .rev()
                .find(|(r, _)| *r >= n)
                .map_or(spacing[0].1, |s| s.1)
        };
        let mut best = (top.items[0].0, top.items[0].1.clone());
        for (v0, c0, _) in top.items {
            if v0.is_neg_inf() {
                continue;
            }
            let step = step_for(&c0);
            let (v, c) = self.compass(&mut ev, v0, c0, step, radius, opts.tol);
            if better((&v, &c), (&best.0, &best.1)) {
                best = (v, c);
            }
        }
        debug_assert!(best.0 >= v0);
        let h_hat = ev.h(&best.1);
        let no_attainment = if objective == Objective::Psi {
            self.limit_point(&mut ev, &best, &pre)
        } else {
            None
        };
        Maximizer {
            bound_active: norm(&best.1) >= radius * (1.0 - 1e-9),
            h_hat,
            value: best.0,
            radius,
            bounds: None,
            approximate: ev.approximate,
            no_attainment,
            evaluations: ev.count,
        }
    }

    fn compass(&self, ev: &mut Eval, mut v: XReal, mut c: Vec<f64>, step0: f64, radius: f64, tol: f64) -> (XReal, Vec<f64>) {
        let k = c.len();
        let floor = |c: &[f64]| tol * norm(c).max(1.0);
        let mut step = step0.max(floor(&c));
        let mut budget = 4000usize;
        while step >= floor(&c) && budget > 0 {
            let mut moved = false;
            'dirs: for i in 0..k {
                for s in [1.0, -1.0] {
                    let mut t = c.clone();
                    t[i] += s * step;
                    if norm(&t) > radius {
                        continue;
                    }
                    budget = budget.saturating_sub(1);
                    let tv = ev.at(&t);
                    if tv > v {
                        v = tv;
                        c = t;
                        moved = true;
                        break 'dirs;
                    }
                }
            }
            if moved {
                step *= 2.0;
            } else {
                step /= 2.0;
            }
        }
        (v, c)
    }

    /// A breakpoint preimage next to the best point with a clearly lower
    /// objective value: the supremum is a one-sided limit there.
    fn limit_point(&self, ev: &mut Eval, best: &(XReal, Vec<f64>), pre: &[Vec<f64>]) -> Option<NoAttainment> {
        let (bv, bc) = best;
        let nearest = pre
            .iter()
            .map(|p| (norm(&p.iter().zip(bc).map(|(a, b)| a - b).collect::<Vec<_>>()), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))?;
        let (dist, p) = nearest;
        if dist == 0.0 || dist > 1e-6 * norm(p).max(1.0) {
            return None;
        }
        let at = ev.at(p);
        (at + XReal::new(1e-9) < *bv).then(|| NoAttainment {
            limit_point: ev.h(p),
            value_at_limit: at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::constants::N0_CAP;
    use super::super::tests::{ce_problem, ce_utility};
    use super::*;

    #[test]
    fn one_start_per_basin() {
        let mut top = TopK::new(2);
        top.offer(XReal::new(2.0), &[-2.5], 3e-6);
        top.offer(XReal::new(2.1), &[-2.5 + 1e-6], 3e-6);
        top.offer(XReal::new(2.05), &[-2.5 - 1e-6], 3e-6);
        top.offer(XReal::new(1.9), &[-0.8], 0.07);
        top.offer(XReal::new(1.95), &[-0.75], 0.07);
        let starts: Vec<f64> = top.items.iter().map(|(_, c, _)| c[0]).collect();
        assert_eq!(starts, vec![-2.5 + 1e-6, -0.75]);
    }

    #[test]
    fn ce_closure_maximizer_is_zero() {
        let u = ce_utility();
        let p = ce_problem(&u, 0.6);
        let c = p.constants(None, N0_CAP).unwrap();
        let m = p.maximize(&c, 0.0, Objective::ClPsi, &SearchOptions::default()).unwrap();
        assert_eq!(m.h_hat, vec![0.0]);
        assert_eq!(m.value, XReal::ONE);
        assert!(!m.bound_active);
    }

    #[test]
    fn ce_sup_is_not_attained() {
        let u = ce_utility();
        let p = ce_problem(&u, 0.6);
        let c = p.constants(None, N0_CAP).unwrap();
        let m = p.maximize(&c, 0.0, Objective::Psi, &SearchOptions::default()).unwrap();
        assert!((m.value.value() - 0.6).abs() < 1e-6, "{}", m.value);
        let na = m.no_attainment.expect("diagnostic");
        assert_eq!(na.limit_point, vec![0.0]);
        assert_eq!(na.value_at_limit, XReal::ZERO);
    }
}
