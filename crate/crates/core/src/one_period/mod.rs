//! One-period robust problem: `Psi(x, h) = min_p E_p V(x + h.Y)` over a finite
//! list of prior vertices, its closure, the coercivity constants and a
//! global candidate-search maximizer.

mod constants;
mod search;

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{self, q_vec, AffineSubspace, Sign, MAX_NORMALS};
use crate::structure::{self, Alpha};
use crate::utility::ValueFunction;
use crate::xreal::XReal;

pub use constants::{KBounds, OnePeriodConstants, K_SATURATION, N0_CAP};
pub use search::{Maximizer, NoAttainment, Objective, SearchOptions};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OnePeriodError {
    #[error("problem shape: {0}")]
    Shape(String),
    #[error("n0* not found below the cap {0}")]
    N0NotFound(u64),
    #[error("K1 is infinite: {0}")]
    K1Infinite(String),
    #[error("no valid alpha for p*")]
    NoAlpha,
}

/// Closure value with a flag for the sampled fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClValue {
    pub value: XReal,
    pub approximate: bool,
}

/// Atoms `Y_j`, prior vertices over atoms, the designated `p*`, one value
/// function and one `C_j` per atom, and the growth exponents.
pub struct OnePeriodProblem<'a> {
    ys: Vec<Vec<f64>>,
    vertices: Vec<Vec<f64>>,
    p_star: Vec<f64>,
    v: Vec<&'a dyn ValueFunction>,
    c: Vec<XReal>,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub eta: f64,
    span: AffineSubspace,
    basis: Vec<Vec<f64>>,
    patterns: Mutex<HashMap<Vec<usize>, Vec<Vec<Sign>>>>,
}

impl<'a> OnePeriodProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ys: Vec<Vec<f64>>,
        vertices: Vec<Vec<f64>>,
        p_star: Vec<f64>,
        v: Vec<&'a dyn ValueFunction>,
        c: Vec<XReal>,
        gamma_lo: f64,
        gamma_hi: f64,
        eta: f64,
    ) -> Result<Self, OnePeriodError> {
        let m = ys.len();
        if m == 0 {
            return Err(OnePeriodError::Shape("no atoms".into()));
        }
        let d = ys[0].len();
        if ys.iter().any(|y| y.len() != d || y.iter().any(|v| !v.is_finite())) {
            return Err(OnePeriodError::Shape("atoms must be finite vectors of one length".into()));
        }
        if v.len() != m || c.len() != m || p_star.len() != m {
            return Err(OnePeriodError::Shape("one value function, C and p* entry per atom".into()));
        }
        if vertices.is_empty() || vertices.iter().any(|p| p.len() != m) {
            return Err(OnePeriodError::Shape("vertices must be nonempty and cover every atom".into()));
        }
        for p in vertices.iter().chain(std::iter::once(&p_star)) {
            if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(OnePeriodError::Shape("probability vectors must be nonnegative and sum to 1".into()));
            }
        }
        let charged: Vec<Vec<f64>> = (0..m)
            .filter(|&j| vertices.iter().any(|p| p[j] > 0.0))
            .map(|j| ys[j].clone())
            .chain(std::iter::once(vec![0.0; d]))
            .collect();
        let span = geometry::affine_hull_f64(&charged).map_err(|e| OnePeriodError::Shape(e.to_string()))?;
        let basis = span.orthonormal_f64();
        Ok(OnePeriodProblem {
            ys,
            vertices,
            p_star,
            v,
            c,
            gamma_lo,
            gamma_hi,
            eta,
            span,
            basis,
            patterns: Mutex::new(HashMap::new()),
        })
    }

    pub fn atoms(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }

    pub fn ys(&self) -> &[Vec<f64>] {
        &self.ys
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }

    pub fn c(&self) -> &[XReal] {
        &self.c
    }

    pub fn value_function(&self, j: usize) -> &dyn ValueFunction {
        self.v[j]
    }

    /// Linear span of the support, which is `Aff(D)` when `0` lies in it.
    pub fn span(&self) -> &AffineSubspace {
        &self.span
    }

    /// Orthonormal basis of [`Self::span`].
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn alpha_star(&self) -> Option<Alpha> {
        structure::alpha_for(&self.ys, &self.p_star, &self.span)
    }

    fn arg(&self, j: usize, x: f64, h: &[f64]) -> f64 {
        x + h.iter().zip(&self.ys[j]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn charged(&self, j: usize) -> bool {
        self.vertices.iter().any(|p| p[j] > 0.0)
    }

    fn combine(&self, vals: &[XReal]) -> XReal {
        self.vertices
            .iter()
            .map(|p| XReal::weighted_sum(p.iter().copied().zip(vals.iter().copied())))
            .min()
            .expect("nonempty vertex list")
    }

    /// `E_p V(x + h.Y)`.
    pub fn psi_p(&self, p: &[f64], x: f64, h: &[f64]) -> XReal {
        XReal::weighted_sum(
            (0..self.atoms())
                .filter(|&j| p[j] != 0.0)
                .map(|j| (p[j], self.v[j].value(self.arg(j, x, h)))),
        )
    }

    /// Minimum of [`Self::psi_p`] over the vertices.
    pub fn psi(&self, x: f64, h: &[f64]) -> XReal {
        let vals: Vec<XReal> = (0..self.atoms())
            .map(|j| {
                if self.charged(j) {
                    self.v[j].value(self.arg(j, x, h))
                } else {
                    XReal::ZERO
                }
            })
            .collect();
        self.combine(&vals)
    }

    /// Left limit, value and right limit of `V_j` at its argument, and
    /// whether they differ.
    fn limits(&self, j: usize, a: f64) -> ([XReal; 3], bool) {
        let f = self.v[j];
        let val = f.value(a);
        if !f.may_jump_at(a) {
            return ([val, val, val], false);
        }
        let l = f.left_limit(a);
        let r = f.right_limit(a);
        ([l, val, r], !(l == val && val == r))
    }

    /// Closure of `Psi` at `(x, h)`: the largest directional limit over the
    /// cells of the arrangement `delta.(1, Y_j) = 0` of atoms sitting on a
    /// discontinuity of their value function.
    pub fn cl_psi(&self, x: f64, h: &[f64]) -> ClValue {
        let mut base = vec![XReal::ZERO; self.atoms()];
        let mut lims = Vec::new();
        let mut active = Vec::new();
        for j in 0..self.atoms() {
            if !self.charged(j) {
                continue;
            }
            let (l, jumps) = self.limits(j, self.arg(j, x, h));
            base[j] = l[1];
            if jumps {
                active.push(j);
                lims.push(l);
            }
        }
        if active.is_empty() {
            return ClValue { value: self.combine(&base), approximate: false };
        }
        if active.len() > MAX_NORMALS {
            return ClValue { value: self.sampled_limsup(x, h, 10_000, 0x00c1_05e), approximate: true };
        }
        let patterns = self.patterns_for(&active);
        let mut vals = base.clone();
        let mut best = XReal::NEG_INF;
        for sigma in &patterns {
            for (k, &j) in active.iter().enumerate() {
                vals[j] = match sigma[k] {
                    Sign::Minus => lims[k][0],
                    Sign::Zero => lims[k][1],
                    Sign::Plus => lims[k][2],
                };
            }
            best = best.max(self.combine(&vals));
        }
        ClValue { value: best, approximate: false }
    }

    fn patterns_for(&self, active: &[usize]) -> Vec<Vec<Sign>> {
        if let Some(p) = self.patterns.lock().expect("pattern cache").get(active) {
            return p.clone();
        }
        let normals: Vec<Vec<f64>> = active
            .iter()
            .map(|&j| std::iter::once(1.0).chain(self.ys[j].iter().copied()).collect())
            .collect();
        let ws: Vec<_> = normals.iter().map(|w| q_vec(w).expect("finite atoms")).collect();
        let pats = geometry::feasible_sign_patterns(&ws).expect("guarded above");
        self.patterns
            .lock()
            .expect("pattern cache")
            .insert(active.to_vec(), pats.clone());
        pats
    }

    /// `max Psi` over random perturbations of shrinking radius, keeping the
    /// last tenth of the samples.
    pub fn sampled_limsup(&self, x: f64, h: &[f64], samples: usize, seed: u64) -> XReal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = h.len();
        let (r0, r1) = (1e-3f64, 1e-12f64);
        let tail = samples - samples / 10;
        let mut best = XReal::NEG_INF;
        let mut hp = vec![0.0; d];
        for i in 0..samples {
            let r = r0 * (r1 / r0).powf(i as f64 / (samples - 1).max(1) as f64);
            let dx = rng.gen_range(-1.0..1.0) * r;
            for k in 0..d {
                hp[k] = h[k] + rng.gen_range(-1.0..1.0) * r;
            }
            let v = self.psi(x + dx, &hp);
            if i >= tail {
                best = best.max(v);
            }
        }
        best
    }

    /// `sum_j p*_j Cl(V_j)(x + h.Y_j)`
    pub fn psi_cl_p_star(&self, x: f64, h: &[f64]) -> XReal {
        XReal::weighted_sum(
            (0..self.atoms()).map(|j| (self.p_star[j], self.v[j].right_limit(self.arg(j, x, h)))),
        )
    }

    pub fn norm(h: &[f64]) -> f64 {
        h.iter().fold(0.0, |acc: f64, v| acc.hypot(*v))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::utility::{Piecewise, PiecewiseSpec};

    pub(crate) fn ce_utility() -> Piecewise {
        Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(
                r#"{"breakpoints":[0],
                "segments":[{"kind":"affine","slope":1,"intercept":0},{"kind":"constant","value":1}],
                "values":["left"]}"#,
            )
            .unwrap(),
        )
        .unwrap()
    }

    pub(crate) fn ce_problem(u: &Piecewise, q: f64) -> OnePeriodProblem<'_> {
        OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![q, 1.0 - q]],
            vec![q, 1.0 - q],
            vec![u, u],
            vec![XReal::ONE, XReal::ONE],
            0.5,
            1.0,
            0.75,
        )
        .unwrap()
    }

    #[test]
    fn psi_examples() {
        let u = ce_utility();
        let p = ce_problem(&u, 0.6);
        assert_eq!(p.psi_p(&[0.6, 0.4], 0.0, &[0.5]), XReal::new(0.6 - 0.4 * 0.5));
        assert_eq!(p.psi(0.0, &[0.0]), XReal::ZERO);
        assert_eq!(p.cl_psi(0.0, &[0.0]).value, XReal::ONE);
        assert_eq!(p.cl_psi(0.0, &[0.5]).value, p.psi(0.0, &[0.5]));
    }

    #[test]
    fn norm_does_not_overflow() {
        let n = OnePeriodProblem::norm(&[3e300, 4e300]);
        assert!((n - 5e300).abs() <= 1e-15 * 5e300);
        assert_eq!(OnePeriodProblem::norm(&[3.0, -4.0]), 5.0);
    }

    #[test]
    fn neg_inf_atom() {
        let plateau = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(r#"{"segments":[{"kind":"neg_inf"}]}"#).unwrap(),
        )
        .unwrap();
        let u = ce_utility();
        let p = OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.6, 0.4]],
            vec![0.6, 0.4],
            vec![&u, &plateau],
            vec![XReal::ONE, XReal::ONE],
            0.5,
            1.0,
            0.75,
        )
        .unwrap();
        assert!(p.psi(0.0, &[1.0]).is_neg_inf());
    }

    #[test]
    fn vertex_min() {
        let zero = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(r#"{"segments":[{"kind":"constant","value":0}]}"#).unwrap(),
        )
        .unwrap();
        let one = Piecewise::new(
            &serde_json::from_str::<PiecewiseSpec>(r#"{"segments":[{"kind":"constant","value":1}]}"#).unwrap(),
        )
        .unwrap();
        let p = OnePeriodProblem::new(
            vec![vec![1.0], vec![-1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            vec![&zero, &one],
            vec![XReal::ZERO, XReal::ZERO],
            0.5,
            1.0,
            0.75,
        )
        .unwrap();
        assert_eq!(p.psi(0.3, &[2.0]), XReal::ZERO);
    }
}
