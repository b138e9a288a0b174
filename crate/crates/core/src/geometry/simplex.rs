//! Dense two-phase simplex over `BigRational` with Bland's rule.
//!
//! Solves `max c.x  s.t.  A x = b, x >= 0`. Problems here have a few dozen
//! variables at most, so a full tableau is fine.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: Q, x: Vec<Q> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<&Q> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    rhs: Vec<Q>,
    basis: Vec<usize>,
    /// Columns that may not enter (artificials in phase two).
    blocked: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        self.rhs[r] = &self.rhs[r] / &p;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for (v, pv) in self.rows[i].iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            self.rhs[i] -= &f * &prhs;
        }
        self.basis[r] = c;
    }

    fn reduced_cost(&self, cost: &[Q], j: usize) -> Q {
        let mut z = cost[j].clone();
        for (i, &b) in self.basis.iter().enumerate() {
            if !cost[b].is_zero() && !self.rows[i][j].is_zero() {
                z -= &cost[b] * &self.rows[i][j];
            }
        }
        z
    }

    /// Returns false when the objective is unbounded.
    fn optimize(&mut self, cost: &[Q]) -> bool {
        let ncols = cost.len();
        loop {
            let entering = (0..ncols)
                .find(|&j| !self.blocked[j] && !self.basis.contains(&j) && self.reduced_cost(cost, j).is_positive());
            let Some(c) = entering else { return true };
            let mut best: Option<(Q, usize, usize)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][c];
                if a.is_positive() {
                    let ratio = &self.rhs[r] / a;
                    let better = match &best {
                        None => true,
                        Some((q, _, bv)) => ratio < *q || (ratio == *q && self.basis[r] < *bv),
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            match best {
                None => return false,
                Some((_, r, _)) => self.pivot(r, c),
            }
        }
    }

    fn objective(&self, cost: &[Q]) -> Q {
        self.basis
            .iter()
            .zip(&self.rhs)
            .fold(Q::zero(), |acc, (&b, v)| acc + &cost[b] * v)
    }
}

/// `max c.x` subject to `a x = b`, `x >= 0`.
pub fn solve(a: &[Vec<Q>], b: &[Q], c: &[Q]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, (row, bi)) in a.iter().zip(b).enumerate() {
        assert_eq!(row.len(), n, "row {i} has wrong width");
        let flip = bi.is_negative();
        let mut r: Vec<Q> = row.iter().map(|v| if flip { -v } else { v.clone() }).collect();
        r.extend((0..m).map(|k| if k == i { Q::one() } else { Q::zero() }));
        rows.push(r);
        rhs.push(if flip { -bi } else { bi.clone() });
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
        blocked: vec![false; n + m],
    };
    let phase1: Vec<Q> = (0..n + m)
        .map(|j| if j >= n { -Q::one() } else { Q::zero() })
        .collect();
    t.optimize(&phase1);
    if t.objective(&phase1).is_negative() {
        return LpOutcome::Infeasible;
    }
    // Drive zero-valued artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| !t.rows[r][j].is_zero()) {
                Some(j) => t.pivot(r, j),
                None => {
                    t.rows.remove(r);
                    t.rhs.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    for j in n..n + m {
        t.blocked[j] = true;
    }
    let mut cost: Vec<Q> = c.to_vec();
    cost.extend((0..m).map(|_| Q::zero()));
    if !t.optimize(&cost) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); n];
    for (&bv, v) in t.basis.iter().zip(&t.rhs) {
        if bv < n {
            x[bv] = v.clone();
        }
    }
    LpOutcome::Optimal {
        value: t.objective(&cost),
        x,
    }
}
