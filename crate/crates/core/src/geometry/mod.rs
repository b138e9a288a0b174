//! Exact polyhedral predicates on small point sets.
//!
//! Inputs are doubles; every predicate works on their exact binary values as
//! rationals, so yes/no answers carry no tolerance.

pub mod simplex;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use simplex::{LpOutcome, Q};

/// Largest arrangement handed to [`feasible_sign_patterns`].
pub const MAX_NORMALS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty point set")]
    Empty,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("{0} normals exceed the limit of {MAX_NORMALS}")]
    TooManyNormals(usize),
    #[error("dimension mismatch")]
    Dimension,
}

/// Exact rational value of a finite double.
pub fn q_of(x: f64) -> Result<Q, GeometryError> {
    Q::from_float(x).ok_or(GeometryError::NonFinite)
}

pub fn q_vec(v: &[f64]) -> Result<Vec<Q>, GeometryError> {
    v.iter().map(|&x| q_of(x)).collect()
}

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
}

fn sub(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// `offset + span(basis)` with a pairwise orthogonal rational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    pub ambient: usize,
    pub offset: Vec<Q>,
    pub basis: Vec<Vec<Q>>,
}

/// Removes from `v` its components along the orthogonal family `basis`.
fn reduce(v: &[Q], basis: &[Vec<Q>]) -> Vec<Q> {
    let mut r = v.to_vec();
    for b in basis {
        let bb = dot(b, b);
        let coef = dot(&r, b) / bb;
        if !coef.is_zero() {
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= &coef * bi;
            }
        }
    }
    r
}

impl AffineSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, p: &[Q]) -> bool {
        p.len() == self.ambient && reduce(&sub(p, &self.offset), &self.basis).iter().all(Zero::is_zero)
    }

    /// True when the subspace passes through the origin.
    pub fn is_linear(&self) -> bool {
        self.contains(&vec![Q::zero(); self.ambient])
    }

    pub fn same_as(&self, other: &AffineSubspace) -> bool {
        self.ambient == other.ambient
            && self.dim() == other.dim()
            && self.contains(&other.offset)
            && other.basis.iter().all(|b| {
                let p: Vec<Q> = self.offset.iter().zip(b).map(|(o, v)| o + v).collect();
                self.contains(&p)
            })
    }

    /// Floating-point membership: distance to the subspace at most
    /// `tol * (1 + |p|)`.
    pub fn contains_f64(&self, p: &[f64], tol: f64) -> bool {
        if p.len() != self.ambient {
            return false;
        }
        let mut r: Vec<f64> = p.iter().zip(&self.offset).map(|(a, o)| a - to_f64(o)).collect();
        for u in self.orthonormal_f64() {
            let c: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
            for (ri, ui) in r.iter_mut().zip(&u) {
                *ri -= c * ui;
            }
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        norm(&r) <= tol * (1.0 + norm(p))
    }

    /// Orthonormal double basis of the direction space.
    pub fn orthonormal_f64(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for b in &self.basis {
            let mut v: Vec<f64> = b.iter().map(to_f64).collect();
            // Re-orthogonalize in floating point against the rounded vectors.
            for u in &out {
                let c: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            out.push(v.into_iter().map(|a| a / n).collect());
        }
        out
    }
}

/// Smallest affine subspace containing all points.
pub fn affine_hull(points: &[Vec<Q>]) -> Result<AffineSubspace, GeometryError> {
    let first = points.first().ok_or(GeometryError::Empty)?;
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(GeometryError::Dimension);
    }
    let mut basis: Vec<Vec<Q>> = Vec::new();
    for p in &points[1..] {
        let r = reduce(&sub(p, first), &basis);
        if r.iter().any(|v| !v.is_zero()) {
            basis.push(r);
        }
    }
    Ok(AffineSubspace {
        ambient: d,
        offset: first.clone(),
        basis,
    })
}

pub fn affine_hull_f64(points: &[Vec<f64>]) -> Result<AffineSubspace, GeometryError> {
    let pts = points.iter().map(|p| q_vec(p)).collect::<Result<Vec<_>, _>>()?;
    affine_hull(&pts)
}

/// Value of `max t` s.t. `sum l_i y_i = 0`, `sum l_i = 1`, `l_i >= t >= 0`;
/// `None` when 0 is outside the convex hull.
pub fn ri_margin(points: &[Vec<Q>]) -> Result<Option<Q>, GeometryError> {
    let n = points.len();
    if n == 0 {
        return Err(GeometryError::Empty);
    }
    let d = points[0].len();
    // Variables: mu_1..mu_n, t. Substituting l_i = mu_i + t.
    let mut a = Vec::with_capacity(d + 1);
    let mut b = Vec::with_capacity(d + 1);
    for k in 0..d {
        let mut row: Vec<Q> = points.iter().map(|p| p[k].clone()).collect();
        row.push(points.iter().fold(Q::zero(), |acc, p| acc + &p[k]));
        a.push(row);
        b.push(Q::zero());
    }
    let mut row = vec![Q::one(); n];
    row.push(q_int(n as i64));
    a.push(row);
    b.push(Q::one());
    let mut c = vec![Q::zero(); n];
    c.push(Q::one());
    Ok(match simplex::solve(&a, &b, &c) {
        LpOutcome::Optimal { value, .. } => Some(value),
        _ => None,
    })
}

/// `0 ∈ ri(conv(points))`, decided exactly.
pub fn zero_in_rel_interior(points: &[Vec<Q>]) -> Result<bool, GeometryError> {
    Ok(ri_margin(points)?.is_some_and(|t| t.is_positive()))
}

pub fn zero_in_rel_interior_f64(points: &[Vec<f64>]) -> Result<bool, GeometryError> {
    let pts = points.iter().map(|p| q_vec(p)).collect::<Result<Vec<_>, _>>()?;
    zero_in_rel_interior(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Minus,
    Zero,
    Plus,
}

impl Sign {
    pub fn of(q: &Q) -> Sign {
        if q.is_positive() {
            Sign::Plus
        } else if q.is_negative() {
            Sign::Minus
        } else {
            Sign::Zero
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Zero => Sign::Zero,
            Sign::Plus => Sign::Minus,
        }
    }

    fn factor(self) -> i64 {
        match self {
            Sign::Minus => -1,
            Sign::Zero => 0,
            Sign::Plus => 1,
        }
    }
}

/// Exact test for a direction `delta != 0` with `sign(delta.w_j) = sigma_j`
/// on the listed normals. Returns a witness direction when one exists.
pub fn pattern_witness(normals: &[Vec<Q>], sigma: &[Sign]) -> Option<Vec<Q>> {
    let k = normals.first().map_or(0, Vec::len);
    if sigma.iter().all(|s| *s == Sign::Zero) {
        return nullspace_vector(normals, k);
    }
    // Variables: dp (k), dm (k), s, surplus e_j for nonzero signs, slack u (k), v (k).
    let nz: Vec<usize> = (0..sigma.len()).filter(|&j| sigma[j] != Sign::Zero).collect();
    let n = 2 * k + 1 + nz.len() + 2 * k;
    let s_col = 2 * k;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (j, w) in normals.iter().enumerate() {
        let f = q_int(sigma[j].factor());
        let mut row = vec![Q::zero(); n];
        for i in 0..k {
            let coef = if sigma[j] == Sign::Zero { w[i].clone() } else { &f * &w[i] };
            row[k + i] = -coef.clone();
            row[i] = coef;
        }
        if let Some(pos) = nz.iter().position(|&x| x == j) {
            row[s_col] = -Q::one();
            row[s_col + 1 + pos] = -Q::one();
        }
        a.push(row);
        b.push(Q::zero());
    }
    let slack0 = s_col + 1 + nz.len();
    for i in 0..2 * k {
        let mut row = vec![Q::zero(); n];
        row[i] = Q::one();
        row[slack0 + i] = Q::one();
        a.push(row);
        b.push(Q::one());
    }
    let mut c = vec![Q::zero(); n];
    c[s_col] = Q::one();
    match simplex::solve(&a, &b, &c) {
        LpOutcome::Optimal { value, x } if value.is_positive() => {
            Some((0..k).map(|i| &x[i] - &x[k + i]).collect())
        }
        _ => None,
    }
}

/// A nonzero `delta` orthogonal to every normal, if the normals do not span.
fn nullspace_vector(normals: &[Vec<Q>], k: usize) -> Option<Vec<Q>> {
    if k == 0 {
        return None;
    }
    let hull_basis = {
        let mut basis: Vec<Vec<Q>> = Vec::new();
        for w in normals {
            let r = reduce(w, &basis);
            if r.iter().any(|v| !v.is_zero()) {
                basis.push(r);
            }
        }
        basis
    };
    if hull_basis.len() == k {
        return None;
    }
    (0..k).find_map(|i| {
        let mut e = vec![Q::zero(); k];
        e[i] = Q::one();
        let r = reduce(&e, &hull_basis);
        r.iter().any(|v| !v.is_zero()).then_some(r)
    })
}

/// All sign vectors realized by some nonzero direction on the arrangement of
/// hyperplanes `delta.w_j = 0`, in lexicographic order.
pub fn feasible_sign_patterns(normals: &[Vec<Q>]) -> Result<Vec<Vec<Sign>>, GeometryError> {
    if normals.len() > MAX_NORMALS {
        return Err(GeometryError::TooManyNormals(normals.len()));
    }
    let k = normals.first().map_or(0, Vec::len);
    if normals.iter().any(|w| w.len() != k) {
        return Err(GeometryError::Dimension);
    }
    let mut out = Vec::new();
    if normals.is_empty() {
        return Ok(out);
    }
    // Depth-first over prefixes; a prefix without a realizing direction has
    // no feasible extension.
    let mut stack: Vec<Vec<Sign>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == normals.len() {
            out.push(prefix);
            continue;
        }
        for s in [Sign::Plus, Sign::Zero, Sign::Minus] {
            let mut next = prefix.clone();
            next.push(s);
            if pattern_witness(&normals[..next.len()], &next).is_some() {
                stack.push(next);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn feasible_sign_patterns_f64(normals: &[Vec<f64>]) -> Result<Vec<Vec<Sign>>, GeometryError> {
    let ws = normals.iter().map(|w| q_vec(w)).collect::<Result<Vec<_>, _>>()?;
    feasible_sign_patterns(&ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<Q>> {
        v.iter().map(|p| q_vec(p).unwrap()).collect()
    }

    #[test]
    fn hull_examples() {
        let h = affine_hull(&pts(&[&[-1.0], &[1.0]])).unwrap();
        assert_eq!(h.dim(), 1);
        assert!(h.is_linear());
        let h = affine_hull(&pts(&[&[1.0, 1.0]])).unwrap();
        assert_eq!(h.dim(), 0);
        assert!(!h.is_linear());
        let h = affine_hull(&pts(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]])).unwrap();
        assert_eq!(h.dim(), 1);
        assert!(h.contains(&q_vec(&[-7.5, 0.0]).unwrap()));
        assert!(!h.contains(&q_vec(&[0.0, 1e-300]).unwrap()));
        assert_eq!(affine_hull(&[]), Err(GeometryError::Empty));
    }

    #[test]
    fn ri_examples() {
        assert!(zero_in_rel_interior(&pts(&[&[-1.0], &[1.0]])).unwrap());
        assert!(!zero_in_rel_interior(&pts(&[&[1.0], &[2.0]])).unwrap());
        assert!(zero_in_rel_interior(&pts(&[&[0.0]])).unwrap());
        // 0 on the boundary of a segment
        assert!(!zero_in_rel_interior(&pts(&[&[0.0], &[1.0]])).unwrap());
        // 0 on an edge of a triangle
        assert!(!zero_in_rel_interior(&pts(&[&[-1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]])).unwrap());
        assert!(zero_in_rel_interior(&pts(&[&[-1.0, -1.0], &[1.0, -1.0], &[0.0, 1.0]])).unwrap());
    }

    #[test]
    fn sign_pattern_examples() {
        let one = feasible_sign_patterns(&pts(&[&[1.0]])).unwrap();
        assert_eq!(one, vec![vec![Sign::Minus], vec![Sign::Plus]]);
        let two = feasible_sign_patterns(&pts(&[&[1.0, 1.0], &[1.0, -1.0]])).unwrap();
        assert_eq!(two.len(), 8);
        assert!(!two.contains(&vec![Sign::Zero, Sign::Zero]));
        let par = feasible_sign_patterns(&pts(&[&[1.0, 0.0], &[2.0, 0.0]])).unwrap();
        assert!(par.iter().all(|s| s[0] == s[1]));
        assert!(par.contains(&vec![Sign::Zero, Sign::Zero]));
        assert!(par.contains(&vec![Sign::Plus, Sign::Plus]));
        assert!(!par.contains(&vec![Sign::Plus, Sign::Minus]));
    }

    #[test]
    fn guard() {
        let many: Vec<Vec<Q>> = (0..13).map(|i| q_vec(&[i as f64]).unwrap()).collect();
        assert_eq!(
            feasible_sign_patterns(&many),
            Err(GeometryError::TooManyNormals(13))
        );
    }
}
