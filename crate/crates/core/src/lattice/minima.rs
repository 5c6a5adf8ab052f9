//! Euclidean successive minima of a lattice given by a column basis.
//!
//! The basis is LLL-reduced first. Then the minima are found one at a time:
//! with the first `h` columns spanning the saturated sublattice of the minima
//! found so far, a Schnorr–Euchner enumeration finds the shortest vector whose
//! coordinates on the remaining columns are not all zero. The new vector is
//! folded into the head by a unimodular change of the tail columns.

use log::warn;
use serde::Serialize;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Relative tolerance for reported minima.
pub const TOL_SV: f64 = 1e-9;
/// Condition number above which a warning is logged.
pub const COND_WARN: f64 = 1e12;
/// Enumeration nodes allowed per minimum before giving up.
pub const NODE_BUDGET: u64 = 20_000_000;

const TIE_REL: f64 = 1e-12;
const LLL_DELTA: f64 = 0.99;
const MAX_COEFF: f64 = 4.0e15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimaVector {
    /// δ₁ ≤ … ≤ δ_k
    pub values: Vec<f64>,
    /// Integer coordinates (w.r.t. the input basis) of vectors realizing each minimum.
    pub coords: Vec<Vec<i64>>,
}

impl MinimaVector {
    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("nonempty")
    }

    pub fn product(&self) -> f64 {
        self.values.iter().product()
    }
}

/// Working state: the input basis B and a unimodular U; current basis is B·U.
struct Reducer<'a> {
    basis: &'a Matrix,
    k: usize,
    u: Vec<Vec<i64>>, // columns of U
    vecs: Vec<Vec<f64>>,
    mu: Vec<Vec<f64>>,
    bstar: Vec<f64>,
}

impl<'a> Reducer<'a> {
    fn new(basis: &'a Matrix) -> Self {
        let k = basis.size();
        let u = (0..k)
            .map(|j| (0..k).map(|i| i64::from(i == j)).collect())
            .collect();
        let mut r = Reducer {
            basis,
            k,
            u,
            vecs: vec![vec![0.0; k]; k],
            mu: vec![vec![0.0; k]; k],
            bstar: vec![0.0; k],
        };
        r.refresh();
        r
    }

    fn vector_of(&self, coeffs: &[i64]) -> Vec<f64> {
        let c: Vec<f64> = coeffs.iter().map(|&x| x as f64).collect();
        self.basis.mul_vec(&c)
    }

    /// Recomputes column vectors from B·U and the Gram–Schmidt data.
    fn refresh(&mut self) {
        for j in 0..self.k {
            self.vecs[j] = self.vector_of(&self.u[j]);
        }
        self.gram_schmidt();
    }

    fn gram_schmidt(&mut self) {
        let k = self.k;
        let mut star: Vec<Vec<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            let mut v = self.vecs[i].clone();
            for j in 0..i {
                let m = dot(&self.vecs[i], &star[j]) / self.bstar[j];
                self.mu[i][j] = m;
                for (a, b) in v.iter_mut().zip(&star[j]) {
                    *a -= m * b;
                }
            }
            self.mu[i][i] = 1.0;
            self.bstar[i] = dot(&v, &v);
            star.push(v);
        }
    }

    fn add_multiple(&mut self, target: usize, src: usize, r: i64) -> Result<()> {
        for i in 0..self.k {
            let val = self.u[src][i]
                .checked_mul(r)
                .and_then(|p| self.u[target][i].checked_sub(p))
                .ok_or_else(|| Error::NumericOverflow("basis transform entry overflowed i64".into()))?;
            self.u[target][i] = val;
        }
        Ok(())
    }

    /// LLL with no swaps across position `barrier` (swaps (j-1, j) with
    /// j == barrier are skipped).
    fn lll(&mut self, barrier: usize) -> Result<()> {
        let k = self.k;
        let mut j = 1;
        let mut iterations = 0u64;
        while j < k {
            iterations += 1;
            if iterations > 100_000 {
                return Err(Error::NumericOverflow("LLL did not converge".into()));
            }
            for l in (0..j).rev() {
                let m = self.mu[j][l];
                if m.abs() > 0.5 {
                    if m.abs() > MAX_COEFF {
                        return Err(Error::NumericOverflow(format!(
                            "size-reduction coefficient {m:e} too large"
                        )));
                    }
                    self.add_multiple(j, l, m.round() as i64)?;
                    self.refresh();
                }
            }
            let lovasz = self.bstar[j] >= (LLL_DELTA - self.mu[j][j - 1].powi(2)) * self.bstar[j - 1];
            if j != barrier && !lovasz {
                self.u.swap(j - 1, j);
                self.refresh();
                j = j.saturating_sub(1).max(1);
            } else {
                j += 1;
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Search<'r, 'a> {
    red: &'r Reducer<'a>,
    head: usize,
    best_sq: f64,
    best: Option<(Vec<i64>, Vec<i64>)>, // (local coeffs, input-basis coords)
    x: Vec<i64>,
    nodes: u64,
}

impl Search<'_, '_> {
    fn global_coords(&self, local: &[i64]) -> Vec<i64> {
        let k = self.red.k;
        let mut out = vec![0i64; k];
        for (j, &c) in local.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(&self.red.u[j]) {
                *o += c * u;
            }
        }
        out
    }

    fn consider(&mut self) {
        let coords = self.global_coords(&self.x);
        let v = self.red.vector_of(&coords);
        let sq = dot(&v, &v);
        let replace = match &self.best {
            None => true,
            Some((_, best_coords)) => {
                if sq < self.best_sq * (1.0 - TIE_REL) {
                    true
                } else if sq <= self.best_sq * (1.0 + TIE_REL) {
                    coords < *best_coords
                } else {
                    false
                }
            }
        };
        if replace {
            self.best_sq = sq;
            self.best = Some((self.x.clone(), coords));
        }
    }

    fn bound(&self) -> f64 {
        self.best_sq * (1.0 + 1e-9) + 1e-300
    }

    fn descend(&mut self, level: usize, partial: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return Err(Error::NumericOverflow(format!(
                "enumeration exceeded {NODE_BUDGET} nodes (basis too ill-conditioned)"
            )));
        }
        let k = self.red.k;
        let center: f64 = -(level + 1..k)
            .map(|l| self.red.mu[l][level] * self.x[l] as f64)
            .sum::<f64>();
        let bj = self.red.bstar[level];
        let tail_zero = level >= self.head && self.x[level + 1..].iter().all(|&c| c == 0);
        let start = center.round();
        let dir = if center >= start { 1.0 } else { -1.0 };
        // Zigzag x0, x0+dir, x0-dir, x0+2dir, ...: distances to the center are
        // nondecreasing, so the first point past the bound ends the level.
        for step in 0u64.. {
            let mag = step.div_ceil(2) as f64;
            let offset = match step {
                0 => 0.0,
                s if s % 2 == 1 => dir * mag,
                _ => -dir * mag,
            };
            let xi = start + offset;
            let diff = xi - center;
            let next = partial + diff * diff * bj;
            if next > self.bound() {
                break;
            }
            if xi.abs() > MAX_COEFF {
                return Err(Error::NumericOverflow("enumeration coefficient too large".into()));
            }
            self.x[level] = xi as i64;
            let skip = tail_zero && level == self.head && self.x[level] == 0;
            if !skip {
                if level == 0 {
                    if next > 0.0 {
                        self.consider();
                    }
                } else {
                    self.descend(level - 1, next)?;
                }
            }
        }
        self.x[level] = 0;
        Ok(())
    }
}

/// Extended gcd: returns (g, s, t) with s·a + t·b = g ≥ 0.
fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut old_r, mut r) = (a as i128, b as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (old_r, old_s, old_t) = (-old_r, -old_s, -old_t);
    }
    (old_r as i64, old_s as i64, old_t as i64)
}

impl Reducer<'_> {
    /// Makes column `head` equal to Σ c_j · column_{head+j} (c primitive) by a
    /// unimodular transform of the tail columns.
    fn insert(&mut self, head: usize, tail_coeffs: &[i64]) -> Result<()> {
        let mut w = tail_coeffs.to_vec();
        let r = w.len();
        for j in (1..r).rev() {
            let (a, b) = (w[j - 1], w[j]);
            if b == 0 {
                continue;
            }
            let (g, s, t) = ext_gcd(a, b);
            let (x, y) = (a / g, b / g);
            // Row op [[s, t], [-y, x]] maps (a, b) to (g, 0); apply its inverse
            // [[x, -t], [y, s]] to the columns.
            let (cj1, cj) = (head + j - 1, head + j);
            for i in 0..self.k {
                let p = self.u[cj1][i] as i128;
                let q = self.u[cj][i] as i128;
                let np = x as i128 * p + y as i128 * q;
                let nq = -(t as i128) * p + s as i128 * q;
                self.u[cj1][i] = i64::try_from(np)
                    .map_err(|_| Error::NumericOverflow("unimodular completion overflowed".into()))?;
                self.u[cj][i] = i64::try_from(nq)
                    .map_err(|_| Error::NumericOverflow("unimodular completion overflowed".into()))?;
            }
            w[j - 1] = g;
            w[j] = 0;
        }
        if w[0] == -1 {
            for v in self.u[head].iter_mut() {
                *v = -*v;
            }
        } else if w[0] != 1 {
            return Err(Error::NumericOverflow("tail coefficients not primitive".into()));
        }
        self.refresh();
        Ok(())
    }
}

fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0, |g, &x| ext_gcd(g, x).0)
}

fn validate(basis: &Matrix) -> Result<()> {
    let k = basis.size();
    if k == 0 || k > 8 {
        return Err(Error::InvalidDimension(format!("successive minima supports 1 <= k <= 8, got {k}")));
    }
    if basis.rows().iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::param("basis has non-finite entries"));
    }
    let cond = basis.condition_number();
    if !cond.is_finite() {
        return Err(Error::SingularMatrix { det: 0.0 });
    }
    let det = basis.det();
    if det.abs() <= super::matrix::TOL_DET {
        return Err(Error::SingularMatrix { det: det.abs() });
    }
    if cond > COND_WARN {
        warn!("lattice basis condition number {cond:e} exceeds {COND_WARN:e}");
    }
    Ok(())
}

/// First `count` successive minima (count = k gives all).
pub fn successive_minima_partial(basis: &Matrix, count: usize) -> Result<MinimaVector> {
    validate(basis)?;
    let k = basis.size();
    let count = count.min(k);
    let mut red = Reducer::new(basis);
    red.lll(0)?;
    let mut values = Vec::with_capacity(count);
    let mut coords = Vec::with_capacity(count);
    for head in 0..count {
        let init = (head..k)
            .map(|j| dot(&red.vecs[j], &red.vecs[j]))
            .fold(f64::INFINITY, f64::min);
        let mut search = Search {
            red: &red,
            head,
            best_sq: init,
            best: None,
            x: vec![0; k],
            nodes: 0,
        };
        search.descend(k - 1, 0.0)?;
        let (local, global) = search
            .best
            .ok_or_else(|| Error::NumericOverflow("enumeration found no vector (precision loss)".into()))?;
        let v = red.vector_of(&global);
        values.push(dot(&v, &v).sqrt());
        coords.push(global);
        if head + 1 < k {
            let tail = &local[head..];
            let g = gcd_all(tail);
            let prim: Vec<i64> = tail.iter().map(|c| c / g).collect();
            red.insert(head, &prim)?;
            red.lll(head + 1)?;
        }
    }
    // Guard against float noise breaking monotonicity.
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    Ok(MinimaVector { values, coords })
}

pub fn successive_minima(basis: &Matrix) -> Result<MinimaVector> {
    successive_minima_partial(basis, basis.size())
}

pub fn delta1(basis: &Matrix) -> Result<f64> {
    Ok(successive_minima_partial(basis, 1)?.first())
}

pub fn delta_last(basis: &Matrix) -> Result<f64> {
    Ok(successive_minima(basis)?.last())
}

/// Volume of the Euclidean unit ball in R^k.
pub fn unit_ball_volume(k: usize) -> f64 {
    // V_k = π^{k/2} / Γ(k/2 + 1), via the recursion V_k = 2π/k · V_{k-2}.
    let mut v = if k % 2 == 0 { 1.0 } else { 2.0 };
    let mut j = if k % 2 == 0 { 2 } else { 3 };
    while j <= k {
        v *= 2.0 * std::f64::consts::PI / j as f64;
        j += 2;
    }
    v
}

/// ∏δ_i · V_k / |det|, which Minkowski's second theorem places in [2^k/k!, 2^k].
pub fn minkowski_ratio(basis: &Matrix, minima: &MinimaVector) -> f64 {
    let k = basis.size();
    minima.product() * unit_ball_volume(k) / basis.det().abs()
}

pub fn minkowski_bounds(k: usize) -> (f64, f64) {
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    let two_k = 2f64.powi(k as i32);
    (two_k / fact, two_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL_SV * b.abs().max(1.0)
    }

    #[test]
    fn identity_minima() {
        let m = successive_minima(&Matrix::identity(3)).unwrap();
        assert!(m.values.iter().all(|&v| close(v, 1.0)));
    }

    #[test]
    fn diagonal_minima_sorted() {
        let b = Matrix::diag(vec![2.0, 0.5]);
        let m = successive_minima(&b).unwrap();
        assert!(close(m.values[0], 0.5) && close(m.values[1], 2.0));
    }

    #[test]
    fn skewed_basis() {
        // Columns (1, 0) and (1000, 1): the lattice is Z² in disguise.
        let b = Matrix::from_f64_rows(&[&[1.0, 1000.0], &[0.0, 1.0]]).unwrap();
        let m = successive_minima(&b).unwrap();
        assert!(close(m.values[0], 1.0) && close(m.values[1], 1.0));
    }

    #[test]
    fn hexagonal_lattice() {
        let b = Matrix::from_f64_rows(&[&[1.0, 0.5], &[0.0, 3f64.sqrt() / 2.0]]).unwrap();
        let m = successive_minima(&b).unwrap();
        assert!(close(m.values[0], 1.0) && close(m.values[1], 1.0));
    }

    #[test]
    fn needs_non_basis_vectors() {
        // In dimension 5 the minima of this lattice are not attained by a basis:
        // Z⁵ together with (1/2, …, 1/2) has five independent vectors of
        // length 1 only via the standard ones.
        let mut rows = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            rows[i][i] = 1.0;
            rows[i][4] = 0.5;
        }
        let b = Matrix::from_rows(rows).unwrap();
        let m = successive_minima(&b).unwrap();
        for v in &m.values {
            assert!(close(*v, 1.0), "{:?}", m.values);
        }
    }

    #[test]
    fn coords_realize_values() {
        let b = Matrix::from_f64_rows(&[&[3.0, 1.0, 0.2], &[0.1, 2.0, 1.0], &[0.0, 0.3, 0.7]]).unwrap();
        let m = successive_minima(&b).unwrap();
        for (v, c) in m.values.iter().zip(&m.coords) {
            let vec = b.mul_vec(&c.iter().map(|&x| x as f64).collect::<Vec<_>>());
            assert!(close(dot(&vec, &vec).sqrt(), *v));
        }
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn ext_gcd_identity() {
        for (a, b) in [(12, 18), (-7, 3), (0, 5), (5, 0), (-4, -6)] {
            let (g, s, t) = ext_gcd(a, b);
            assert_eq!(s * a + t * b, g);
            assert!(g >= 0);
        }
    }

    #[test]
    fn singular_basis_rejected() {
        let b = Matrix::from_f64_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(successive_minima(&b).is_err());
    }
}
