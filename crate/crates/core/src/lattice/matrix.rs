use std::fmt::Debug;
use std::ops::Mul;

use num_rational::BigRational;
use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::rational_to_f64;

/// Determinant cutoff for float-mode invertibility.
pub const TOL_DET: f64 = 1e-12;

pub trait Entry: Clone + Num + Signed + PartialOrd + Debug + 'static {
    fn to_float(&self) -> f64;
    fn is_negligible(&self) -> bool;
}

impl Entry for f64 {
    fn to_float(&self) -> f64 {
        *self
    }

    fn is_negligible(&self) -> bool {
        *self == 0.0
    }
}

impl Entry for BigRational {
    fn to_float(&self) -> f64 {
        rational_to_f64(self)
    }

    fn is_negligible(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }
}

/// Square matrix stored row-major. Lattice bases use columns as generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<T> {
    size: usize,
    data: Vec<T>,
}

pub type Matrix = SquareMatrix<f64>;
pub type ExactMatrix = SquareMatrix<BigRational>;

impl<T: Entry> SquareMatrix<T> {
    pub fn zeros(size: usize) -> Self {
        SquareMatrix {
            size,
            data: vec![T::zero(); size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diag(entries: Vec<T>) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(Error::InvalidDimension("matrix rows must form a nonempty square".into()));
        }
        Ok(SquareMatrix {
            size,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.size).map(<[T]>::to_vec).collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.size).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.size);
        for i in 0..self.size {
            for j in 0..self.size {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn scale(&self, s: &T) -> Self {
        SquareMatrix {
            size: self.size,
            data: self.data.iter().map(|x| x.clone() * s.clone()).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.size, other.size, "size mismatch");
        let k = self.size;
        let mut out = Self::zeros(k);
        for i in 0..k {
            for l in 0..k {
                let a = &self[(i, l)];
                if a.is_negligible() {
                    continue;
                }
                for j in 0..k {
                    let prod = a.clone() * other[(l, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + prod;
                }
            }
        }
        out
    }

    /// Gaussian elimination with partial pivoting; returns (inverse, det).
    fn invert_with_det(&self) -> (Option<Self>, T) {
        let k = self.size;
        let mut a = self.clone();
        let mut inv = Self::identity(k);
        let mut det = T::one();
        for c in 0..k {
            let mut p = c;
            for r in c + 1..k {
                if a[(r, c)].abs() > a[(p, c)].abs() {
                    p = r;
                }
            }
            if a[(p, c)].is_negligible() {
                return (None, T::zero());
            }
            if p != c {
                a.swap_rows(p, c);
                inv.swap_rows(p, c);
                det = -det;
            }
            let pivot = a[(c, c)].clone();
            det = det * pivot.clone();
            for j in 0..k {
                a[(c, j)] = a[(c, j)].clone() / pivot.clone();
                inv[(c, j)] = inv[(c, j)].clone() / pivot.clone();
            }
            for r in 0..k {
                if r == c || a[(r, c)].is_negligible() {
                    continue;
                }
                let f = a[(r, c)].clone();
                for j in 0..k {
                    let sa = f.clone() * a[(c, j)].clone();
                    a[(r, j)] = a[(r, j)].clone() - sa;
                    let si = f.clone() * inv[(c, j)].clone();
                    inv[(r, j)] = inv[(r, j)].clone() - si;
                }
            }
        }
        (Some(inv), det)
    }

    pub fn det(&self) -> T {
        self.invert_with_det().1
    }

    pub fn inverse(&self) -> Result<Self> {
        let (inv, det) = self.invert_with_det();
        match inv {
            Some(inv) if self.is_invertible_det(&det) => Ok(inv),
            _ => Err(Error::SingularMatrix { det: det.to_float().abs() }),
        }
    }

    fn is_invertible_det(&self, det: &T) -> bool {
        // Exact zero is caught by elimination; the float cutoff only bites for f64.
        !det.is_negligible() && (det.to_float().abs() > TOL_DET || !det.to_float().is_finite() || is_exact::<T>())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.size {
            self.data.swap(a * self.size + j, b * self.size + j);
        }
    }

    pub fn to_f64(&self) -> Matrix {
        SquareMatrix {
            size: self.size,
            data: self.data.iter().map(Entry::to_float).collect(),
        }
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.clone() - b.clone()).abs().to_float())
            .fold(0.0, f64::max)
    }

    pub fn is_upper_unitriangular(&self) -> bool {
        (0..self.size).all(|i| {
            (0..self.size).all(|j| {
                let e = &self[(i, j)];
                if i == j {
                    *e == T::one()
                } else if i > j {
                    e.is_negligible()
                } else {
                    true
                }
            })
        })
    }
}

fn is_exact<T: 'static>() -> bool {
    std::any::TypeId::of::<T>() == std::any::TypeId::of::<BigRational>()
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.size + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.size + j]
    }
}

impl<T: Entry> Mul for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;

    fn mul(self, rhs: Self) -> SquareMatrix<T> {
        SquareMatrix::mul(self, rhs)
    }
}

impl Matrix {
    pub fn from_f64_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Ratio of extreme singular values; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        let m = nalgebra::DMatrix::from_fn(self.size, self.size, |i, j| self[(i, j)]);
        let sv = m.singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numbers serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Matrix = serde_json::from_str(s)?;
        if m.size == 0 || m.size.checked_mul(m.size) != Some(m.data.len()) {
            return Err(Error::Schema("matrix data length does not match size".into()));
        }
        Ok(m)
    }
}

impl ExactMatrix {
    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| BigRational::from_integer(x.into())).collect())
                .collect(),
        )
    }
}

/// Tests that two matrices agree entrywise within `tol`.
pub fn approx_eq(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.size() == b.size() && a.max_abs_diff(b) <= tol
}
