//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Every polynomial keeps its coefficients as `BigRational` so that partial
//! derivatives are exact, and caches an `f64` copy for the fast evaluation
//! paths used by the enumeration loops.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: BigRational,
    coeff_f: f64,
}

impl Term {
    pub fn coeff_f64(&self) -> f64 {
        self.coeff_f
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Term>,
    /// Dense Horner coefficients, lowest degree first; only for one variable.
    dense: Option<Vec<f64>>,
}

impl Polynomial {
    /// Builds a polynomial from (exponent vector, coefficient) pairs. Repeated
    /// monomials are summed and zero terms dropped.
    pub fn new(nvars: usize, terms: Vec<(Vec<u32>, BigRational)>) -> Result<Self> {
        if nvars == 0 {
            return Err(Error::InvalidDimension("polynomial needs at least one variable".into()));
        }
        let mut merged: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for (exps, c) in terms {
            if exps.len() != nvars {
                return Err(Error::InvalidDimension(format!(
                    "monomial {exps:?} has {} exponents, expected {nvars}",
                    exps.len()
                )));
            }
            *merged.entry(exps).or_insert_with(BigRational::zero) += c;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(exponents, coeff)| Term {
                coeff_f: rational_to_f64(&coeff),
                exponents,
                coeff,
            })
            .collect();
        Ok(Self::from_terms(nvars, terms))
    }

    fn from_terms(nvars: usize, terms: Vec<Term>) -> Self {
        let dense = (nvars == 1).then(|| {
            let deg = terms.iter().map(|t| t.exponents[0]).max().unwrap_or(0) as usize;
            let mut dense = vec![0.0; deg + 1];
            for t in &terms {
                dense[t.exponents[0] as usize] += t.coeff_f;
            }
            dense
        });
        Polynomial { nvars, terms, dense }
    }

    pub fn zero(nvars: usize) -> Self {
        Self::from_terms(nvars, Vec::new())
    }

    /// Single-variable polynomial from integer coefficients, lowest degree first.
    pub fn univariate(coeffs: &[i64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| (vec![k as u32], BigRational::from_integer(BigInt::from(c))))
            .collect();
        Self::new(1, terms).expect("one variable")
    }

    /// Single-variable polynomial from real coefficients, lowest degree first.
    pub fn univariate_f64(coeffs: &[f64]) -> Result<Self> {
        let mut terms = Vec::with_capacity(coeffs.len());
        for (k, &c) in coeffs.iter().enumerate() {
            let r = BigRational::from_float(c)
                .ok_or_else(|| Error::param(format!("non-finite coefficient {c}")))?;
            terms.push((vec![k as u32], r));
        }
        Self::new(1, terms)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        if let Some(dense) = &self.dense {
            let x0 = x[0];
            return dense.iter().rev().fold(0.0, |acc, &c| acc * x0 + c);
        }
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(x)
                    .fold(t.coeff_f, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    pub fn eval_exact(&self, x: &[BigRational]) -> BigRational {
        debug_assert_eq!(x.len(), self.nvars);
        let mut total = BigRational::zero();
        for t in &self.terms {
            let mut v = t.coeff.clone();
            for (&e, xi) in t.exponents.iter().zip(x) {
                if e > 0 {
                    v *= num_traits::pow(xi.clone(), e as usize);
                }
            }
            total += v;
        }
        total
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        assert!(var < self.nvars, "variable index out of range");
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exponents[var] > 0)
            .map(|t| {
                let e = t.exponents[var];
                let mut exponents = t.exponents.clone();
                exponents[var] = e - 1;
                let coeff = &t.coeff * BigRational::from_integer(BigInt::from(e));
                Term {
                    coeff_f: rational_to_f64(&coeff),
                    exponents,
                    coeff,
                }
            })
            .collect();
        Self::from_terms(self.nvars, terms)
    }

    /// Mixed partial ∂_β for a multi-index β (one order per variable).
    pub fn partial(&self, beta: &[u32]) -> Polynomial {
        assert_eq!(beta.len(), self.nvars);
        let mut p = self.clone();
        for (var, &order) in beta.iter().enumerate() {
            for _ in 0..order {
                p = p.derivative(var);
            }
        }
        p
    }

    /// Upper bound of |p| over the sup-norm box `center ± radius`:
    /// Σ |c| Π (|center_i| + radius)^e.
    pub fn abs_bound_on_box(&self, center: &[f64], radius: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(center)
                    .fold(t.coeff_f.abs(), |acc, (&e, &c)| {
                        acc * (c.abs() + radius).powi(e as i32)
                    })
            })
            .sum()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({})", t.coeff)?;
            for (v, &e) in t.exponents.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", v + 1)?,
                    _ => write!(f, "*x{}^{}", v + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parses "3", "-7/2", "0.125" or "1e-3" into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    if exp.unsigned_abs() > 4096 {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let digits = digits / BigInt::from(10);
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(digits);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

pub fn one() -> BigRational {
    BigRational::one()
}
