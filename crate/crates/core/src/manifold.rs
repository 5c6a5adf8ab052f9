//! Monge-form maps x ↦ (x, f(x)) with polynomial components.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{parse_rational, rational_from_f64, Polynomial};

/// Relative singular-value cutoff for the float rank test.
pub const TOL_RANK: f64 = 1e-9;

/// Closed sup-norm ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidDimension("ball needs at least one coordinate".into()));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::param(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("ball center must be finite"));
        }
        Ok(Ball { center, radius })
    }

    /// The interval/box [lo, hi]^k as a ball.
    pub fn from_bounds(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if hi < lo {
            return Err(Error::param(format!("empty interval [{lo}, {hi}]")));
        }
        Ball::new(vec![(lo + hi) / 2.0; dim], (hi - lo) / 2.0)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.radius).powi(self.dim() as i32)
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.center[i] - self.radius
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.center[i] + self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_slack(x, 0.0)
    }

    pub fn contains_with_slack(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.center)
                .all(|(xi, ci)| (xi - ci).abs() <= self.radius + slack)
    }

    pub fn contains_ball(&self, other: &Ball) -> bool {
        other.dim() == self.dim()
            && other
                .center
                .iter()
                .zip(&self.center)
                .all(|(o, c)| (o - c).abs() + other.radius <= self.radius * (1.0 + 1e-12) + 1e-15)
    }

    /// Nearest point of the ball in sup norm (coordinatewise clamp).
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(xi, ci)| xi.clamp(ci - self.radius, ci + self.radius))
            .collect()
    }
}

/// A polynomial map in Monge form with its first and second partials
/// precomputed exactly.
#[derive(Clone, Debug)]
pub struct ManifoldMap {
    name: String,
    d: usize,
    n: usize,
    components: Vec<Polynomial>,
    /// first[i][j] = ∂_i f_j
    first: Vec<Vec<Polynomial>>,
    /// second[i][k][j] = ∂_i ∂_k f_j
    second: Vec<Vec<Vec<Polynomial>>>,
    l_max: u32,
    bound: f64,
    domain: Ball,
    warnings: Vec<String>,
}

impl ManifoldMap {
    pub fn from_polynomials(
        name: impl Into<String>,
        d: usize,
        n: usize,
        components: Vec<Polynomial>,
        domain: Ball,
    ) -> Result<Self> {
        if d == 0 || n <= d {
            return Err(Error::InvalidDimension(format!("need 1 <= d < n, got d={d}, n={n}")));
        }
        let m = n - d;
        if components.len() != m {
            return Err(Error::InvalidDimension(format!(
                "expected {m} component polynomials, got {}",
                components.len()
            )));
        }
        if let Some(p) = components.iter().find(|p| p.nvars() != d) {
            return Err(Error::InvalidDimension(format!(
                "component has {} variables, expected {d}",
                p.nvars()
            )));
        }
        if domain.dim() != d {
            return Err(Error::InvalidDimension(format!(
                "domain has dimension {}, expected {d}",
                domain.dim()
            )));
        }
        let first: Vec<Vec<Polynomial>> = (0..d)
            .map(|i| components.iter().map(|p| p.derivative(i)).collect())
            .collect();
        let second: Vec<Vec<Vec<Polynomial>>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| first[i].iter().map(|p| p.derivative(k)).collect())
                    .collect()
            })
            .collect();

        let mut bound: f64 = 1.0;
        for p in first.iter().flatten().chain(second.iter().flatten().flatten()) {
            bound = bound.max(p.abs_bound_on_box(&domain.center, domain.radius));
        }

        let mut warnings = Vec::new();
        if components.iter().all(|p| p.degree() == 0) {
            warnings.push("all components are constant: the map is degenerate".to_string());
        } else if components.iter().all(|p| p.degree() <= 1) {
            warnings.push("all components are affine: the map is degenerate".to_string());
        }
        let l_max = components.iter().map(Polynomial::degree).max().unwrap_or(0).max(1);

        Ok(ManifoldMap {
            name: name.into(),
            d,
            n,
            components,
            first,
            second,
            l_max,
            bound,
            domain,
            warnings,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.n - self.d
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    /// Uniform bound on first and second partials over the domain (at least 1).
    pub fn bound_m(&self) -> f64 {
        self.bound
    }

    pub fn domain(&self) -> &Ball {
        &self.domain
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// Same map on a different working domain (M is recomputed).
    pub fn with_domain(&self, domain: Ball) -> Result<Self> {
        Self::from_polynomials(self.name.clone(), self.d, self.n, self.components.clone(), domain)
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::InvalidDimension(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.d
            )));
        }
        if !self.domain.contains_with_slack(x, 1e-12 * (1.0 + self.domain.radius)) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    pub fn eval_f_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.components) {
            *o = p.eval(x);
        }
    }

    /// Full point F(x) = (x, f(x)) in R^n.
    pub fn eval_full(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        out.extend(self.eval_f(x));
        out
    }

    pub fn eval_f_exact(&self, x: &[BigRational]) -> Vec<BigRational> {
        self.components.iter().map(|p| p.eval_exact(x)).collect()
    }

    /// ∂_β f_j(x) for an arbitrary multi-index.
    pub fn partial(&self, beta: &[u32], j: usize, x: &[f64]) -> Result<f64> {
        let order: u32 = beta.iter().sum();
        if beta.len() != self.d || j >= self.m() {
            return Err(Error::InvalidDimension("bad multi-index or component".into()));
        }
        if order > self.l_max {
            // Polynomials have all derivatives, but beyond the degree they vanish.
            return Ok(0.0);
        }
        Ok(self.components[j].partial(beta).eval(x))
    }

    /// Row-major d×m matrix J with J[i][j] = ∂_i f_j(x).
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_domain(x)?;
        Ok(self.jacobian_unchecked(x))
    }

    pub fn jacobian_unchecked(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.first
            .iter()
            .map(|row| row.iter().map(|p| p.eval(x)).collect())
            .collect()
    }

    pub fn jacobian_exact(&self, x: &[BigRational]) -> Vec<Vec<BigRational>> {
        self.first
            .iter()
            .map(|row| row.iter().map(|p| p.eval_exact(x)).collect())
            .collect()
    }

    /// Hessian entries ∂_i ∂_k f_j(x), indexed [i][k][j].
    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        self.second
            .iter()
            .map(|a| a.iter().map(|b| b.iter().map(|p| p.eval(x)).collect()).collect())
            .collect()
    }

    /// Stacked derivative vectors ∂_β F(x) for 1 <= |β| <= l, as rows in R^n.
    fn derivative_rows<T, E>(&self, l: u32, eval: E) -> Vec<Vec<T>>
    where
        T: Clone + Zero + One,
        E: Fn(&Polynomial) -> T,
    {
        let mut rows = Vec::new();
        for order in 1..=l {
            for beta in multi_indices(self.d, order) {
                let mut row = vec![T::zero(); self.n];
                if order == 1 {
                    let i = beta.iter().position(|&b| b == 1).expect("order one");
                    row[i] = T::one();
                }
                for (j, p) in self.components.iter().enumerate() {
                    row[self.d + j] = eval(&p.partial(&beta));
                }
                rows.push(row);
            }
        }
        rows
    }

    /// Smallest l <= l_cap such that the partials of F of orders 1..=l span R^n.
    pub fn nondegeneracy_order(&self, x: &[f64], l_cap: u32) -> Result<Option<u32>> {
        self.check_domain(x)?;
        self.check_cap(l_cap)?;
        for l in 1..=l_cap {
            let rows = self.derivative_rows(l, |p| p.eval(x));
            if float_rank(&rows, self.n) == self.n {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    /// Exact-rank variant for rational points.
    pub fn nondegeneracy_order_exact(&self, x: &[BigRational], l_cap: u32) -> Result<Option<u32>> {
        self.check_cap(l_cap)?;
        if x.len() != self.d {
            return Err(Error::InvalidDimension("point dimension".into()));
        }
        for l in 1..=l_cap {
            let rows: Vec<Vec<BigRational>> = self.derivative_rows(l, |p| p.eval_exact(x));
            if exact_rank(rows) == self.n {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn check_cap(&self, l_cap: u32) -> Result<()> {
        if l_cap > self.l_max {
            return Err(Error::Capability(format!(
                "derivatives of order {l_cap} requested, map provides up to {}",
                self.l_max
            )));
        }
        Ok(())
    }

    /// Short human-readable description used in run manifests.
    pub fn descriptor(&self) -> String {
        let comps: Vec<String> = self.components.iter().map(|p| p.to_string()).collect();
        format!(
            "{} d={} n={} f=[{}] U=B({:?}, {})",
            self.name,
            self.d,
            self.n,
            comps.join("; "),
            self.domain.center,
            self.domain.radius
        )
    }
}

/// All multi-indices of the given total order in `d` variables.
pub fn multi_indices(d: usize, order: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(d, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, order, &mut Vec::with_capacity(d), &mut out);
    out
}

fn float_rank(rows: &[Vec<f64>], cols: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]);
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > TOL_RANK * smax.max(1.0)).count()
}

fn exact_rank(mut rows: Vec<Vec<BigRational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank][c].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][c].is_zero() {
                let factor = &rows[r][c] / &pivot;
                for k in c..cols {
                    let sub = &factor * &rows[rank][k];
                    rows[r][k] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// The curve x ↦ (x, x², …, xⁿ) on [0, 1].
pub fn veronese(n: usize) -> Result<ManifoldMap> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("veronese needs n >= 2, got {n}")));
    }
    let components = (2..=n as u32)
        .map(|k| {
            Polynomial::new(1, vec![(vec![k], BigRational::from_integer(BigInt::from(1)))])
                .expect("one variable")
        })
        .collect();
    ManifoldMap::from_polynomials(
        format!("veronese{n}"),
        1,
        n,
        components,
        Ball::new(vec![0.5], 0.5)?,
    )
}

/// The paraboloid x ↦ (x₁, x₂, x₁² + x₂²) on the sup-ball of radius 2 at 0.
pub fn paraboloid() -> ManifoldMap {
    let one = BigRational::from_integer(BigInt::from(1));
    let p = Polynomial::new(2, vec![(vec![2, 0], one.clone()), (vec![0, 2], one)])
        .expect("two variables");
    ManifoldMap::from_polynomials("paraboloid", 2, 3, vec![p], Ball::new(vec![0.0, 0.0], 2.0).unwrap())
        .expect("valid construction")
}

/// Builds a map from a table of monomial coefficients per component.
pub fn polynomial_monge(
    name: &str,
    d: usize,
    n: usize,
    table: &[Vec<(Vec<u32>, BigRational)>],
    domain: Ball,
) -> Result<ManifoldMap> {
    let components = table
        .iter()
        .map(|terms| Polynomial::new(d, terms.clone()))
        .collect::<Result<Vec<_>>>()?;
    ManifoldMap::from_polynomials(name, d, n, components, domain)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    name: Option<String>,
    dim_d: usize,
    dim_n: usize,
    domain_center: Vec<f64>,
    domain_radius: f64,
    #[serde(default)]
    component: Vec<ComponentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    terms: BTreeMap<String, CoeffValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CoeffValue {
    Int(i64),
    Float(f64),
    Text(String),
}

/// Parses a map definition file:
///
/// ```toml
/// name = "paraboloid"
/// dim_d = 2
/// dim_n = 3
/// domain_center = [0.0, 0.0]
/// domain_radius = 2.0
///
/// [[component]]
/// terms = { "2,0" = 1, "0,2" = "1" }
/// ```
pub fn parse_map_file(text: &str) -> Result<ManifoldMap> {
    let file: MapFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::parse(line, e.message().to_string())
    })?;
    if file.dim_d == 0 || file.dim_n <= file.dim_d || file.dim_n > 16 {
        return Err(Error::InvalidDimension(format!(
            "need 1 <= dim_d < dim_n <= 16, got {} and {}",
            file.dim_d, file.dim_n
        )));
    }
    let mut table = Vec::with_capacity(file.component.len());
    for (ci, comp) in file.component.iter().enumerate() {
        let mut terms = Vec::with_capacity(comp.terms.len());
        for (key, value) in &comp.terms {
            let exps = key
                .split(',')
                .map(|s| s.trim().parse::<u32>().ok().filter(|&e| e <= 64))
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| Error::Schema(format!("component {ci}: bad monomial key {key:?}")))?;
            if exps.len() != file.dim_d {
                return Err(Error::Schema(format!(
                    "component {ci}: monomial {key:?} needs {} exponents",
                    file.dim_d
                )));
            }
            let coeff = match value {
                CoeffValue::Int(i) => Some(BigRational::from_integer(BigInt::from(*i))),
                CoeffValue::Float(f) => rational_from_f64(*f),
                CoeffValue::Text(s) => parse_rational(s),
            }
            .ok_or_else(|| Error::Schema(format!("component {ci}: bad coefficient for {key:?}")))?;
            terms.push((exps, coeff));
        }
        table.push(terms);
    }
    let domain = Ball::new(file.domain_center, file.domain_radius)?;
    polynomial_monge(
        file.name.as_deref().unwrap_or("custom"),
        file.dim_d,
        file.dim_n,
        &table,
        domain,
    )
}

/// Built-in maps by name, or a map file path.
pub fn builtin(name: &str) -> Option<ManifoldMap> {
    match name {
        "paraboloid" => Some(paraboloid()),
        _ => name
            .strip_prefix("veronese")
            .and_then(|k| k.parse::<usize>().ok())
            .and_then(|k| veronese(k).ok()),
    }
}
