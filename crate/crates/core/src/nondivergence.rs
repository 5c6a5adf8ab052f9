//! Membership tests and measure estimates for the sets of integer vectors
//! making a linear form in F(x) = (x, f(x)) small while its gradient stays
//! controlled.

use serde::Serialize;

use crate::counting::{alpha, to_f64, working_order};
use crate::error::{Error, Result};
use crate::manifold::{Ball, ManifoldMap};
use crate::poly::Polynomial;
use crate::sampling::{estimate_measure, MeasureEstimate, Sampler};

pub const DEFAULT_SEARCH_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SBoxParams {
    pub delta: f64,
    pub k: f64,
    pub t: Vec<f64>,
}

impl SBoxParams {
    pub fn new(delta: f64, k: f64, t: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) || !(k > 0.0) || t.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("delta, K and T must be positive and finite"));
        }
        Ok(SBoxParams { delta, k, t })
    }

    fn t_prod_over_max(&self) -> f64 {
        let prod: f64 = self.t.iter().product();
        let max = self.t.iter().cloned().fold(f64::MIN, f64::max);
        prod / max
    }

    /// 0 < δ ≤ 1, T_i ≥ 1, K > 0 and δⁿ < K·ΠT/max T.
    pub fn admissible(&self) -> bool {
        self.delta <= 1.0
            && self.t.iter().all(|&x| x >= 1.0)
            && self.delta.powi(self.t.len() as i32) < self.k * self.t_prod_over_max()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SWitness {
    pub a0: i64,
    pub a: Vec<i64>,
}

/// Integers strictly inside (−T, T).
fn open_bound(t: f64) -> i64 {
    (t.ceil() as i64 - 1).max(0)
}

/// Values of F(x)·a, the gradient vector ∇F(x)·a, for a = (a_d, a_m).
struct FormData {
    full: Vec<f64>,
    jac: Vec<Vec<f64>>,
}

impl FormData {
    fn new(map: &ManifoldMap, x: &[f64]) -> Self {
        FormData {
            full: map.eval_full(x),
            jac: map.jacobian_unchecked(x),
        }
    }

    fn value(&self, a: &[i64]) -> f64 {
        self.full.iter().zip(a).map(|(f, &ai)| f * ai as f64).sum()
    }

    /// ∇F(x)·a = a_d + J a_m, coordinate i.
    fn grad(&self, a: &[i64], i: usize) -> f64 {
        let d = self.jac.len();
        a[i] as f64
            + self.jac[i]
                .iter()
                .zip(&a[d..])
                .map(|(j, &am)| j * am as f64)
                .sum::<f64>()
    }

    fn grad_sup(&self, a: &[i64]) -> f64 {
        (0..self.jac.len()).map(|i| self.grad(a, i).abs()).fold(0.0, f64::max)
    }
}

/// Nearest integer a₀ to −F(x)·a and the residual |a₀ + F(x)·a|.
fn best_a0(value: f64) -> (i64, f64) {
    let a0 = (-value).round();
    (a0 as i64, (a0 + value).abs())
}

/// Sup-norm-minimal (a₀, a) with |a₀ + F(x)·a| < δ, ‖∇F(x)·a‖ < K, |a_i| < T_i.
/// Ties in sup norm are broken by lexicographic order of (a_m, a_d), with the
/// sign fixed so that the first nonzero entry of (a_m, a_d) is positive.
pub fn witness_s(map: &ManifoldMap, x: &[f64], params: &SBoxParams, budget: u64) -> Result<Option<SWitness>> {
    map.check_domain(x)?;
    let n = map.n();
    let d = map.d();
    let m = map.m();
    if params.t.len() != n {
        return Err(Error::InvalidDimension(format!("T has {} entries, expected {n}", params.t.len())));
    }
    let bounds: Vec<i64> = params.t.iter().map(|&t| open_bound(t)).collect();
    // Each a_d window has at most 2K+1 integers.
    let window = (2.0 * params.k.ceil() + 1.0).max(1.0);
    let mut needed: f64 = 1.0;
    for (i, &b) in bounds.iter().enumerate() {
        let width = (2 * b + 1) as f64;
        needed *= if i < d { width.min(window) } else { width };
    }
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded {
            what: "witness_s".into(),
            needed: needed as u128,
            budget,
        });
    }
    let form = FormData::new(map, x);
    let am_max = bounds[d..].iter().copied().max().unwrap_or(0);
    let mut best: Option<(i64, Vec<i64>, SWitness)> = None;
    let mut a = vec![0i64; n];
    for shell in 0..=am_max {
        if let Some((s, _, _)) = &best {
            if shell > *s {
                break;
            }
        }
        // a_m with sup norm exactly `shell`
        let mut am: Vec<i64> = bounds[d..].iter().map(|&b| -b.min(shell)).collect();
        if am.is_empty() {
            break;
        }
        loop {
            let sup = am.iter().map(|v| v.abs()).max().unwrap_or(0);
            if sup == shell {
                a[d..].copy_from_slice(&am);
                search_ad(&form, params, &bounds, d, &mut a, &mut best);
            }
            // odometer over the a_m box clipped to the shell
            let mut i = m;
            let mut done = true;
            while i > 0 {
                i -= 1;
                let hi = bounds[d + i].min(shell);
                if am[i] < hi {
                    am[i] += 1;
                    for k in i + 1..m {
                        am[k] = -bounds[d + k].min(shell);
                    }
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }
    Ok(best.map(|b| b.2))
}

fn search_ad(
    form: &FormData,
    params: &SBoxParams,
    bounds: &[i64],
    d: usize,
    a: &mut [i64],
    best: &mut Option<(i64, Vec<i64>, SWitness)>,
) {
    // ∇F·a = a_d + J a_m; window for each a_d coordinate
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for i in 0..d {
        a[i] = 0;
        let shift = form.grad(a, i);
        let l = (-shift - params.k).floor() as i64 + 1;
        let h = (-shift + params.k).ceil() as i64 - 1;
        lo[i] = l.max(-bounds[i]);
        hi[i] = h.min(bounds[i]);
        if lo[i] > hi[i] {
            return;
        }
    }
    a[..d].copy_from_slice(&lo);
    loop {
        if a.iter().any(|&v| v != 0) && form.grad_sup(a) < params.k {
            let (a0, resid) = best_a0(form.value(a));
            if resid < params.delta {
                let shell = a.iter().map(|v| v.abs()).max().unwrap_or(0);
                let key: Vec<i64> = a[d..].iter().chain(&a[..d]).copied().collect();
                // a and −a are witnesses together; keep the one leading positive
                let leads_positive = key.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
                let better = leads_positive
                    && match best {
                        None => true,
                        Some((s, k, _)) => shell < *s || (shell == *s && key < *k),
                    };
                if better {
                    *best = Some((shell, key, SWitness { a0, a: a.to_vec() }));
                }
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if a[i] < hi[i] {
                a[i] += 1;
                for k in i + 1..d {
                    a[k] = lo[k];
                }
                break;
            }
        }
    }
}

/// Both measure-bound shapes recorded next to an estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SBounds {
    /// δ Π_{i≤d} min{K, T_i} · T_{d+1}⋯T_n · vol(B) + E_sharp (δ min{K, 1/r} ΠT/max T)^α
    pub sharp: f64,
    /// E_S (δ K ΠT/max T)^α vol(B)
    pub classical: f64,
    pub alpha: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SMeasure {
    pub estimate: MeasureEstimate,
    pub bounds: SBounds,
}

pub fn s_bounds(map: &ManifoldMap, ball: &Ball, params: &SBoxParams, e_sharp: f64, e_s: f64) -> Result<SBounds> {
    let d = map.d();
    let a = to_f64(alpha(map.n(), d, working_order(map))?);
    let tpm = params.t_prod_over_max();
    let first: f64 = params.delta
        * params.t[..d].iter().map(|&t| t.min(params.k)).product::<f64>()
        * params.t[d..].iter().product::<f64>()
        * ball.volume();
    let r_inv = if ball.radius > 0.0 { 1.0 / ball.radius } else { f64::INFINITY };
    let second = e_sharp * (params.delta * params.k.min(r_inv) * tpm).powf(a);
    Ok(SBounds {
        sharp: first + second,
        classical: e_s * (params.delta * params.k * tpm).powf(a) * ball.volume(),
        alpha: a,
        admissible: params.admissible(),
    })
}

/// Measure of the witness set over B with both bound shapes (calibration
/// constants E_sharp, E_S supplied by the caller).
pub fn measure_s(
    map: &ManifoldMap,
    ball: &Ball,
    params: &SBoxParams,
    sampler: &Sampler,
    budget: u64,
    constants: (f64, f64),
) -> Result<SMeasure> {
    if !map.domain().contains_ball(ball) {
        return Err(Error::Precondition("the ball must lie inside the working domain".into()));
    }
    let estimate = estimate_measure(ball, sampler, budget, |x| {
        Ok(witness_s(map, x, params, DEFAULT_SEARCH_BUDGET)?.is_some())
    })?;
    Ok(SMeasure {
        estimate,
        bounds: s_bounds(map, ball, params, constants.0, constants.1)?,
    })
}

/// |a₀ + F(x)·a| < δ (nearest a₀) and ‖∇F(x)·a‖ ≥ G.
pub fn witness_sdd(map: &ManifoldMap, x: &[f64], delta: f64, a: &[i64], grad_threshold: f64) -> Result<bool> {
    map.check_domain(x)?;
    if a.len() != map.n() {
        return Err(Error::InvalidDimension("a must have n entries".into()));
    }
    if a.iter().all(|&v| v == 0) {
        return Err(Error::param("a must be nonzero"));
    }
    let form = FormData::new(map, x);
    let (_, resid) = best_a0(form.value(a));
    Ok(resid < delta && form.grad_sup(a) >= grad_threshold)
}

pub fn measure_sdd(
    map: &ManifoldMap,
    ball: &Ball,
    delta: f64,
    a: &[i64],
    grad_threshold: f64,
    sampler: &Sampler,
    budget: u64,
) -> Result<MeasureEstimate> {
    estimate_measure(ball, sampler, budget, |x| witness_sdd(map, x, delta, a, grad_threshold))
}

/// Real function of one variable with derivatives, for the one-dimensional set.
pub trait ScalarFn: Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, order: u32, x: f64) -> f64;
}

impl ScalarFn for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.eval(&[x])
    }

    fn derivative(&self, order: u32, x: f64) -> f64 {
        self.partial(&[order]).eval(&[x])
    }
}

/// A univariate polynomial with its derivatives up to a fixed order built
/// once, for grid scans.
#[derive(Clone, Debug)]
pub struct PolyDerivatives {
    derivs: Vec<Polynomial>,
}

impl PolyDerivatives {
    pub fn new(p: &Polynomial, max_order: u32) -> Result<Self> {
        if p.nvars() != 1 {
            return Err(Error::InvalidDimension("expected a univariate polynomial".into()));
        }
        Ok(PolyDerivatives {
            derivs: (0..=max_order).map(|k| p.partial(&[k])).collect(),
        })
    }
}

impl ScalarFn for PolyDerivatives {
    fn value(&self, x: f64) -> f64 {
        self.derivs[0].eval(&[x])
    }

    fn derivative(&self, order: u32, x: f64) -> f64 {
        match self.derivs.get(order as usize) {
            Some(p) => p.eval(&[x]),
            None => self.derivs[0].partial(&[order]).eval(&[x]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct S1Measure {
    pub estimate: MeasureEstimate,
    /// 8kΘδ·L(I)
    pub bound: f64,
}

/// Grid measure of {x ∈ I : ∃a ∈ Z, |F(x)+a| < δ, |F′(x)| > 1/(Θ·L(I))}.
pub fn measure_s1_1d<F: ScalarFn>(
    f: &F,
    k: u32,
    delta: f64,
    theta: f64,
    interval: (f64, f64),
    grid_n: u64,
) -> Result<S1Measure> {
    let (lo, hi) = interval;
    if !(hi > lo) || grid_n == 0 {
        return Err(Error::param("need a nonempty interval and grid"));
    }
    if theta < 0.5 || !(delta > 0.0) || k < 2 {
        return Err(Error::Precondition("need Θ >= 1/2, δ > 0 and k >= 2".into()));
    }
    let len = hi - lo;
    let step = len / grid_n as f64;
    let center = |i: u64| lo + (i as f64 + 0.5) * step;
    // inf |F^(k)| > 0 with a constant sign over the grid
    let mut sign = 0.0;
    for i in 0..grid_n {
        let v = f.derivative(k, center(i));
        if v == 0.0 || (sign != 0.0 && v.signum() != sign) {
            return Err(Error::Precondition(format!(
                "derivative of order {k} vanishes or changes sign on the interval"
            )));
        }
        sign = v.signum();
    }
    let grad_min = 1.0 / (theta * len);
    let ball = Ball::new(vec![(lo + hi) / 2.0], len / 2.0)?;
    let estimate = estimate_measure(&ball, &Sampler::Grid { per_axis: grid_n }, u64::MAX, |x| {
        let v = f.value(x[0]);
        let dist = (v - v.round()).abs();
        Ok(dist < delta && f.derivative(1, x[0]).abs() > grad_min)
    })?;
    Ok(S1Measure {
        estimate,
        bound: 8.0 * k as f64 * theta * delta * len,
    })
}
