//! Enumeration of shifted rational points (p + θ)/q near a Monge graph.
//!
//! All counters share one scan: for each denominator q and each integer
//! p_d with (p_d + θ_d)/q in an x-box, the admissible p_m form a product of
//! integer intervals around q·f(u) − θ_m. Counting multiplies interval
//! lengths and never materializes the witnesses.

use std::time::Instant;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{Ball, ManifoldMap};
use crate::stats::{ols, LineFit};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Relative slack used to keep exact boundary ties inside closed boxes.
pub const TIE_TOL: f64 = 1e-13;
const RANGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InhomShift {
    theta: Vec<f64>,
}

impl InhomShift {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("shift must be finite"));
        }
        Ok(InhomShift { theta })
    }

    pub fn zero(n: usize) -> Self {
        InhomShift { theta: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_d(&self, d: usize) -> &[f64] {
        &self.theta[..d]
    }

    pub fn theta_m(&self, d: usize) -> &[f64] {
        &self.theta[d..]
    }

    pub fn check(&self, map: &ManifoldMap) -> Result<()> {
        if self.theta.len() != map.n() {
            return Err(Error::InvalidDimension(format!(
                "shift has {} coordinates, map has n = {}",
                self.theta.len(),
                map.n()
            )));
        }
        Ok(())
    }
}

/// (q, p) with p = (p_d, p_m).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RationalWitness {
    pub q: i64,
    pub p: Vec<i64>,
}

/// η(n, d): 1/(n−1) for d > 1 and 3/(2n−1) for d = 1.
pub fn eta(n: usize, d: usize) -> Result<Rational64> {
    if d == 0 || d >= n {
        return Err(Error::InvalidDimension(format!("need 1 <= d < n, got d={d}, n={n}")));
    }
    Ok(if d > 1 {
        Rational64::new(1, n as i64 - 1)
    } else {
        Rational64::new(3, 2 * n as i64 - 1)
    })
}

/// α(n, d, l) = 1/(d(2l−1)(n+1)).
pub fn alpha(n: usize, d: usize, l: u32) -> Result<Rational64> {
    if l == 0 || d == 0 {
        return Err(Error::param("alpha needs l >= 1 and d >= 1"));
    }
    Ok(Rational64::new(1, d as i64 * (2 * l as i64 - 1) * (n as i64 + 1)))
}

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Integer denominators with e^{t−1} ≤ q ≤ e^t.
pub fn q_block(t: f64) -> (i64, i64) {
    let lo = ((t - 1.0).exp() * (1.0 - RANGE_TOL)).ceil().max(1.0) as i64;
    let hi = (t.exp() * (1.0 + RANGE_TOL)).floor() as i64;
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Radius {
    /// |q f_j − θ_j − p_j| ≤ r
    Absolute(f64),
    /// |q f_j − θ_j − p_j| ≤ q·r
    PerQ(f64),
}

/// One scan: a q-range, an x-box, where to evaluate f, and the p_m tolerance.
#[derive(Clone, Debug)]
pub struct ScanSpec<'a> {
    pub map: &'a ManifoldMap,
    pub theta: &'a [f64],
    pub q_lo: i64,
    pub q_hi: i64,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    /// Evaluate f at the clamp of (p_d+θ_d)/q into this ball instead of the point itself.
    pub clamp: Option<&'a Ball>,
    pub radius: Radius,
}

/// What a visitor sees for one (q, p_d) with nonempty p_m box.
pub struct Hit<'h> {
    pub q: i64,
    pub p_d: &'h [i64],
    /// (p_d + θ_d)/q
    pub x: &'h [f64],
    /// Point where f was evaluated (x or its clamp).
    pub u: &'h [f64],
    /// Inclusive p_m ranges per component.
    pub ranges: &'h [(i64, i64)],
}

impl Hit<'_> {
    pub fn multiplicity(&self) -> u64 {
        self.ranges.iter().map(|(a, b)| (b - a + 1) as u64).product()
    }
}

fn tie(v: f64) -> f64 {
    TIE_TOL * (1.0 + v.abs())
}

impl<'a> ScanSpec<'a> {
    /// The set 𝒩: q in the block of t, (p_d+θ_d)/q ∈ B, |q f − θ_m − p_m| ≤ ε.
    pub fn near(map: &'a ManifoldMap, theta: &'a InhomShift, ball: &Ball, eps: f64, t: f64) -> Result<Self> {
        check_common(map, theta, ball, eps, t)?;
        let (q_lo, q_hi) = q_block(t);
        Ok(ScanSpec {
            map,
            theta: theta.as_slice(),
            q_lo,
            q_hi,
            x_lo: (0..ball.dim()).map(|i| ball.lo(i)).collect(),
            x_hi: (0..ball.dim()).map(|i| ball.hi(i)).collect(),
            clamp: None,
            radius: Radius::Absolute(eps),
        })
    }

    /// Projection-witness scan for N*: threshold r0 on the sup distance,
    /// scaled by `widen` on the f-coordinates.
    pub fn star(
        map: &'a ManifoldMap,
        theta: &'a InhomShift,
        delta: &'a Ball,
        r0: f64,
        q_lo: i64,
        q_hi: i64,
        widen: f64,
    ) -> Result<Self> {
        theta.check(map)?;
        if delta.dim() != map.d() {
            return Err(Error::InvalidDimension("ball dimension differs from d".into()));
        }
        if !map.domain().contains_ball(delta) {
            return Err(Error::Precondition("the ball must lie inside the working domain".into()));
        }
        Ok(ScanSpec {
            map,
            theta: theta.as_slice(),
            q_lo,
            q_hi,
            x_lo: (0..delta.dim()).map(|i| delta.lo(i) - r0).collect(),
            x_hi: (0..delta.dim()).map(|i| delta.hi(i) + r0).collect(),
            clamp: Some(delta),
            radius: Radius::PerQ(r0 * widen),
        })
    }

    fn pd_bounds(&self, q: i64) -> Vec<(i64, i64)> {
        let qf = q as f64;
        (0..self.x_lo.len())
            .map(|i| {
                let th = self.theta[i];
                let lo = qf * self.x_lo[i] - th;
                let hi = qf * self.x_hi[i] - th;
                ((lo - tie(lo)).ceil() as i64, (hi + tie(hi)).floor() as i64)
            })
            .collect()
    }

    /// Number of (q, p_d) candidates the scan will evaluate.
    pub fn candidates(&self) -> u128 {
        (self.q_lo..=self.q_hi)
            .map(|q| {
                self.pd_bounds(q)
                    .iter()
                    .map(|(a, b)| (b - a + 1).max(0) as u128)
                    .product::<u128>()
            })
            .sum()
    }

    pub fn check_budget(&self, budget: u64, what: &str) -> Result<()> {
        let needed = self.candidates();
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded {
                what: what.to_string(),
                needed,
                budget,
            });
        }
        Ok(())
    }

    fn visit_q<F: FnMut(&Hit)>(&self, q: i64, visit: &mut F) {
        let map = self.map;
        let d = map.d();
        let m = map.m();
        let bounds = self.pd_bounds(q);
        if bounds.iter().any(|(a, b)| a > b) {
            return;
        }
        let qf = q as f64;
        let rad = match self.radius {
            Radius::Absolute(r) => r,
            Radius::PerQ(r) => qf * r,
        };
        let mut p_d: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        let mut x = vec![0.0; d];
        let mut u = vec![0.0; d];
        let mut fv = vec![0.0; m];
        let mut ranges = vec![(0i64, 0i64); m];
        'outer: loop {
            for i in 0..d {
                x[i] = (p_d[i] as f64 + self.theta[i]) / qf;
            }
            match self.clamp {
                Some(ball) => {
                    for i in 0..d {
                        u[i] = x[i].clamp(ball.lo(i), ball.hi(i));
                    }
                }
                None => u.copy_from_slice(&x),
            }
            map.eval_f_into(&u, &mut fv);
            let mut empty = false;
            for j in 0..m {
                let y = qf * fv[j] - self.theta[d + j];
                let tol = tie(y);
                let a = (y - rad - tol).ceil() as i64;
                let b = (y + rad + tol).floor() as i64;
                if a > b {
                    empty = true;
                    break;
                }
                ranges[j] = (a, b);
            }
            if !empty {
                visit(&Hit {
                    q,
                    p_d: &p_d,
                    x: &x,
                    u: &u,
                    ranges: &ranges,
                });
            }
            // odometer, last coordinate fastest
            let mut i = d;
            loop {
                if i == 0 {
                    break 'outer;
                }
                i -= 1;
                if p_d[i] < bounds[i].1 {
                    p_d[i] += 1;
                    for (k, b) in bounds.iter().enumerate().skip(i + 1) {
                        p_d[k] = b.0;
                    }
                    break;
                }
            }
        }
    }

    /// Parallel fold over all hits; `reduce` must be order-independent.
    pub fn fold<A, I, F, R>(&self, identity: I, fold: F, reduce: R) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, &Hit) + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        if self.q_lo > self.q_hi {
            return identity();
        }
        (self.q_lo..=self.q_hi)
            .into_par_iter()
            .fold(&identity, |mut acc, q| {
                self.visit_q(q, &mut |h| fold(&mut acc, h));
                acc
            })
            .reduce(&identity, reduce)
    }

    pub fn count(&self) -> u64 {
        self.fold(|| 0u64, |acc, h| *acc += h.multiplicity(), |a, b| a + b)
    }

    pub fn count_filtered<P: Fn(&[f64]) -> bool + Sync + Send>(&self, keep: P) -> u64 {
        self.fold(
            || 0u64,
            |acc, h| {
                if keep(h.u) {
                    *acc += h.multiplicity();
                }
            },
            |a, b| a + b,
        )
    }

    /// All witnesses sorted by (q, p_d, p_m).
    pub fn witnesses(&self) -> Vec<RationalWitness> {
        if self.q_lo > self.q_hi {
            return Vec::new();
        }
        let per_q: Vec<Vec<RationalWitness>> = (self.q_lo..=self.q_hi)
            .into_par_iter()
            .map(|q| {
                let mut out = Vec::new();
                self.visit_q(q, &mut |h| push_box(h, &mut out));
                out
            })
            .collect();
        per_q.into_iter().flatten().collect()
    }
}

fn push_box(h: &Hit, out: &mut Vec<RationalWitness>) {
    let m = h.ranges.len();
    let mut pm: Vec<i64> = h.ranges.iter().map(|r| r.0).collect();
    loop {
        let mut p = h.p_d.to_vec();
        p.extend_from_slice(&pm);
        out.push(RationalWitness { q: h.q, p });
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if pm[i] < h.ranges[i].1 {
                pm[i] += 1;
                for k in i + 1..m {
                    pm[k] = h.ranges[k].0;
                }
                break;
            }
        }
    }
}

fn check_common(map: &ManifoldMap, theta: &InhomShift, ball: &Ball, eps: f64, t: f64) -> Result<()> {
    theta.check(map)?;
    if ball.dim() != map.d() {
        return Err(Error::InvalidDimension("ball dimension differs from d".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    if !(t >= 0.0 && t < 40.0) {
        return Err(Error::param(format!("t must lie in [0, 40), got {t}")));
    }
    if !map.domain().contains_ball(ball) {
        return Err(Error::Precondition("the ball must lie inside the working domain".into()));
    }
    Ok(())
}

/// Exactly the set 𝒩θ(t, ε, B), sorted by (q, p_d, p_m).
pub fn enumerate_n(
    map: &ManifoldMap,
    theta: &InhomShift,
    ball: &Ball,
    eps: f64,
    t: f64,
    budget: u64,
) -> Result<Vec<RationalWitness>> {
    let spec = ScanSpec::near(map, theta, ball, eps, t)?;
    spec.check_budget(budget, "enumerate_n")?;
    Ok(spec.witnesses())
}

/// #𝒩θ(t, ε, B) without materializing the witnesses.
pub fn count_n(map: &ManifoldMap, theta: &InhomShift, ball: &Ball, eps: f64, t: f64, budget: u64) -> Result<u64> {
    let spec = ScanSpec::near(map, theta, ball, eps, t)?;
    spec.check_budget(budget, "count_n")?;
    Ok(spec.count())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StarMode {
    Witness,
    Rigorous,
}

/// N* count. Witness mode gives lo == hi; rigorous mode brackets the true count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StarCount {
    pub lo: u64,
    pub hi: u64,
}

fn star_range(
    map: &ManifoldMap,
    theta: &InhomShift,
    delta: &Ball,
    r0: f64,
    q_lo: i64,
    q_hi: i64,
    mode: StarMode,
    budget: u64,
) -> Result<StarCount> {
    let spec = ScanSpec::star(map, theta, delta, r0, q_lo, q_hi, 1.0)?;
    spec.check_budget(budget, "count_n_star")?;
    let lo = spec.count();
    let hi = match mode {
        StarMode::Witness => lo,
        StarMode::Rigorous => {
            // Any x* ∈ Δ within r0 of P has the clamp u within r0 of x*, so
            // |f(u) − P_m| ≤ r0 (1 + d·M).
            let widen = 1.0 + map.d() as f64 * map.bound_m();
            let wide = ScanSpec::star(map, theta, delta, r0, q_lo, q_hi, widen)?;
            wide.check_budget(budget, "count_n_star")?;
            wide.count()
        }
    };
    Ok(StarCount { lo, hi })
}

fn check_star(map: &ManifoldMap, eps: f64, t: f64, delta: &Ball) -> Result<()> {
    if delta.dim() != map.d() {
        return Err(Error::InvalidDimension("ball dimension differs from d".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    if !(t >= 0.0 && t < 40.0) {
        return Err(Error::param(format!("t must lie in [0, 40), got {t}")));
    }
    Ok(())
}

/// N*θ(Δ; ε, t): e^{t−1} ≤ q ≤ e^t and inf over Δ of the sup distance ≤ ε/e^t.
pub fn count_n_star(
    map: &ManifoldMap,
    theta: &InhomShift,
    delta: &Ball,
    eps: f64,
    t: f64,
    mode: StarMode,
    budget: u64,
) -> Result<StarCount> {
    check_star(map, eps, t, delta)?;
    let (q_lo, q_hi) = q_block(t);
    star_range(map, theta, delta, eps / t.exp(), q_lo, q_hi, mode, budget)
}

/// Integer q-blocks (lo, hi) partitioning [1, ⌊e^t⌋] from the top down.
pub fn dyadic_blocks(t: f64) -> Vec<(i64, i64)> {
    let mut blocks = Vec::new();
    let mut hi = (t.exp() * (1.0 + RANGE_TOL)).floor() as i64;
    let mut j = 1.0;
    while hi >= 1 {
        let lo = (((t - j).exp() * (1.0 + RANGE_TOL)).floor() as i64 + 1).clamp(1, hi);
        blocks.push((lo, hi));
        hi = lo - 1;
        j += 1.0;
    }
    blocks
}

/// The per-block scans behind Nθ(Δ; ε, t), budget-checked as a whole.
pub fn total_scans<'a>(
    map: &'a ManifoldMap,
    theta: &'a InhomShift,
    delta: &'a Ball,
    eps: f64,
    t: f64,
    budget: u64,
) -> Result<Vec<ScanSpec<'a>>> {
    check_star(map, eps, t, delta)?;
    let r0 = eps / t.exp();
    let specs = dyadic_blocks(t)
        .into_iter()
        .map(|(lo, hi)| ScanSpec::star(map, theta, delta, r0, lo, hi, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let needed: u128 = specs.iter().map(ScanSpec::candidates).sum();
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "count_n_total".into(),
            needed,
            budget,
        });
    }
    Ok(specs)
}

/// Nθ(Δ; ε, t): 1 ≤ q ≤ e^t, threshold ε/e^t, summed over blocks.
pub fn count_n_total(
    map: &ManifoldMap,
    theta: &InhomShift,
    delta: &Ball,
    eps: f64,
    t: f64,
    budget: u64,
) -> Result<u64> {
    Ok(total_scans(map, theta, delta, eps, t, budget)?
        .iter()
        .map(ScanSpec::count)
        .sum())
}

/// Same count over the whole range 1..=⌊e^t⌋ in one scan (consistency check).
pub fn count_n_total_direct(
    map: &ManifoldMap,
    theta: &InhomShift,
    delta: &Ball,
    eps: f64,
    t: f64,
    budget: u64,
) -> Result<u64> {
    check_star(map, eps, t, delta)?;
    let q_hi = (t.exp() * (1.0 + RANGE_TOL)).floor() as i64;
    Ok(star_range(map, theta, delta, eps / t.exp(), 1, q_hi, StarMode::Witness, budget)?.lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum EpsRule {
    Fixed(f64),
    /// ε = e^{−ρt}
    Power(f64),
}

impl EpsRule {
    pub fn eps(&self, t: f64) -> f64 {
        match *self {
            EpsRule::Fixed(e) => e,
            EpsRule::Power(rho) => (-rho * t).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountReport {
    pub t: f64,
    pub eps: f64,
    pub count: u64,
    /// ε^m e^{(d+1)t} vol(B)
    pub pred_main: f64,
    /// e^{(d+1)t} (ε^{n−1/2} e^{3t/2})^{−α}
    pub pred_error_term: f64,
    pub ratio: f64,
    pub mode: String,
    pub elapsed_s: f64,
    /// ε below the admissible range slack·e^{−ηt}
    pub range_warning: bool,
}

pub fn main_prediction(map: &ManifoldMap, ball: &Ball, eps: f64, t: f64) -> f64 {
    eps.powi(map.m() as i32) * ((map.d() as f64 + 1.0) * t).exp() * ball.volume()
}

pub fn error_prediction(map: &ManifoldMap, eps: f64, t: f64, alpha: f64) -> f64 {
    let n = map.n() as f64;
    let inner = (n - 0.5) * eps.ln() + 1.5 * t;
    ((map.d() as f64 + 1.0) * t - alpha * inner).exp()
}

/// Nondegeneracy order at the domain center, falling back to the maximal order.
pub fn working_order(map: &ManifoldMap) -> u32 {
    map.nondegeneracy_order(&map.domain().center, map.l_max())
        .ok()
        .flatten()
        .unwrap_or(map.l_max())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<CountReport>,
    pub fit: Option<LineFit>,
}

/// One 𝒩 count per t with both prediction terms and a log-linear slope fit.
pub fn scaling_sweep(
    map: &ManifoldMap,
    theta: &InhomShift,
    ball: &Ball,
    t_list: &[f64],
    rule: EpsRule,
    slack: f64,
    budget: u64,
) -> Result<SweepResult> {
    if t_list.is_empty() {
        return Err(Error::param("t list is empty"));
    }
    let eta_v = to_f64(eta(map.n(), map.d())?);
    let alpha_v = to_f64(alpha(map.n(), map.d(), working_order(map))?);
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let eps = rule.eps(t);
        let start = Instant::now();
        let count = count_n(map, theta, ball, eps, t, budget)?;
        let elapsed_s = start.elapsed().as_secs_f64();
        let pred_main = main_prediction(map, ball, eps, t);
        rows.push(CountReport {
            t,
            eps,
            count,
            pred_main,
            pred_error_term: error_prediction(map, eps, t, alpha_v),
            ratio: if pred_main > 0.0 { count as f64 / pred_main } else { 0.0 },
            mode: "near".into(),
            elapsed_s,
            range_warning: eps < slack * (-eta_v * t).exp(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.count > 0)
        .map(|r| (r.t, (r.count as f64).ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(SweepResult {
        fit: ols(&xs, &ys),
        rows,
    })
}

/// max/min of the ratio column over rows with positive count.
pub fn ratio_band(rows: &[CountReport]) -> f64 {
    let ratios: Vec<f64> = rows.iter().filter(|r| r.count > 0).map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return f64::NAN;
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}
