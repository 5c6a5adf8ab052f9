//! Monte-Carlo experiments on approximability of points on a manifold by
//! shifted rationals, and windowed estimates of the approximation exponent.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::InhomShift;
use crate::error::{Error, Result};
use crate::manifold::{Ball, ManifoldMap};
use crate::poly::{parse_rational, rational_to_f64};
use crate::stats::binomial_se;

pub const DEFAULT_Q_BUDGET: u64 = 1_000_000;
/// Relative rounding error per unit of q in the float distance computation.
const ULP_PER_Q: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ApproxFunction {
    /// ψ(q) = q^{−τ}
    Power { tau: f64 },
    /// Right-constant interpolation of (q, ψ) samples sorted by q.
    Table { q: Vec<f64>, psi: Vec<f64> },
}

impl ApproxFunction {
    pub fn power(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param(format!("tau must be positive, got {tau}")));
        }
        Ok(ApproxFunction::Power { tau })
    }

    pub fn table(q: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != psi.len() {
            return Err(Error::param("table needs equally many q and psi samples, at least one"));
        }
        if q.windows(2).any(|w| !(w[0] < w[1])) || !(q[0] > 0.0) {
            return Err(Error::param("table q values must be positive and strictly increasing"));
        }
        if psi.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::param("table psi values must be non-increasing"));
        }
        if psi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::param("table psi values must lie in (0, 1)"));
        }
        Ok(ApproxFunction::Table { q, psi })
    }

    pub fn eval(&self, q: f64) -> f64 {
        match self {
            ApproxFunction::Power { tau } => q.powf(-tau),
            ApproxFunction::Table { q: qs, psi } => {
                let i = qs.partition_point(|&s| s <= q);
                psi[i.saturating_sub(1)]
            }
        }
    }

    /// Monotone, positive, at most 1, and below 1 from q = 2 on, over [1, q_max].
    pub fn validate(&self, q_max: u64) -> Result<()> {
        let mut prev = f64::INFINITY;
        let mut q = 1u64;
        while q <= q_max {
            let v = self.eval(q as f64);
            if !(v > 0.0 && v <= 1.0) || (q >= 2 && v >= 1.0) || v > prev {
                return Err(Error::param(format!("psi({q}) = {v} violates 0 < psi < 1 or monotonicity")));
            }
            prev = v;
            q = if q < 64 { q + 1 } else { q * 2 };
        }
        Ok(())
    }

    /// Σ_{q ≤ Q} min(1, 2ψ(q))ⁿ: expected hit count for a uniform point.
    pub fn first_moment(&self, n: usize, q_max: u64) -> f64 {
        (1..=q_max)
            .map(|q| (2.0 * self.eval(q as f64)).min(1.0).powi(n as i32))
            .sum()
    }
}

impl FromStr for ApproxFunction {
    type Err = Error;

    /// `power:TAU` or `table:Q1=PSI1,Q2=PSI2,…` (values may be fractions).
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::param("approximation function must be power:TAU or table:Q=PSI,..."))?;
        let num = |t: &str| -> Result<f64> {
            parse_rational(t.trim())
                .map(|r| rational_to_f64(&r))
                .ok_or_else(|| Error::param(format!("not a number: {t:?}")))
        };
        match kind.trim() {
            "power" => ApproxFunction::power(num(rest)?),
            "table" => {
                let mut qs = Vec::new();
                let mut ps = Vec::new();
                for item in rest.split(',') {
                    let (q, p) = item
                        .split_once('=')
                        .ok_or_else(|| Error::param(format!("table entry {item:?} is not Q=PSI")))?;
                    qs.push(num(q)?);
                    ps.push(num(p)?);
                }
                ApproxFunction::table(qs, ps)
            }
            other => Err(Error::param(format!("unknown approximation function kind {other:?}"))),
        }
    }
}

/// Best distance inside one block e^{t−1} ≤ q < e^t.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockMin {
    pub t: u32,
    pub q_lo: u64,
    pub q_hi: u64,
    pub best_q: u64,
    pub best_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxTrace {
    pub x: Vec<f64>,
    /// m_q for q = 1..=Q_max (index q − 1).
    pub m: Vec<f64>,
    /// Absolute error bound per q (0 for an exact trace).
    pub err: Vec<f64>,
    pub blocks: Vec<BlockMin>,
}

impl ApproxTrace {
    pub fn q_max(&self) -> u64 {
        self.m.len() as u64
    }

    pub fn m_q(&self, q: u64) -> f64 {
        self.m[(q - 1) as usize]
    }

    /// (q, m_q) pairs in increasing q.
    pub fn hits(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.m.iter().enumerate().map(|(i, &v)| (i as u64 + 1, v))
    }

    /// Number of q with m_q exactly zero (meaningful for exact traces).
    pub fn exact_zeros(&self) -> u64 {
        self.m.iter().zip(&self.err).filter(|(&v, &e)| v == 0.0 && e == 0.0).count() as u64
    }
}

/// Block index t ≥ 1 with e^{t−1} ≤ q < e^t.
fn block_of(q: u64) -> u32 {
    let mut t = (q as f64).ln().floor() as i64 + 1;
    // guard the float log at block edges
    while t > 1 && ((t - 1) as f64).exp() > q as f64 {
        t -= 1;
    }
    while (t as f64).exp() <= q as f64 {
        t += 1;
    }
    t as u32
}

fn blocks_of(m: &[f64]) -> Vec<BlockMin> {
    let mut blocks: Vec<BlockMin> = Vec::new();
    for (i, &v) in m.iter().enumerate() {
        let q = i as u64 + 1;
        let t = block_of(q);
        match blocks.last_mut() {
            Some(b) if b.t == t => {
                b.q_hi = q;
                if v < b.best_m {
                    b.best_m = v;
                    b.best_q = q;
                }
            }
            _ => blocks.push(BlockMin {
                t,
                q_lo: q,
                q_hi: q,
                best_q: q,
                best_m: v,
            }),
        }
    }
    blocks
}

fn check_q(q_max: u64, budget: u64) -> Result<()> {
    if q_max == 0 {
        return Err(Error::param("Q_max must be at least 1"));
    }
    if q_max > budget {
        return Err(Error::BudgetExceeded {
            what: "trace".into(),
            needed: q_max as u128,
            budget,
        });
    }
    Ok(())
}

/// Sup distance of q·F(x) − θ to Zⁿ for q ≤ Q_max, F(x) = (x, f(x)).
pub fn trace(map: &ManifoldMap, theta: &InhomShift, x: &[f64], q_max: u64, budget: u64) -> Result<ApproxTrace> {
    check_q(q_max, budget)?;
    map.check_domain(x)?;
    if theta.as_slice().len() != map.n() {
        return Err(Error::InvalidDimension("theta must have n entries".into()));
    }
    let full = map.eval_full(x);
    // Only θ mod Zⁿ matters.
    let th: Vec<f64> = theta.as_slice().iter().map(|v| v - v.floor()).collect();
    let scale = full.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut m = Vec::with_capacity(q_max as usize);
    let mut err = Vec::with_capacity(q_max as usize);
    for q in 1..=q_max {
        let qf = q as f64;
        let mut worst: f64 = 0.0;
        for (f, t) in full.iter().zip(&th) {
            let y = qf * f - t;
            worst = worst.max((y - y.round()).abs());
        }
        m.push(worst);
        err.push(ULP_PER_Q * qf * scale * 4.0);
    }
    Ok(ApproxTrace {
        x: x.to_vec(),
        blocks: blocks_of(&m),
        m,
        err,
    })
}

fn dist_to_z(y: &BigRational) -> BigRational {
    let fl = y.floor();
    let frac = y - &fl;
    let other = BigRational::from_integer(BigInt::from(1)) - &frac;
    if frac < other {
        frac
    } else {
        other
    }
}

/// Exact trace for rational x and θ.
pub fn trace_rational(map: &ManifoldMap, theta: &[BigRational], x: &[BigRational], q_max: u64, budget: u64) -> Result<ApproxTrace> {
    check_q(q_max, budget)?;
    if theta.len() != map.n() || x.len() != map.d() {
        return Err(Error::InvalidDimension("theta must have n entries and x d entries".into()));
    }
    let xf: Vec<f64> = x.iter().map(rational_to_f64).collect();
    map.check_domain(&xf)?;
    let mut full: Vec<BigRational> = x.to_vec();
    full.extend(map.eval_f_exact(x));
    let mut m = Vec::with_capacity(q_max as usize);
    for q in 1..=q_max {
        let qr = BigRational::from_integer(BigInt::from(q));
        let worst = full
            .iter()
            .zip(theta)
            .map(|(f, t)| dist_to_z(&(&qr * f - t)))
            .max()
            .unwrap_or_else(BigRational::zero);
        debug_assert!(!worst.is_negative());
        m.push(rational_to_f64(&worst));
    }
    Ok(ApproxTrace {
        x: xf,
        blocks: blocks_of(&m),
        err: vec![0.0; m.len()],
        m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ApproxCount {
    pub hits: u64,
    /// q with |m_q − ψ(q)| within the error bound: neither counted nor rejected.
    pub ambiguous: u64,
}

/// #{q ≤ Q_max : m_q ≤ ψ(q)}, leaving threshold-straddling q as ambiguous.
pub fn is_approximable_count(trace: &ApproxTrace, psi: &ApproxFunction) -> ApproxCount {
    count_from(trace, psi, 1)
}

fn count_from(trace: &ApproxTrace, psi: &ApproxFunction, q_from: u64) -> ApproxCount {
    let mut out = ApproxCount { hits: 0, ambiguous: 0 };
    for (q, v) in trace.hits().skip((q_from.max(1) - 1) as usize) {
        let e = trace.err[(q - 1) as usize];
        let p = psi.eval(q as f64);
        if (v - p).abs() <= e && e > 0.0 {
            out.ambiguous += 1;
        } else if v <= p {
            out.hits += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentEstimate {
    /// max over the window of −log m_q / log q; +∞ when some m_q is zero.
    pub value: f64,
    pub q_at_max: u64,
    /// Some m_q in the window vanished (x rational for θ = 0).
    pub rational_flag: bool,
    /// The maximizing m_q is below its rounding error.
    pub unreliable: bool,
}

/// Windowed exponent over q ∈ [q_lo, Q_max].
pub fn exponent_from_trace(trace: &ApproxTrace, q_lo: u64) -> Result<ExponentEstimate> {
    let q_max = trace.q_max();
    let q_lo = q_lo.max(2);
    if q_lo > q_max {
        return Err(Error::param(format!("window start {q_lo} exceeds Q_max {q_max}")));
    }
    let mut best = ExponentEstimate {
        value: f64::NEG_INFINITY,
        q_at_max: q_lo,
        rational_flag: false,
        unreliable: false,
    };
    for q in q_lo..=q_max {
        let v = trace.m_q(q);
        let e = trace.err[(q - 1) as usize];
        if v == 0.0 && e == 0.0 {
            return Ok(ExponentEstimate {
                value: f64::INFINITY,
                q_at_max: q,
                rational_flag: true,
                unreliable: false,
            });
        }
        let est = if v <= 0.0 { f64::INFINITY } else { -v.ln() / (q as f64).ln() };
        if est > best.value {
            best = ExponentEstimate {
                value: est,
                q_at_max: q,
                rational_flag: false,
                unreliable: v <= e,
            };
        }
    }
    Ok(best)
}

/// Window start ⌈√Q_max⌉.
pub fn default_window(q_max: u64) -> u64 {
    ((q_max as f64).sqrt().ceil() as u64).max(2)
}

pub fn exponent_estimate(
    map: &ManifoldMap,
    theta: &InhomShift,
    x: &[f64],
    q_max: u64,
    q_lo: u64,
    budget: u64,
) -> Result<ExponentEstimate> {
    exponent_from_trace(&trace(map, theta, x, q_max, budget)?, q_lo)
}

/// Sample `id` of a seeded run: ChaCha8 stream `id` of the seed.
pub fn sample_point(domain: &Ball, seed: u64, id: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    (0..domain.dim())
        .map(|i| domain.lo(i) + 2.0 * domain.radius * rng.random::<f64>())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub q_max: u64,
    pub seed: u64,
    /// Threshold for the tail statistic (hits at q > tail_q).
    pub tail_q: u64,
    /// Start of the exponent window; None uses ⌈√Q_max⌉.
    pub window_lo: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRow {
    pub sample_id: u64,
    pub x: Vec<f64>,
    pub hits_total: u64,
    pub ambiguous: u64,
    /// A hit with q in the last block e^{t−1} ≤ q ≤ Q_max, e^t the smallest power above Q_max.
    pub last_block_hit: bool,
    pub tail_hit: bool,
    pub exponent_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSummary {
    pub rows: Vec<SampleRow>,
    pub last_block_fraction: f64,
    pub tail_fraction: f64,
    /// Binomial standard errors of the two fractions.
    pub last_block_se: f64,
    pub tail_se: f64,
    pub mean_hits: f64,
    /// Σ min(1, 2ψ(q))ⁿ over q ≤ Q_max.
    pub first_moment: f64,
    /// (threshold 2^k, fraction of samples with a hit at q > threshold).
    pub thresholds: Vec<(u64, f64)>,
}

fn last_block_start(q_max: u64) -> u64 {
    let t = block_of(q_max);
    ((t - 1) as f64).exp().ceil() as u64
}

pub fn mc_khintchine(map: &ManifoldMap, theta: &InhomShift, psi: &ApproxFunction, cfg: &McConfig, budget: u64) -> Result<McSummary> {
    if cfg.n_samples == 0 {
        return Err(Error::param("n_samples must be positive"));
    }
    check_q(cfg.q_max, budget)?;
    psi.validate(cfg.q_max)?;
    let last_lo = last_block_start(cfg.q_max);
    let window = cfg.window_lo.unwrap_or_else(|| default_window(cfg.q_max));
    let thresholds: Vec<u64> = (0..64).map(|k| 1u64 << k).take_while(|&q| q < cfg.q_max).collect();
    let per_sample: Vec<(SampleRow, Vec<bool>)> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|id| {
            let x = sample_point(map.domain(), cfg.seed, id);
            let tr = trace(map, theta, &x, cfg.q_max, budget)?;
            let all = is_approximable_count(&tr, psi);
            let mut last_hit: Option<u64> = None;
            for (q, v) in tr.hits() {
                let e = tr.err[(q - 1) as usize];
                let p = psi.eval(q as f64);
                if v <= p && !((v - p).abs() <= e && e > 0.0) {
                    last_hit = Some(q);
                }
            }
            let beyond = thresholds.iter().map(|&th| last_hit.is_some_and(|q| q > th)).collect();
            let est = exponent_from_trace(&tr, window)?;
            Ok((
                SampleRow {
                    sample_id: id,
                    x,
                    hits_total: all.hits,
                    ambiguous: all.ambiguous,
                    last_block_hit: last_hit.is_some_and(|q| q >= last_lo),
                    tail_hit: last_hit.is_some_and(|q| q > cfg.tail_q),
                    exponent_estimate: est.value,
                },
                beyond,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let ns = cfg.n_samples as f64;
    let frac = |f: &dyn Fn(&SampleRow) -> bool| per_sample.iter().filter(|(r, _)| f(r)).count() as f64 / ns;
    let last_block_fraction = frac(&|r| r.last_block_hit);
    let tail_fraction = frac(&|r| r.tail_hit);
    let thresholds = thresholds
        .iter()
        .enumerate()
        .map(|(k, &th)| (th, per_sample.iter().filter(|(_, b)| b[k]).count() as f64 / ns))
        .collect();
    let mean_hits = per_sample.iter().map(|(r, _)| r.hits_total as f64).sum::<f64>() / ns;
    Ok(McSummary {
        last_block_se: binomial_se(last_block_fraction, per_sample.len()),
        tail_se: binomial_se(tail_fraction, per_sample.len()),
        rows: per_sample.into_iter().map(|(r, _)| r).collect(),
        last_block_fraction,
        tail_fraction,
        mean_hits,
        first_moment: psi.first_moment(map.n(), cfg.q_max),
        thresholds,
    })
}

/// Interval [1/n, 1/n + (n+1)/(n(2n−1)(n²+n+1))] of attained exponents.
pub fn spectrum_interval(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let lo = 1.0 / nf;
    (lo, lo + (nf + 1.0) / (nf * (2.0 * nf - 1.0) * (nf * nf + nf + 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub estimates: Vec<f64>,
    pub interval: (f64, f64),
    pub share_in_interval: f64,
    /// (bin low edge, bin high edge, count); infinite estimates are not binned.
    pub histogram: Vec<(f64, f64, u64)>,
    pub infinite: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn exponent_spectrum(
    map: &ManifoldMap,
    theta: &InhomShift,
    n_samples: u64,
    q_max: u64,
    seed: u64,
    bins: usize,
    range: (f64, f64),
    budget: u64,
) -> Result<SpectrumReport> {
    if n_samples == 0 || bins == 0 || !(range.0 < range.1) {
        return Err(Error::param("need samples, bins and a nonempty histogram range"));
    }
    check_q(q_max, budget)?;
    let window = default_window(q_max);
    let estimates = (0..n_samples)
        .into_par_iter()
        .map(|id| {
            let x = sample_point(map.domain(), seed, id);
            Ok(exponent_estimate(map, theta, &x, q_max, window, budget)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let interval = spectrum_interval(map.n());
    let inside = estimates.iter().filter(|&&e| e >= interval.0 && e <= interval.1).count();
    let width = (range.1 - range.0) / bins as f64;
    let mut histogram: Vec<(f64, f64, u64)> = (0..bins)
        .map(|b| (range.0 + b as f64 * width, range.0 + (b + 1) as f64 * width, 0))
        .collect();
    let mut infinite = 0;
    for &e in &estimates {
        if e.is_infinite() {
            infinite += 1;
            continue;
        }
        let b = (((e - range.0) / width).floor().max(0.0) as usize).min(bins - 1);
        histogram[b].2 += 1;
    }
    Ok(SpectrumReport {
        share_in_interval: inside as f64 / estimates.len() as f64,
        estimates,
        interval,
        histogram,
        infinite,
    })
}
