//! Generic/special split of the parameter domain by the last successive minimum
//! of a scaled unipotent lattice, and the lower-bound set defined by the first
//! minimum of a second scaling.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::counting::{main_prediction, total_scans, ScanSpec};
use crate::counting::InhomShift;
use crate::error::{Error, Result};
use crate::lattice::{a_eps_t_v, b_t, d_eps, delta1, delta_last, dual, g_eps_t, u1_matrix, Matrix};
use crate::manifold::{Ball, ManifoldMap};
use crate::nondivergence::{witness_s, SBoxParams, DEFAULT_SEARCH_BUDGET};
use crate::sampling::{grid_point, grid_verdicts};
use crate::stats::quantile;

/// Default dyadic constants tried by the inclusion check: 1, 2, 4, …, 1024.
pub fn dyadic_grid() -> Vec<f64> {
    (0..=10).map(|k| f64::from(1u32 << k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Generic,
    SpecialRaw,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericityVerdict {
    pub x: Vec<f64>,
    pub delta_last: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

fn check_eps_t(eps: f64, t: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param(format!("eps must lie in (0, 1], got {eps}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// The diagonal d_ε b_t g_{ε,t} and the threshold φ e^h.
fn scaling(map: &ManifoldMap, eps: f64, t: f64) -> Result<(Matrix, f64)> {
    check_eps_t(eps, t)?;
    let (n, m, d) = (map.n(), map.m(), map.d());
    let s = d_eps(eps, n, m, d)?.mul(&b_t(t, n, m, d)?).mul(&g_eps_t(eps, t, n)?);
    let phi = crate::lattice::structured::phi(eps, t, n);
    let h = crate::lattice::structured::h_exponent(t, n, d);
    Ok((s, phi * h.exp()))
}

fn classify_with(map: &ManifoldMap, x: &[f64], s: &Matrix, threshold: f64) -> Result<GenericityVerdict> {
    let basis = s.mul(&u1_matrix(map, x)?);
    let last = delta_last(&basis)?;
    Ok(GenericityVerdict {
        x: x.to_vec(),
        delta_last: last,
        threshold,
        verdict: if last > threshold {
            Verdict::SpecialRaw
        } else {
            Verdict::Generic
        },
    })
}

/// δ_{n+1}(d_ε b_t g_{ε,t} u₁(x) Z^{n+1}) against φ e^h.
pub fn classify(map: &ManifoldMap, x: &[f64], eps: f64, t: f64) -> Result<GenericityVerdict> {
    let (s, threshold) = scaling(map, eps, t)?;
    classify_with(map, x, &s, threshold)
}

/// Thickening radius ε^{1/2} e^{−t/2}; also the radius of the counting tiles.
pub fn thickening_radius(eps: f64, t: f64) -> f64 {
    (eps * (-t).exp()).sqrt()
}

/// Cells per axis giving a grid pitch of at most half the thickening radius.
pub fn cover_resolution(ball: &Ball, eps: f64, t: f64) -> u64 {
    let pitch = thickening_radius(eps, t) / 2.0;
    ((2.0 * ball.radius / pitch).ceil() as u64).max(1)
}

/// Raw-special grid points of a ball and their thickening.
#[derive(Clone, Debug, Serialize)]
pub struct SpecialCover {
    pub ball: Ball,
    pub per_axis: u64,
    pub radius: f64,
    /// Raw verdicts in grid linear-index order (true = special).
    #[serde(skip)]
    pub special: Vec<bool>,
}

impl SpecialCover {
    pub fn pitch(&self) -> f64 {
        2.0 * self.ball.radius / self.per_axis as f64
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        let d = self.ball.dim();
        self.special
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(idx, _)| {
                let mut p = vec![0.0; d];
                grid_point(&self.ball, self.per_axis, idx as u64, &mut p);
                p
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.special.iter().filter(|&&s| s).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn raw_fraction(&self) -> f64 {
        self.len() as f64 / self.special.len() as f64
    }

    /// Whether x is within the thickening radius (sup norm) of a special grid point.
    pub fn contains(&self, x: &[f64]) -> bool {
        if self.is_empty_fast() {
            return false;
        }
        let d = self.ball.dim();
        let pitch = self.pitch();
        let n = self.per_axis as i64;
        let mut lo = vec![0i64; d];
        let mut hi = vec![0i64; d];
        for i in 0..d {
            let rel = x[i] - self.ball.lo(i);
            lo[i] = (((rel - self.radius) / pitch - 0.5).floor() as i64).max(0);
            hi[i] = (((rel + self.radius) / pitch - 0.5).ceil() as i64).min(n - 1);
            if lo[i] > hi[i] {
                return false;
            }
        }
        let mut idx = lo.clone();
        loop {
            let mut linear = 0i64;
            let mut dist: f64 = 0.0;
            for i in 0..d {
                linear = linear * n + idx[i];
                let c = self.ball.lo(i) + (idx[i] as f64 + 0.5) * pitch;
                dist = dist.max((x[i] - c).abs());
            }
            if dist <= self.radius && self.special[linear as usize] {
                return true;
            }
            let mut i = d;
            loop {
                if i == 0 {
                    return false;
                }
                i -= 1;
                if idx[i] < hi[i] {
                    idx[i] += 1;
                    for k in i + 1..d {
                        idx[k] = lo[k];
                    }
                    break;
                }
            }
        }
    }

    fn is_empty_fast(&self) -> bool {
        !self.special.iter().any(|&s| s)
    }

    /// Measure of the thickened special set inside the ball, on the same grid.
    pub fn measure_estimate(&self) -> f64 {
        if self.is_empty_fast() {
            return 0.0;
        }
        let d = self.ball.dim();
        let covered = (0..self.special.len() as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |p, idx| {
                    grid_point(&self.ball, self.per_axis, idx, p);
                    self.contains(p) as u64
                },
            )
            .sum::<u64>();
        covered as f64 * self.ball.volume() / self.special.len() as f64
    }

    /// Upper bound for the thickened measure: cover cardinality × ball volume.
    pub fn cover_volume(&self) -> f64 {
        self.len() as f64 * (2.0 * self.radius).powi(self.ball.dim() as i32)
    }
}

/// Classify a grid of B with `per_axis` cells per axis and thicken the raw
/// special points by ε^{1/2} e^{−t/2}.
pub fn special_cover(
    map: &ManifoldMap,
    ball: &Ball,
    eps: f64,
    t: f64,
    per_axis: u64,
    budget: u64,
) -> Result<SpecialCover> {
    if ball.dim() != map.d() {
        return Err(Error::InvalidDimension("ball dimension differs from d".into()));
    }
    if !map.domain().contains_ball(ball) {
        return Err(Error::Precondition("the ball must lie inside the working domain".into()));
    }
    let radius = thickening_radius(eps, t);
    let pitch = 2.0 * ball.radius / per_axis.max(1) as f64;
    if per_axis == 0 || pitch > radius {
        return Err(Error::Precondition(format!(
            "grid pitch {pitch:e} exceeds the thickening radius {radius:e}"
        )));
    }
    let total = (per_axis as u128).pow(ball.dim() as u32);
    if total > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "special_cover".into(),
            needed: total,
            budget,
        });
    }
    let (s, threshold) = scaling(map, eps, t)?;
    let special = grid_verdicts(ball, per_axis, |x| {
        Ok(classify_with(map, x, &s, threshold)?.verdict == Verdict::SpecialRaw)
    })?;
    Ok(SpecialCover {
        ball: ball.clone(),
        per_axis,
        radius,
        special,
    })
}

/// Box parameters (c e^{−t}, c ε^{−1/2} e^{−t/2}, c ε^{−1}) of the inclusion.
pub fn inclusion_params(n: usize, eps: f64, t: f64, c: f64) -> Result<SBoxParams> {
    SBoxParams::new(c * (-t).exp(), c * (-t / 2.0).exp() / eps.sqrt(), vec![c / eps; n])
}

/// Least c in `c_grid` for which a witness of the box set exists at x.
pub fn check_inclusion(map: &ManifoldMap, x: &[f64], eps: f64, t: f64, c_grid: &[f64]) -> Result<Option<f64>> {
    check_eps_t(eps, t)?;
    let mut grid = c_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    for c in grid {
        let params = inclusion_params(map.n(), eps, t, c)?;
        if witness_s(map, x, &params, DEFAULT_SEARCH_BUDGET)?.is_some() {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Inclusion constants over all cover centers.
#[derive(Clone, Debug, Serialize)]
pub struct InclusionSurvey {
    pub points: usize,
    pub failures: Vec<Vec<f64>>,
    pub max_c: Option<f64>,
    pub q95_c: Option<f64>,
    /// Least c per center, None where no c in the grid works.
    #[serde(skip)]
    pub cs: Vec<Option<f64>>,
}

pub fn inclusion_survey(
    map: &ManifoldMap,
    cover: &SpecialCover,
    eps: f64,
    t: f64,
    c_grid: &[f64],
) -> Result<InclusionSurvey> {
    let centers = cover.centers();
    let cs = centers
        .par_iter()
        .map(|x| check_inclusion(map, x, eps, t, c_grid))
        .collect::<Result<Vec<_>>>()?;
    let found: Vec<f64> = cs.iter().flatten().copied().collect();
    let failures = centers
        .iter()
        .zip(&cs)
        .filter(|(_, c)| c.is_none())
        .map(|(x, _)| x.clone())
        .collect();
    Ok(InclusionSurvey {
        points: centers.len(),
        failures,
        max_c: found.iter().copied().reduce(f64::max),
        q95_c: quantile(&found, 0.95),
        cs,
    })
}

/// ε^n e^t (ε e^{−t})^{−d/2}: the per-tile shape.
pub fn tile_prediction(map: &ManifoldMap, eps: f64, t: f64) -> f64 {
    let (n, d) = (map.n() as f64, map.d() as f64);
    (n * eps.ln() + t - d / 2.0 * (eps.ln() - t)).exp()
}

/// (ε^{n−1/2} e^{3t/2})^{−α}: the special-measure shape.
pub fn special_prediction(map: &ManifoldMap, eps: f64, t: f64, alpha: f64) -> f64 {
    let n = map.n() as f64;
    (-alpha * ((n - 0.5) * eps.ln() + 1.5 * t)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericCount {
    pub total: u64,
    pub generic: u64,
    /// ε^m e^{(d+1)t} vol(B)
    pub prediction: f64,
    /// Largest count over tiles of side 2ε^{1/2}e^{−t/2} whose center is generic.
    pub tile_max: u64,
    pub tile_prediction: f64,
    pub tiles: usize,
}

#[derive(Default)]
struct GenericAcc {
    total: u64,
    generic: u64,
    tiles: HashMap<Vec<i64>, u64>,
}

impl GenericAcc {
    fn merge(mut self, other: GenericAcc) -> GenericAcc {
        self.total += other.total;
        self.generic += other.generic;
        for (k, v) in other.tiles {
            *self.tiles.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Nθ(B ∖ 𝔐; ε, t) with the special part given by `cover`.
pub fn count_generic(
    map: &ManifoldMap,
    theta: &InhomShift,
    ball: &Ball,
    eps: f64,
    t: f64,
    cover: &SpecialCover,
    budget: u64,
) -> Result<GenericCount> {
    check_eps_t(eps, t)?;
    let specs = total_scans(map, theta, ball, eps, t, budget)?;
    let side = 2.0 * thickening_radius(eps, t);
    let d = map.d();
    let tile_of = |u: &[f64]| -> Vec<i64> {
        (0..d)
            .map(|i| ((u[i] - ball.lo(i)) / side).floor() as i64)
            .collect()
    };
    let acc = specs
        .iter()
        .map(|spec: &ScanSpec| {
            spec.fold(
                GenericAcc::default,
                |acc, h| {
                    let k = h.multiplicity();
                    acc.total += k;
                    if !cover.contains(h.u) {
                        acc.generic += k;
                    }
                    *acc.tiles.entry(tile_of(h.u)).or_insert(0) += k;
                },
                GenericAcc::merge,
            )
        })
        .fold(GenericAcc::default(), GenericAcc::merge);
    let tile_max = acc
        .tiles
        .iter()
        .filter(|(key, _)| {
            let center: Vec<f64> = key
                .iter()
                .enumerate()
                .map(|(i, &k)| ball.lo(i) + (k as f64 + 0.5) * side)
                .collect();
            !cover.contains(&center)
        })
        .map(|(_, &v)| v)
        .max()
        .unwrap_or(0);
    Ok(GenericCount {
        total: acc.total,
        generic: acc.generic,
        prediction: main_prediction(map, ball, eps, t),
        tile_max,
        tile_prediction: tile_prediction(map, eps, t),
        tiles: acc.tiles.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundCell {
    pub x: Vec<f64>,
    /// δ₁(a_{ε,t,v}^{−1} u₁(x) Z^{n+1})
    pub delta1: f64,
    /// δ₁ of the dual lattice (a_{ε,t,v}^{−1} u₁(x))* Z^{n+1}.
    pub dual_delta1: f64,
    pub in_g: bool,
    /// Cover radius with the constant 1/(2v^{n+1}).
    pub rho: f64,
}

/// C₀ (ε^m e^{(d+1)t})^{−1/d}.
pub fn lower_bound_radius(map: &ManifoldMap, eps: f64, t: f64, c0: f64) -> f64 {
    let (m, d) = (map.m() as f64, map.d() as f64);
    c0 * (-(m * eps.ln() + (d + 1.0) * t) / d).exp()
}

/// The constant 1/(2v^{n+1}) attached to a given v.
pub fn default_c0(v: f64, n: usize) -> f64 {
    1.0 / (2.0 * v.powi(n as i32 + 1))
}

pub fn classify_g(map: &ManifoldMap, x: &[f64], v: f64, t: f64, eps: f64) -> Result<LowerBoundCell> {
    let (n, m, d) = (map.n(), map.m(), map.d());
    let a_inv = a_eps_t_v(eps, t, v, n, m, d)?.inverse()?;
    let basis = a_inv.mul(&u1_matrix(map, x)?);
    let first = delta1(&basis)?;
    let dual_first = delta1(&dual(&basis)?)?;
    Ok(LowerBoundCell {
        x: x.to_vec(),
        delta1: first,
        dual_delta1: dual_first,
        in_g: first >= v,
        rho: lower_bound_radius(map, eps, t, default_c0(v, n)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverFraction {
    pub fraction: f64,
    /// #𝒩θ(t, ε, B) with multiplicity.
    pub witnesses: u64,
    /// Distinct (q, p_d), i.e. ball centers counted with repetition across q.
    pub centers: u64,
}

/// Inclusive index range of grid cells whose centers lie within ρ of x.
fn cell_range(x: f64, lo: f64, pitch: f64, rho: f64, n: i64) -> Option<(usize, usize)> {
    let a = (((x - rho - lo) / pitch - 0.5).ceil() as i64).max(0);
    let b = (((x + rho - lo) / pitch - 0.5).floor() as i64).min(n - 1);
    (a <= b).then_some((a as usize, b as usize))
}

/// d-dimensional difference array over a grid with `n` cells per axis.
struct BoxMarks {
    d: usize,
    n: usize,
    diff: Vec<i64>,
}

impl BoxMarks {
    fn new(d: usize, n: usize) -> Self {
        BoxMarks {
            d,
            n,
            diff: vec![0; n.pow(d as u32)],
        }
    }

    fn add(&mut self, ranges: &[(usize, usize)]) {
        'corners: for mask in 0..(1usize << self.d) {
            let mut idx = 0;
            let mut sign = 1;
            for (i, &(a, b)) in ranges.iter().enumerate() {
                let c = if mask >> i & 1 == 1 {
                    sign = -sign;
                    b + 1
                } else {
                    a
                };
                if c >= self.n {
                    continue 'corners;
                }
                idx = idx * self.n + c;
            }
            self.diff[idx] += sign;
        }
    }

    fn merge(mut self, other: BoxMarks) -> BoxMarks {
        for (a, b) in self.diff.iter_mut().zip(other.diff) {
            *a += b;
        }
        self
    }

    /// Cells covered by at least one box.
    fn covered(mut self) -> u64 {
        let mut stride = 1;
        for _ in 0..self.d {
            for idx in 0..self.diff.len() {
                if (idx / stride) % self.n != 0 {
                    self.diff[idx] += self.diff[idx - stride];
                }
            }
            stride *= self.n;
        }
        self.diff.iter().filter(|&&c| c > 0).count() as u64
    }
}

/// Fraction of a `per_axis`-grid of B covered by the sup-norm ρ-balls around
/// the points (p_d + θ_d)/q of 𝒩θ(t, ε, B).
#[allow(clippy::too_many_arguments)]
pub fn delta_cover_fraction(
    map: &ManifoldMap,
    theta: &InhomShift,
    ball: &Ball,
    eps: f64,
    t: f64,
    rho: f64,
    per_axis: u64,
    budget: u64,
) -> Result<CoverFraction> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    let d = map.d();
    let grid_total = (per_axis as u128).pow(d as u32);
    if per_axis == 0 || grid_total > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "delta_cover_fraction grid".into(),
            needed: grid_total,
            budget,
        });
    }
    let spec = ScanSpec::near(map, theta, ball, eps, t)?;
    spec.check_budget(budget, "delta_cover_fraction")?;
    let n = per_axis as usize;
    let pitch = 2.0 * ball.radius / per_axis as f64;
    let (witnesses, centers, marks) = spec.fold(
        || (0u64, 0u64, BoxMarks::new(d, n)),
        |acc, h| {
            acc.0 += h.multiplicity();
            acc.1 += 1;
            let ranges: Option<Vec<(usize, usize)>> = (0..d)
                .map(|i| cell_range(h.x[i], ball.lo(i), pitch, rho, n as i64))
                .collect();
            if let Some(r) = ranges {
                acc.2.add(&r);
            }
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2.merge(b.2)),
    );
    Ok(CoverFraction {
        fraction: marks.covered() as f64 / grid_total as f64,
        witnesses,
        centers,
    })
}
