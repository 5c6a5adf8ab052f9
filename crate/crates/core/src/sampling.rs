//! Grid and Monte-Carlo estimators for the measure of a subset of a ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Ball;
use crate::stats::Z95;

/// Points per Monte-Carlo chunk; each chunk owns one RNG stream, so results do
/// not depend on the number of workers.
pub const MC_CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sampler {
    /// Cell centers of a regular grid with `per_axis` cells per coordinate.
    Grid { per_axis: u64 },
    Mc { n_pts: u64, seed: u64 },
}

impl Sampler {
    pub fn total_points(&self, dim: usize) -> u128 {
        match *self {
            Sampler::Grid { per_axis } => (per_axis as u128).pow(dim as u32),
            Sampler::Mc { n_pts, .. } => n_pts as u128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub value: f64,
    /// 95% confidence half width (MC) or boundary-cell resolution bound (grid).
    pub half_width: f64,
    pub samples: u64,
}

impl MeasureEstimate {
    pub fn fraction_of(&self, ball: &Ball) -> f64 {
        if ball.volume() == 0.0 {
            0.0
        } else {
            self.value / ball.volume()
        }
    }
}

/// Cell center with linear index `idx` of a grid on `ball`.
pub fn grid_point(ball: &Ball, per_axis: u64, mut idx: u64, out: &mut [f64]) {
    let side = 2.0 * ball.radius / per_axis as f64;
    for i in (0..ball.dim()).rev() {
        let c = idx % per_axis;
        idx /= per_axis;
        out[i] = ball.lo(i) + (c as f64 + 0.5) * side;
    }
}

pub fn grid_points(ball: &Ball, per_axis: u64) -> Vec<Vec<f64>> {
    let total = per_axis.pow(ball.dim() as u32);
    (0..total)
        .map(|idx| {
            let mut p = vec![0.0; ball.dim()];
            grid_point(ball, per_axis, idx, &mut p);
            p
        })
        .collect()
}

/// Uniform points of MC chunk `chunk` (fewer in the final chunk).
pub fn mc_chunk(ball: &Ball, seed: u64, chunk: u64, len: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    (0..len)
        .map(|_| {
            (0..ball.dim())
                .map(|i| ball.lo(i) + 2.0 * ball.radius * rng.random::<f64>())
                .collect()
        })
        .collect()
}

fn check(ball: &Ball, sampler: &Sampler, budget: u64) -> Result<()> {
    let total = sampler.total_points(ball.dim());
    if total == 0 {
        return Err(Error::param("sampler has no points"));
    }
    if total > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "sampler".into(),
            needed: total,
            budget,
        });
    }
    Ok(())
}

/// Grid verdicts in linear-index order.
pub fn grid_verdicts<P>(ball: &Ball, per_axis: u64, pred: P) -> Result<Vec<bool>>
where
    P: Fn(&[f64]) -> Result<bool> + Sync,
{
    let total = per_axis.pow(ball.dim() as u32);
    (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; ball.dim()],
            |p, idx| {
                grid_point(ball, per_axis, idx, p);
                pred(p)
            },
        )
        .collect()
}

/// Number of cells whose verdict differs from an axis neighbor.
pub fn boundary_cells(verdicts: &[bool], dim: usize, per_axis: u64) -> u64 {
    let n = per_axis as usize;
    let mut count = 0;
    for idx in 0..verdicts.len() {
        let mut stride = 1;
        let mut boundary = false;
        for _ in 0..dim {
            let coord = (idx / stride) % n;
            if (coord > 0 && verdicts[idx - stride] != verdicts[idx])
                || (coord + 1 < n && verdicts[idx + stride] != verdicts[idx])
            {
                boundary = true;
                break;
            }
            stride *= n;
        }
        if boundary {
            count += 1;
        }
    }
    count
}

/// Measure of {x ∈ ball : pred(x)}.
pub fn estimate_measure<P>(ball: &Ball, sampler: &Sampler, budget: u64, pred: P) -> Result<MeasureEstimate>
where
    P: Fn(&[f64]) -> Result<bool> + Sync,
{
    check(ball, sampler, budget)?;
    let vol = ball.volume();
    match *sampler {
        Sampler::Grid { per_axis } => {
            let verdicts = grid_verdicts(ball, per_axis, &pred)?;
            let cell = vol / verdicts.len() as f64;
            let hits = verdicts.iter().filter(|&&v| v).count() as f64;
            let edge = boundary_cells(&verdicts, ball.dim(), per_axis) as f64;
            Ok(MeasureEstimate {
                value: hits * cell,
                half_width: edge * cell,
                samples: verdicts.len() as u64,
            })
        }
        Sampler::Mc { n_pts, seed } => {
            let chunks = n_pts.div_ceil(MC_CHUNK);
            let hits: u64 = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let len = MC_CHUNK.min(n_pts - c * MC_CHUNK);
                    let mut h = 0u64;
                    for p in mc_chunk(ball, seed, c, len) {
                        if pred(&p)? {
                            h += 1;
                        }
                    }
                    Ok(h)
                })
                .collect::<Result<Vec<u64>>>()?
                .into_iter()
                .sum();
            let frac = hits as f64 / n_pts as f64;
            Ok(MeasureEstimate {
                value: frac * vol,
                half_width: Z95 * (frac * (1.0 - frac) / n_pts as f64).sqrt() * vol,
                samples: n_pts,
            })
        }
    }
}
