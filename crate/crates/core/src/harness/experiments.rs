//! One runner per subcommand. Each returns CSV tables, a JSON summary and a
//! list of assertion checks; writing them out is left to the caller.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::counting::{
    alpha, eta, scaling_sweep, to_f64, working_order, CountReport, EpsRule, InhomShift, SweepResult,
};
use crate::error::{Error, Result};
use crate::genericity::{
    classify_g, count_generic, cover_resolution, delta_cover_fraction, dyadic_grid, inclusion_params,
    inclusion_survey, lower_bound_radius, default_c0, special_cover, special_prediction,
};
use crate::harness::config::{format_eps_rule, Experiment, QndFamily, RunConfig};
use crate::harness::csvio::{fmt_f64, fmt_list, Table};
use crate::harness::manifest::{CalibrationManifest, FLAG_FACTOR};
use crate::harness::selftest::{basis_survey, identity_suite, minkowski_ok, theory_band};
use crate::khintchine::{exponent_spectrum, mc_khintchine, McConfig};
use crate::manifold::{Ball, ManifoldMap};
use crate::nondivergence::{measure_s, measure_s1_1d, s_bounds, PolyDerivatives, SBoxParams};
use crate::poly::Polynomial;
use crate::sampling::grid_points;
use crate::stats::{ols, LineFit};

/// |slope − (d+1)| allowed for a fixed-ε count sweep.
pub const SLOPE_TOL: f64 = 0.15;
/// Largest count/prediction band for a decaying ε rule.
pub const BAND_LIMIT: f64 = 100.0;
/// Allowed excess of the fitted measure decay slope over the predicted one.
pub const DECAY_TOL: f64 = 0.1;
/// Allowed excess of the fitted special-measure slope over the predicted one.
pub const SPECIAL_SLOPE_TOL: f64 = 0.5;
/// Lower-bound cover and 𝔊 targets.
pub const COVER_TARGET: f64 = 0.5;
pub const OUTSIDE_G_MAX: f64 = 1.0 / 3.0;
/// Relative slack of the one-dimensional measure bound.
pub const S1_GRID_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub tables: Vec<Table>,
    pub summary: Value,
    pub checks: Vec<Check>,
    /// Set by `calibrate` only.
    pub manifest: Option<CalibrationManifest>,
    /// Extra (file name, contents) pairs such as plot data.
    pub files: Vec<(String, String)>,
}

impl Artifact {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Resolved inputs shared by the runners.
pub struct Context<'c> {
    pub cfg: &'c RunConfig,
    pub map: ManifoldMap,
    pub theta: InhomShift,
    pub ball: Ball,
    pub calibration: Option<CalibrationManifest>,
}

impl<'c> Context<'c> {
    pub fn new(cfg: &'c RunConfig, calibration: Option<CalibrationManifest>) -> Result<Self> {
        let map = cfg.manifold()?;
        let theta = cfg.shift(&map)?;
        let ball = cfg.ball(&map)?;
        if let Some(m) = &calibration {
            m.check_applies(&cfg.map, theta.as_slice())?;
        }
        Ok(Context {
            cfg,
            map,
            theta,
            ball,
            calibration,
        })
    }

    fn count_ball(&self) -> Result<Ball> {
        Ball::new(
            self.ball.center.clone(),
            self.cfg.count_radius.unwrap_or(self.ball.radius),
        )
    }

    fn alpha(&self) -> Result<f64> {
        Ok(to_f64(alpha(self.map.n(), self.map.d(), working_order(&self.map))?))
    }

    fn admissible(&self, eps: f64, t: f64) -> Result<bool> {
        let eta_v = to_f64(eta(self.map.n(), self.map.d())?);
        Ok(eps >= self.cfg.eps_slack * (-eta_v * t).exp())
    }
}

/// Runs one experiment on a pool of `cfg.workers` threads.
pub fn run(exp: Experiment, cfg: &RunConfig, calibration: Option<CalibrationManifest>) -> Result<Artifact> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Capability(format!("thread pool: {e}")))?;
    pool.install(|| {
        if exp == Experiment::ReportRender {
            let paths: Vec<_> = cfg.inputs.iter().map(|p| cfg.resolve_path(p)).collect();
            return crate::harness::report::report_render(&paths, calibration.as_ref()).map(|r| r.into_artifact());
        }
        let ctx = Context::new(cfg, if exp == Experiment::Calibrate { None } else { calibration })?;
        match exp {
            Experiment::CountSweep => count_sweep(&ctx),
            Experiment::QndMeasure => qnd_measure(&ctx),
            Experiment::GenericSplit => generic_split(&ctx),
            Experiment::LowerBound => lower_bound(&ctx),
            Experiment::KhintchineMc => khintchine_mc(&ctx),
            Experiment::ExponentSpectrum => spectrum(&ctx),
            Experiment::LatticeSelftest => lattice_selftest(&ctx),
            Experiment::Calibrate => crate::harness::calibrate::calibrate(&ctx),
            Experiment::ReportRender => unreachable!(),
        }
    })
}

fn fmt_bool(b: bool) -> String {
    b.to_string()
}

fn fit_json(fit: &Option<LineFit>) -> Value {
    match fit {
        Some(f) => json!({"slope": f.slope, "intercept": f.intercept, "slope_se": f.slope_se}),
        None => Value::Null,
    }
}

/// Slope of ln(value) against t over the positive values.
pub fn log_fit(ts: &[f64], values: &[f64]) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    ols(&x, &y)
}

// ---- count-sweep ----------------------------------------------------------

pub const COUNT_HEADER: [&str; 11] = [
    "map",
    "eps_rule",
    "t",
    "eps",
    "count",
    "pred_main",
    "pred_error_term",
    "ratio",
    "range_warning",
    "elapsed_s",
    "ball",
];

pub fn count_sweep_rows(ctx: &Context, ball: &Ball, rule: EpsRule) -> Result<SweepResult> {
    let cfg = ctx.cfg;
    let mut res = scaling_sweep(&ctx.map, &ctx.theta, ball, &cfg.t_list, rule, cfg.eps_slack, cfg.budget)?;
    if !cfg.record_timings {
        for r in &mut res.rows {
            r.elapsed_s = 0.0;
        }
    }
    Ok(res)
}

fn count_row(map: &str, rule: &EpsRule, ball: &Ball, r: &CountReport) -> Vec<String> {
    vec![
        map.to_string(),
        format_eps_rule(rule),
        fmt_f64(r.t),
        fmt_f64(r.eps),
        r.count.to_string(),
        fmt_f64(r.pred_main),
        fmt_f64(r.pred_error_term),
        fmt_f64(r.ratio),
        fmt_bool(r.range_warning),
        fmt_f64(r.elapsed_s),
        format!("{}@{}", fmt_list(&ball.center), fmt_f64(ball.radius)),
    ]
}

fn count_sweep(ctx: &Context) -> Result<Artifact> {
    let ball = ctx.count_ball()?;
    let mut table = Table::new("count_sweep", &COUNT_HEADER);
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    let d = ctx.map.d() as f64;
    let eta_v = to_f64(eta(ctx.map.n(), ctx.map.d())?);
    for rule in &ctx.cfg.eps_rules {
        let res = count_sweep_rows(ctx, &ball, *rule)?;
        for r in &res.rows {
            table.push(count_row(&ctx.cfg.map, rule, &ball, r));
        }
        let band = crate::counting::ratio_band(&res.rows);
        let name = format_eps_rule(rule);
        match rule {
            EpsRule::Fixed(_) => {
                let slope = res.fit.map(|f| f.slope).unwrap_or(f64::NAN);
                checks.push(Check::new(
                    format!("slope[{name}]"),
                    (slope - (d + 1.0)).abs() <= SLOPE_TOL,
                    format!("fitted {slope:.4}, expected {} ± {SLOPE_TOL}", d + 1.0),
                ));
            }
            EpsRule::Power(rho) if *rho < eta_v => {
                checks.push(Check::new(
                    format!("ratio_band[{name}]"),
                    band <= BAND_LIMIT,
                    format!("max/min ratio {band:.4} (limit {BAND_LIMIT})"),
                ));
            }
            EpsRule::Power(_) => {}
        }
        if let Some(cal) = &ctx.calibration {
            let low: Vec<&CountReport> = res
                .rows
                .iter()
                .filter(|r| !r.range_warning && r.ratio < cal.c_lower / FLAG_FACTOR)
                .collect();
            checks.push(Check::new(
                format!("lower_constant[{name}]"),
                low.is_empty(),
                format!("{} rows below C_lower/{FLAG_FACTOR} = {:.4}", low.len(), cal.c_lower / FLAG_FACTOR),
            ));
            checks.push(Check::new(
                format!("count_band[{name}]"),
                !(band > FLAG_FACTOR * cal.count_band),
                format!("band {band:.4}, frozen {}", cal.count_band),
            ));
        }
        fits.push(json!({"eps_rule": name, "fit": fit_json(&res.fit), "ratio_band": band}));
    }
    Ok(Artifact {
        tables: vec![table],
        summary: json!({"expected_slope": d + 1.0, "sweeps": fits}),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

// ---- qnd-measure ----------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct QndRow {
    pub eps_rule: String,
    pub t: f64,
    pub eps: f64,
    pub params: SBoxParams,
    pub admissible: bool,
    pub measure: f64,
    pub half_width: f64,
    pub samples: u64,
    pub sharp: f64,
    pub classical: f64,
    /// The two pieces of the sharp bound with unit constant.
    pub sharp_first: f64,
    pub sharp_second_unit: f64,
    /// The classical bound with unit constant.
    pub classical_unit: f64,
}

pub fn qnd_rows(ctx: &Context, rule: EpsRule) -> Result<Vec<QndRow>> {
    let cfg = ctx.cfg;
    let (e_sharp, e_s) = ctx.calibration.as_ref().map_or((1.0, 1.0), |c| (c.e_sharp, c.e_s));
    let ts: Vec<f64> = match cfg.qnd_family {
        QndFamily::Scaled => cfg.t_list.clone(),
        _ => vec![0.0],
    };
    let mut rows = Vec::with_capacity(ts.len());
    for t in ts {
        let (eps, params) = match cfg.qnd_family {
            QndFamily::Scaled => {
                let eps = rule.eps(t);
                (eps, inclusion_params(ctx.map.n(), eps, t, cfg.c_family)?)
            }
            _ => (
                f64::NAN,
                SBoxParams::new(
                    cfg.delta.expect("validated"),
                    cfg.k.expect("validated"),
                    cfg.t_box.clone().expect("validated"),
                )?,
            ),
        };
        let m = measure_s(&ctx.map, &ctx.ball, &params, &cfg.sampler, cfg.budget, (e_sharp, e_s))?;
        let unit = s_bounds(&ctx.map, &ctx.ball, &params, 1.0, 1.0)?;
        let first = s_bounds(&ctx.map, &ctx.ball, &params, 0.0, 1.0)?.sharp;
        rows.push(QndRow {
            eps_rule: format_eps_rule(&rule),
            t,
            eps,
            admissible: params.admissible(),
            params,
            measure: m.estimate.value,
            half_width: m.estimate.half_width,
            samples: m.estimate.samples,
            sharp: m.bounds.sharp,
            classical: m.bounds.classical,
            sharp_first: first,
            sharp_second_unit: unit.sharp - first,
            classical_unit: unit.classical,
        });
    }
    Ok(rows)
}

fn qnd_measure(ctx: &Context) -> Result<Artifact> {
    if ctx.cfg.qnd_family == QndFamily::S1 {
        return qnd_s1(ctx);
    }
    let mut table = Table::new(
        "qnd_measure",
        &[
            "map", "eps_rule", "t", "eps", "delta", "k", "t_box", "admissible", "measure", "half_width", "samples",
            "bound_sharp", "bound_classical",
        ],
    );
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    let rules: Vec<EpsRule> = match ctx.cfg.qnd_family {
        QndFamily::Scaled => ctx.cfg.eps_rules.clone(),
        _ => vec![ctx.cfg.eps_rules[0]],
    };
    for rule in rules {
        let rows = qnd_rows(ctx, rule)?;
        for r in &rows {
            table.push(vec![
                ctx.cfg.map.clone(),
                r.eps_rule.clone(),
                fmt_f64(r.t),
                fmt_f64(r.eps),
                fmt_f64(r.params.delta),
                fmt_f64(r.params.k),
                fmt_list(&r.params.t),
                fmt_bool(r.admissible),
                fmt_f64(r.measure),
                fmt_f64(r.half_width),
                r.samples.to_string(),
                fmt_f64(r.sharp),
                fmt_f64(r.classical),
            ]);
        }
        if let Some(cal) = &ctx.calibration {
            let over = rows
                .iter()
                .filter(|r| r.measure > FLAG_FACTOR * r.classical + r.half_width)
                .count();
            checks.push(Check::new(
                format!("classical_bound[{}]", format_eps_rule(&rule)),
                over == 0,
                format!("{over} rows above {FLAG_FACTOR}·E_S shape (E_S = {})", cal.e_s),
            ));
        }
        if ctx.cfg.qnd_family == QndFamily::Scaled {
            let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let fit = log_fit(&ts, &rows.iter().map(|r| r.measure).collect::<Vec<_>>());
            let pred = log_fit(&ts, &rows.iter().map(|r| r.classical_unit).collect::<Vec<_>>());
            let name = format!("decay[{}]", format_eps_rule(&rule));
            match (fit, pred) {
                (Some(f), Some(p)) => checks.push(Check::new(
                    name,
                    f.slope <= p.slope + DECAY_TOL,
                    format!("fitted slope {:.4}, predicted {:.4} (tolerance {DECAY_TOL})", f.slope, p.slope),
                )),
                _ => {
                    let zeros = rows.iter().filter(|r| r.measure == 0.0).count();
                    checks.push(Check::new(
                        name,
                        zeros + 1 >= rows.len(),
                        format!("{zeros} of {} estimates vanish; no slope fit", rows.len()),
                    ))
                }
            }
            fits.push(json!({"eps_rule": format_eps_rule(&rule), "fit": fit_json(&fit), "predicted": fit_json(&pred)}));
        }
    }
    Ok(Artifact {
        tables: vec![table],
        summary: json!({"family": ctx.cfg.qnd_family, "alpha": ctx.alpha()?, "fits": fits}),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

fn qnd_s1(ctx: &Context) -> Result<Artifact> {
    let cfg = ctx.cfg;
    let poly = Polynomial::univariate_f64(cfg.s1_poly.as_deref().expect("validated"))?;
    let grid_n = match cfg.sampler {
        crate::sampling::Sampler::Grid { per_axis } => per_axis,
        crate::sampling::Sampler::Mc { .. } => {
            return Err(Error::Schema("the s1 family needs a grid sampler".into()))
        }
    };
    if grid_n > cfg.budget {
        return Err(Error::BudgetExceeded {
            what: "measure_s1_1d grid".into(),
            needed: grid_n as u128,
            budget: cfg.budget,
        });
    }
    let delta = cfg.delta.expect("validated");
    let f = PolyDerivatives::new(&poly, cfg.s1_order.max(1))?;
    let s1 = measure_s1_1d(&f, cfg.s1_order, delta, cfg.s1_theta, cfg.s1_interval, grid_n)?;
    let mut table = Table::new("qnd_s1", &["poly", "order", "delta", "theta", "lo", "hi", "grid_n", "measure", "bound"]);
    table.push(vec![
        fmt_list(cfg.s1_poly.as_deref().expect("validated")),
        cfg.s1_order.to_string(),
        fmt_f64(delta),
        fmt_f64(cfg.s1_theta),
        fmt_f64(cfg.s1_interval.0),
        fmt_f64(cfg.s1_interval.1),
        grid_n.to_string(),
        fmt_f64(s1.estimate.value),
        fmt_f64(s1.bound),
    ]);
    let pass = s1.estimate.value <= s1.bound * (1.0 + S1_GRID_TOL);
    Ok(Artifact {
        tables: vec![table],
        summary: json!({"measure": s1.estimate.value, "bound": s1.bound}),
        checks: vec![Check::new(
            "s1_bound",
            pass,
            format!("estimate {:.6e}, bound 8kΘδL = {:.6e}", s1.estimate.value, s1.bound),
        )],
        manifest: None,
        files: Vec::new(),
    })
}

// ---- generic-split --------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SplitRow {
    pub eps_rule: String,
    pub t: f64,
    pub eps: f64,
    pub per_axis: u64,
    pub cover_points: usize,
    pub special_raw: f64,
    /// Thickened special measure over vol(B).
    pub special_fraction: f64,
    pub special_pred: f64,
    pub inclusion_failures: usize,
    pub max_c: Option<f64>,
    pub total: u64,
    pub generic: u64,
    pub generic_pred: f64,
    pub generic_ratio: f64,
    pub tile_max: u64,
    pub tile_pred: f64,
    pub tile_ratio: f64,
}

pub fn split_rows(ctx: &Context, rule: EpsRule) -> Result<Vec<SplitRow>> {
    let cfg = ctx.cfg;
    let count_ball = ctx.count_ball()?;
    let alpha_v = ctx.alpha()?;
    let mut rows = Vec::new();
    for &t in &cfg.t_list {
        let eps = rule.eps(t);
        let per_axis = cfg.per_axis.unwrap_or_else(|| cover_resolution(&ctx.ball, eps, t));
        let cover = special_cover(&ctx.map, &ctx.ball, eps, t, per_axis, cfg.budget)?;
        let survey = inclusion_survey(&ctx.map, &cover, eps, t, &dyadic_grid())?;
        let gc = count_generic(&ctx.map, &ctx.theta, &count_ball, eps, t, &cover, cfg.budget)?;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        rows.push(SplitRow {
            eps_rule: format_eps_rule(&rule),
            t,
            eps,
            per_axis,
            cover_points: cover.len(),
            special_raw: cover.raw_fraction(),
            special_fraction: cover.measure_estimate() / ctx.ball.volume(),
            special_pred: special_prediction(&ctx.map, eps, t, alpha_v),
            inclusion_failures: survey.failures.len(),
            max_c: survey.max_c,
            total: gc.total,
            generic: gc.generic,
            generic_pred: gc.prediction,
            generic_ratio: ratio(gc.generic as f64, gc.prediction),
            tile_max: gc.tile_max,
            tile_pred: gc.tile_prediction,
            tile_ratio: ratio(gc.tile_max as f64, gc.tile_prediction),
        });
    }
    Ok(rows)
}

pub const SPLIT_HEADER: [&str; 18] = [
    "map",
    "eps_rule",
    "t",
    "eps",
    "per_axis",
    "cover_points",
    "special_raw",
    "special_fraction",
    "special_pred",
    "inclusion_failures",
    "max_c",
    "total",
    "generic",
    "generic_pred",
    "generic_ratio",
    "tile_max",
    "tile_pred",
    "tile_ratio",
];

fn generic_split(ctx: &Context) -> Result<Artifact> {
    let mut table = Table::new("generic_split", &SPLIT_HEADER);
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    for rule in &ctx.cfg.eps_rules {
        let rows = split_rows(ctx, *rule)?;
        for r in &rows {
            table.push(vec![
                ctx.cfg.map.clone(),
                r.eps_rule.clone(),
                fmt_f64(r.t),
                fmt_f64(r.eps),
                r.per_axis.to_string(),
                r.cover_points.to_string(),
                fmt_f64(r.special_raw),
                fmt_f64(r.special_fraction),
                fmt_f64(r.special_pred),
                r.inclusion_failures.to_string(),
                fmt_f64(r.max_c.unwrap_or(0.0)),
                r.total.to_string(),
                r.generic.to_string(),
                fmt_f64(r.generic_pred),
                fmt_f64(r.generic_ratio),
                r.tile_max.to_string(),
                fmt_f64(r.tile_pred),
                fmt_f64(r.tile_ratio),
            ]);
        }
        let name = format_eps_rule(rule);
        let points: usize = rows.iter().map(|r| (r.special_raw * (r.per_axis as f64).powi(ctx.map.d() as i32)).round() as usize).sum();
        let failures: usize = rows.iter().map(|r| r.inclusion_failures).sum();
        checks.push(Check::new(
            format!("inclusion[{name}]"),
            failures == 0,
            format!("{failures} failures over {points} special grid points"),
        ));
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let fit = log_fit(&ts, &rows.iter().map(|r| r.special_fraction).collect::<Vec<_>>());
        let pred = log_fit(&ts, &rows.iter().map(|r| r.special_pred).collect::<Vec<_>>());
        if let (Some(f), Some(p)) = (fit, pred) {
            checks.push(Check::new(
                format!("special_decay[{name}]"),
                f.slope <= p.slope + SPECIAL_SLOPE_TOL,
                format!("fitted {:.4}, predicted at most {:.4} + {SPECIAL_SLOPE_TOL}", f.slope, p.slope),
            ));
        }
        if let Some(cal) = &ctx.calibration {
            let bad_g = rows.iter().filter(|r| r.generic_ratio > FLAG_FACTOR * cal.c_generic).count();
            checks.push(Check::new(
                format!("generic_constant[{name}]"),
                bad_g == 0,
                format!("{bad_g} rows above {FLAG_FACTOR}·{}", cal.c_generic),
            ));
            let bad_t = rows.iter().filter(|r| r.tile_ratio > FLAG_FACTOR * cal.c_tile).count();
            checks.push(Check::new(
                format!("tile_constant[{name}]"),
                bad_t == 0,
                format!("{bad_t} rows above {FLAG_FACTOR}·{}", cal.c_tile),
            ));
            let bad_s = rows
                .iter()
                .filter(|r| r.special_fraction > FLAG_FACTOR * cal.k0 * r.special_pred)
                .count();
            checks.push(Check::new(
                format!("special_constant[{name}]"),
                bad_s == 0,
                format!("{bad_s} rows above {FLAG_FACTOR}·K₀ shape (K₀ = {})", cal.k0),
            ));
            let bad_c = rows
                .iter()
                .filter(|r| r.max_c.is_some_and(|c| c > cal.c_inclusion))
                .count();
            checks.push(Check::new(
                format!("inclusion_constant[{name}]"),
                bad_c == 0,
                format!("{bad_c} rows need c above {}", cal.c_inclusion),
            ));
        }
        fits.push(json!({"eps_rule": name, "special_fit": fit_json(&fit), "special_predicted": fit_json(&pred)}));
    }
    Ok(Artifact {
        tables: vec![table],
        summary: json!({"alpha": ctx.alpha()?, "fits": fits}),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

// ---- lower-bound ----------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LowerRow {
    pub eps_rule: String,
    pub t: f64,
    pub eps: f64,
    pub admissible: bool,
    pub c0: f64,
    pub rho: f64,
    pub per_axis: u64,
    pub fraction: f64,
    pub witnesses: u64,
    pub centers: u64,
    pub g_fraction: f64,
    /// max dual δ₁ / v^{1/n} over points outside 𝔊 (0 if none).
    pub dual_ratio_max: f64,
}

pub fn default_cover_grid(d: usize) -> u64 {
    if d == 1 {
        1 << 20
    } else {
        1 << 10
    }
}

/// 𝔊 fraction over a grid and the largest dual ratio off 𝔊.
pub fn g_survey(ctx: &Context, eps: f64, t: f64) -> Result<(f64, f64)> {
    let v = ctx.cfg.v;
    let pts = grid_points(&ctx.ball, ctx.cfg.g_points);
    let cells = pts
        .par_iter()
        .map(|x| classify_g(&ctx.map, x, v, t, eps))
        .collect::<Result<Vec<_>>>()?;
    let inside = cells.iter().filter(|c| c.in_g).count();
    let scale = v.powf(1.0 / ctx.map.n() as f64);
    let dual_max = cells
        .iter()
        .filter(|c| !c.in_g)
        .map(|c| c.dual_delta1 / scale)
        .fold(0.0, f64::max);
    Ok((inside as f64 / cells.len().max(1) as f64, dual_max))
}

pub fn lower_rows(ctx: &Context, rule: EpsRule, ts: &[f64], c0: f64, with_g: bool) -> Result<Vec<LowerRow>> {
    let cfg = ctx.cfg;
    let per_axis = cfg.per_axis.unwrap_or_else(|| default_cover_grid(ctx.map.d()));
    let mut rows = Vec::new();
    for &t in ts {
        let eps = rule.eps(t);
        let rho = lower_bound_radius(&ctx.map, eps, t, c0);
        let cf = delta_cover_fraction(&ctx.map, &ctx.theta, &ctx.ball, eps, t, rho, per_axis, cfg.budget)?;
        let (g_fraction, dual_ratio_max) = if with_g { g_survey(ctx, eps, t)? } else { (f64::NAN, f64::NAN) };
        rows.push(LowerRow {
            eps_rule: format_eps_rule(&rule),
            t,
            eps,
            admissible: ctx.admissible(eps, t)?,
            c0,
            rho,
            per_axis,
            fraction: cf.fraction,
            witnesses: cf.witnesses,
            centers: cf.centers,
            g_fraction,
            dual_ratio_max,
        });
    }
    Ok(rows)
}

fn lower_bound(ctx: &Context) -> Result<Artifact> {
    let cfg = ctx.cfg;
    let c0 = cfg
        .c0
        .or(ctx.calibration.as_ref().map(|c| c.c0))
        .unwrap_or_else(|| default_c0(cfg.v, ctx.map.n()));
    let mut table = Table::new(
        "lower_bound",
        &[
            "map", "eps_rule", "t", "eps", "admissible", "c0", "rho", "per_axis", "fraction", "witnesses", "centers",
            "g_fraction", "dual_ratio_max",
        ],
    );
    let mut checks = Vec::new();
    for rule in &cfg.eps_rules {
        let rows = lower_rows(ctx, *rule, &cfg.t_list, c0, true)?;
        for r in &rows {
            table.push(vec![
                cfg.map.clone(),
                r.eps_rule.clone(),
                fmt_f64(r.t),
                fmt_f64(r.eps),
                fmt_bool(r.admissible),
                fmt_f64(r.c0),
                fmt_f64(r.rho),
                r.per_axis.to_string(),
                fmt_f64(r.fraction),
                r.witnesses.to_string(),
                r.centers.to_string(),
                fmt_f64(r.g_fraction),
                fmt_f64(r.dual_ratio_max),
            ]);
        }
        let name = format_eps_rule(rule);
        let adm: Vec<&LowerRow> = rows.iter().filter(|r| r.admissible).collect();
        let low = adm.iter().filter(|r| r.fraction < COVER_TARGET).count();
        checks.push(Check::new(
            format!("cover_fraction[{name}]"),
            low == 0,
            format!(
                "{low} of {} admissible rows below {COVER_TARGET}; min {:.4}",
                adm.len(),
                adm.iter().map(|r| r.fraction).fold(f64::INFINITY, f64::min)
            ),
        ));
        let bad_g = adm.iter().filter(|r| 1.0 - r.g_fraction > OUTSIDE_G_MAX).count();
        checks.push(Check::new(
            format!("outside_g[{name}]"),
            bad_g == 0,
            format!("{bad_g} admissible rows with more than {OUTSIDE_G_MAX:.4} of B outside 𝔊 at v = {}", cfg.v),
        ));
        if let Some(cal) = &ctx.calibration {
            let bad = rows.iter().filter(|r| r.dual_ratio_max > FLAG_FACTOR * cal.c_dual).count();
            checks.push(Check::new(
                format!("dual_constant[{name}]"),
                bad == 0,
                format!("{bad} rows above {FLAG_FACTOR}·{}", cal.c_dual),
            ));
        }
    }
    Ok(Artifact {
        tables: vec![table],
        summary: json!({"c0": c0, "v": cfg.v}),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

// ---- khintchine-mc and exponent-spectrum ----------------------------------

fn sampling_map(ctx: &Context) -> Result<ManifoldMap> {
    ctx.map.with_domain(ctx.ball.clone())
}

fn khintchine_mc(ctx: &Context) -> Result<Artifact> {
    let cfg = ctx.cfg;
    let map = sampling_map(ctx)?;
    let psi = cfg.psi.clone().expect("validated");
    let mc = McConfig {
        n_samples: cfg.n_samples,
        q_max: cfg.q_max,
        seed: cfg.seed.expect("validated"),
        tail_q: cfg.tail_q.unwrap_or((cfg.q_max / 100).max(1)),
        window_lo: cfg.window_lo,
    };
    let s = mc_khintchine(&map, &ctx.theta, &psi, &mc, cfg.budget)?;
    let mut samples = Table::new(
        "khintchine_samples",
        &["sample_id", "x", "hits_total", "ambiguous", "last_block_hit", "tail_hit", "exponent_estimate"],
    );
    for r in &s.rows {
        samples.push(vec![
            r.sample_id.to_string(),
            fmt_list(&r.x),
            r.hits_total.to_string(),
            r.ambiguous.to_string(),
            fmt_bool(r.last_block_hit),
            fmt_bool(r.tail_hit),
            fmt_f64(r.exponent_estimate),
        ]);
    }
    let mut thresholds = Table::new("khintchine_thresholds", &["threshold", "fraction"]);
    for (q, f) in &s.thresholds {
        thresholds.push(vec![q.to_string(), fmt_f64(*f)]);
    }
    let mut checks = Vec::new();
    if let Some(min) = cfg.expect_last_block_min {
        checks.push(Check::new(
            "last_block_fraction",
            s.last_block_fraction >= min,
            format!("{:.4} (se {:.4}), expected >= {min}", s.last_block_fraction, s.last_block_se),
        ));
    }
    if let Some(max) = cfg.expect_tail_max {
        checks.push(Check::new(
            "tail_fraction",
            s.tail_fraction <= max,
            format!(
                "{:.4} (se {:.4}) above q = {}, expected <= {max}",
                s.tail_fraction, s.tail_se, mc.tail_q
            ),
        ));
    }
    Ok(Artifact {
        tables: vec![samples, thresholds],
        summary: json!({
            "psi": psi,
            "tail_q": mc.tail_q,
            "last_block_fraction": s.last_block_fraction,
            "last_block_se": s.last_block_se,
            "tail_fraction": s.tail_fraction,
            "tail_se": s.tail_se,
            "mean_hits": s.mean_hits,
            "first_moment": s.first_moment,
        }),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

fn spectrum(ctx: &Context) -> Result<Artifact> {
    let cfg = ctx.cfg;
    let map = sampling_map(ctx)?;
    let rep = exponent_spectrum(
        &map,
        &ctx.theta,
        cfg.n_samples,
        cfg.q_max,
        cfg.seed.expect("validated"),
        cfg.bins,
        cfg.hist_range,
        cfg.budget,
    )?;
    let mut samples = Table::new("spectrum_samples", &["sample_id", "estimate"]);
    for (i, e) in rep.estimates.iter().enumerate() {
        samples.push(vec![i.to_string(), fmt_f64(*e)]);
    }
    let mut hist = Table::new("spectrum_histogram", &["lo", "hi", "count"]);
    for (lo, hi, c) in &rep.histogram {
        hist.push(vec![fmt_f64(*lo), fmt_f64(*hi), c.to_string()]);
    }
    let (lo, hi) = cfg.share_range;
    let share = rep.estimates.iter().filter(|&&e| e >= lo && e <= hi).count() as f64 / rep.estimates.len() as f64;
    let mut checks = Vec::new();
    if let Some(min) = cfg.expect_share_min {
        checks.push(Check::new(
            "share_in_range",
            share >= min,
            format!("{share:.4} of estimates in [{lo}, {hi}], expected >= {min}"),
        ));
    }
    Ok(Artifact {
        tables: vec![samples, hist],
        summary: json!({
            "interval": rep.interval,
            "share_in_interval": rep.share_in_interval,
            "share_range": [lo, hi],
            "share_in_range": share,
            "infinite": rep.infinite,
        }),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}

// ---- lattice-selftest -----------------------------------------------------

fn lattice_selftest(ctx: &Context) -> Result<Artifact> {
    let seed = ctx.cfg.seed.unwrap_or(0);
    let mut table = Table::new("lattice_selftest", &["check", "cases", "max_err", "pass"]);
    let mut checks = Vec::new();
    for c in identity_suite(seed, 100)? {
        table.push(vec![c.name.clone(), c.cases.to_string(), fmt_f64(c.max_err), fmt_bool(c.pass)]);
        checks.push(Check::new(c.name, c.pass, format!("max error {:e}", c.max_err)));
    }
    let stats = basis_survey(seed, ctx.cfg.selftest_bases)?;
    let mut bases = Table::new("lattice_bases", &["id", "k", "minkowski_ratio", "transference", "in_band"]);
    let mut mink_bad = 0;
    let mut band_bad = 0;
    for (i, s) in stats.iter().enumerate() {
        let (lo, hi) = ctx
            .calibration
            .as_ref()
            .and_then(|c| c.band(s.k))
            .unwrap_or_else(|| theory_band(s.k));
        let in_band = s.transference >= lo && s.transference <= hi;
        mink_bad += usize::from(!minkowski_ok(s));
        band_bad += usize::from(!in_band);
        bases.push(vec![
            i.to_string(),
            s.k.to_string(),
            fmt_f64(s.minkowski_ratio),
            fmt_f64(s.transference),
            fmt_bool(in_band),
        ]);
    }
    checks.push(Check::new(
        "minkowski_second_theorem",
        mink_bad == 0,
        format!("{mink_bad} of {} bases outside [2^k/k!, 2^k]", stats.len()),
    ));
    let source = if ctx.calibration.is_some() { "frozen" } else { "theory" };
    checks.push(Check::new(
        "transference_band",
        band_bad == 0,
        format!("{band_bad} of {} bases outside the {source} band", stats.len()),
    ));
    Ok(Artifact {
        tables: vec![table, bases],
        summary: json!({"seed": seed, "bases": stats.len(), "band_source": source}),
        checks,
        manifest: None,
        files: Vec::new(),
    })
}
