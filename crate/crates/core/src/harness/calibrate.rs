//! Fits the frozen constants of a calibration manifest. Upper constants are
//! rounded up to a power of two, lower constants down.

use std::collections::BTreeMap;

use serde_json::json;

use crate::counting::EpsRule;
use crate::error::Result;
use crate::genericity::default_c0;
use crate::harness::config::format_eps_rule;
use crate::harness::csvio::{fmt_f64, Table};
use crate::harness::experiments::{
    count_sweep_rows, g_survey, lower_rows, qnd_rows, split_rows, Artifact, Check, Context, COVER_TARGET,
};
use crate::harness::manifest::{
    dyadic_ceil, dyadic_floor, CalibrationManifest, FitMeta, TransferenceBand, MANIFEST_SCHEMA,
};
use crate::harness::selftest::basis_survey;

/// Floor for upper constants whose fit data are all zero.
pub const MIN_CONST: f64 = 1.0 / 1024.0;
/// The transference bases use a stream distinct from any run seed.
const BAND_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
/// C₀ candidates 2^-4, …, 2^4.
const C0_EXPONENTS: std::ops::RangeInclusive<i32> = -4..=4;

fn upper(values: impl Iterator<Item = f64>) -> f64 {
    dyadic_ceil(values.filter(|v| v.is_finite()).fold(MIN_CONST, f64::max))
}

struct Points(Table);

impl Points {
    fn add(&mut self, quantity: &str, rule: &EpsRule, t: f64, value: f64) {
        self.0
            .push(vec![quantity.into(), format_eps_rule(rule), fmt_f64(t), fmt_f64(value)]);
    }
}

pub fn calibrate(ctx: &Context) -> Result<Artifact> {
    let cfg = ctx.cfg;
    let seed = cfg.seed.expect("validated");
    let mut pts = Points(Table::new("calibration_points", &["quantity", "eps_rule", "t", "value"]));
    let mut checks = Vec::new();

    let stats = basis_survey(seed.wrapping_add(BAND_SEED_OFFSET), cfg.selftest_bases)?;
    let mut by_k: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for s in &stats {
        let e = by_k.entry(s.k).or_insert((f64::INFINITY, 0.0));
        e.0 = e.0.min(s.transference);
        e.1 = e.1.max(s.transference);
    }
    let transference = by_k
        .into_iter()
        .map(|(k, (lo, hi))| TransferenceBand {
            k,
            lo: (lo * 100.0).floor() / 100.0,
            hi: (hi * 100.0).ceil() / 100.0,
        })
        .collect();

    let count_ball = crate::manifold::Ball::new(ctx.ball.center.clone(), cfg.count_radius.unwrap_or(ctx.ball.radius))?;
    let mut lower_ratio = f64::INFINITY;
    let mut band: f64 = 1.0;
    let mut e_s = Vec::new();
    let mut e_sharp = Vec::new();
    let mut k0 = Vec::new();
    let mut c_incl: Vec<f64> = Vec::new();
    let mut c_generic = Vec::new();
    let mut c_tile = Vec::new();
    let mut c_dual = Vec::new();
    for rule in &cfg.eps_rules {
        let sweep = count_sweep_rows(ctx, &count_ball, *rule)?;
        for r in &sweep.rows {
            pts.add("count_ratio", rule, r.t, r.ratio);
            if !r.range_warning && r.count > 0 {
                lower_ratio = lower_ratio.min(r.ratio);
            }
        }
        let b = crate::counting::ratio_band(&sweep.rows);
        if b.is_finite() {
            band = band.max(b);
        }

        for r in qnd_rows(ctx, *rule)? {
            let a = r.measure / r.classical_unit;
            let b = (r.measure - r.sharp_first) / r.sharp_second_unit;
            pts.add("e_s", rule, r.t, a);
            pts.add("e_sharp", rule, r.t, b);
            e_s.push(a);
            e_sharp.push(b);
        }

        for r in split_rows(ctx, *rule)? {
            let k = r.special_fraction / r.special_pred;
            pts.add("k0", rule, r.t, k);
            pts.add("generic_ratio", rule, r.t, r.generic_ratio);
            pts.add("tile_ratio", rule, r.t, r.tile_ratio);
            k0.push(k);
            c_generic.push(r.generic_ratio);
            c_tile.push(r.tile_ratio);
            c_incl.extend(r.max_c);
            let (_, dual) = g_survey(ctx, r.eps, r.t)?;
            pts.add("dual_ratio", rule, r.t, dual);
            c_dual.push(dual);
        }
    }

    let c0 = if cfg.lower_t_list.is_empty() {
        default_c0(cfg.v, ctx.map.n())
    } else {
        let mut chosen = None;
        for e in C0_EXPONENTS {
            let c = 2f64.powi(e);
            let mut ok = true;
            for rule in &cfg.eps_rules {
                for r in lower_rows(ctx, *rule, &cfg.lower_t_list, c, false)? {
                    pts.add(&format!("cover_fraction@{}", fmt_f64(c)), rule, r.t, r.fraction);
                    ok &= !r.admissible || r.fraction >= COVER_TARGET;
                }
            }
            if ok {
                chosen = Some(c);
                break;
            }
        }
        checks.push(Check::new(
            "c0_fit",
            chosen.is_some(),
            match chosen {
                Some(c) => format!("smallest dyadic C₀ with coverage >= {COVER_TARGET}: {c}"),
                None => format!("no C₀ up to 2^{} reaches coverage {COVER_TARGET}", C0_EXPONENTS.end()),
            },
        ));
        chosen.unwrap_or(2f64.powi(*C0_EXPONENTS.end()))
    };

    let manifest = CalibrationManifest {
        schema: MANIFEST_SCHEMA,
        map: cfg.map.clone(),
        theta: ctx.theta.as_slice().to_vec(),
        e_s: upper(e_s.into_iter()),
        e_sharp: upper(e_sharp.into_iter()),
        k0: upper(k0.into_iter()),
        c0,
        c_inclusion: c_incl.into_iter().fold(None, |a: Option<f64>, c| Some(a.map_or(c, |a| a.max(c)))).unwrap_or(1.0),
        c_lower: if lower_ratio.is_finite() && lower_ratio > 0.0 { dyadic_floor(lower_ratio) } else { MIN_CONST },
        c_generic: upper(c_generic.into_iter()),
        c_tile: upper(c_tile.into_iter()),
        c_dual: upper(c_dual.into_iter()),
        count_band: dyadic_ceil(band),
        transference,
        fit: FitMeta {
            date: cfg.fit_date.clone(),
            seed,
            t_list: cfg.t_list.clone(),
            lower_t_list: cfg.lower_t_list.clone(),
            eps_rules: cfg.eps_rules.iter().map(format_eps_rule).collect(),
            ball_center: ctx.ball.center.clone(),
            ball_radius: ctx.ball.radius,
            count_radius: count_ball.radius,
            v: cfg.v,
            bases: cfg.selftest_bases,
        },
    };
    manifest.validate()?;
    Ok(Artifact {
        tables: vec![pts.0],
        summary: json!({ "manifest": manifest }),
        checks,
        manifest: Some(manifest),
        files: Vec::new(),
    })
}
