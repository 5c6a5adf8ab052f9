//! Merges CSV outputs into a summary: slope refits over the union of count
//! sweeps, ratio bands, and cells above the frozen constants.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::harness::csvio::{fmt_f64, Table};
use crate::harness::experiments::{log_fit, Artifact, Check};
use crate::harness::manifest::{CalibrationManifest, FLAG_FACTOR};
use crate::stats::Z95;

#[derive(Clone, Debug, Serialize)]
pub struct GroupFit {
    pub table: String,
    pub map: String,
    pub eps_rule: String,
    pub points: usize,
    pub slope: Option<f64>,
    /// 95% interval of the slope.
    pub slope_ci: Option<(f64, f64)>,
    pub ratio_band: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Flag {
    pub file: String,
    pub row: usize,
    pub column: String,
    pub value: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub files: Vec<String>,
    pub tables: BTreeMap<String, usize>,
    pub groups: Vec<GroupFit>,
    pub flags: Vec<Flag>,
    /// (name, columnar text) for plotting.
    #[serde(skip)]
    pub plots: Vec<(String, String)>,
}

impl Report {
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "files: {}", self.files.len());
        for (name, rows) in &self.tables {
            let _ = writeln!(s, "table {name}: {rows} rows");
        }
        for g in &self.groups {
            let slope = g.slope.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let ci = g
                .slope_ci
                .map_or("n/a".to_string(), |(a, b)| format!("[{a:.4}, {b:.4}]"));
            let band = g.ratio_band.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{} {} {}: points {}, slope {slope} ci {ci}, ratio band {band}",
                g.table, g.map, g.eps_rule, g.points
            );
        }
        let _ = writeln!(s, "flagged cells: {}", self.flags.len());
        for f in &self.flags {
            let _ = writeln!(
                s,
                "  {} row {} {} = {:.6e} exceeds {:.6e}",
                f.file, f.row, f.column, f.value, f.limit
            );
        }
        s
    }

    pub fn into_artifact(self) -> Artifact {
        let checks = vec![Check {
            name: "no_flagged_cells".into(),
            pass: self.flags.is_empty(),
            detail: format!("{} cells exceed {FLAG_FACTOR}x the frozen bounds", self.flags.len()),
        }];
        let mut groups = Table::new("report_groups", &["table", "map", "eps_rule", "points", "slope", "slope_lo", "slope_hi", "ratio_band"]);
        let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
        for g in &self.groups {
            groups.push(vec![
                g.table.clone(),
                g.map.clone(),
                g.eps_rule.clone(),
                g.points.to_string(),
                opt(g.slope),
                opt(g.slope_ci.map(|c| c.0)),
                opt(g.slope_ci.map(|c| c.1)),
                opt(g.ratio_band),
            ]);
        }
        Artifact {
            tables: vec![groups],
            summary: json!({"report": &self, "text": self.summary_text()}),
            checks,
            manifest: None,
            files: std::iter::once(("report.txt".to_string(), self.summary_text()))
                .chain(self.plots.iter().cloned())
                .collect(),
        }
    }
}

struct Rows {
    file: String,
    table: Table,
}

fn group_key(t: &Table, i: usize) -> Result<(String, String)> {
    Ok((
        t.rows[i][t.column("map")?].clone(),
        t.rows[i][t.column("eps_rule")?].clone(),
    ))
}

fn flag_column(
    flags: &mut Vec<Flag>,
    r: &Rows,
    column: &str,
    limit: impl Fn(usize) -> Result<f64>,
) -> Result<()> {
    let vals = r.table.floats(column)?;
    for (i, v) in vals.iter().enumerate() {
        let lim = limit(i)?;
        if *v > lim {
            flags.push(Flag {
                file: r.file.clone(),
                row: i,
                column: column.into(),
                value: *v,
                limit: lim,
            });
        }
    }
    Ok(())
}

/// Reads schema-valid CSVs, refits slopes per (table, map, ε rule) over the
/// union of rows and flags cells above FLAG_FACTOR × the frozen constants.
pub fn report_render(paths: &[PathBuf], calibration: Option<&CalibrationManifest>) -> Result<Report> {
    let mut inputs = Vec::with_capacity(paths.len());
    for p in paths {
        let table = Table::parse(&std::fs::read_to_string(p)?)?;
        inputs.push(Rows {
            file: p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
            table,
        });
    }
    let mut report = Report::default();
    // (table, map, rule) -> (t, value, ratio)
    let mut groups: BTreeMap<(String, String, String), Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in &inputs {
        report.files.push(r.file.clone());
        *report.tables.entry(r.table.name.clone()).or_insert(0) += r.table.rows.len();
        match r.table.name.as_str() {
            "count_sweep" => {
                let (ts, counts, ratios) = (r.table.floats("t")?, r.table.floats("count")?, r.table.floats("ratio")?);
                for i in 0..ts.len() {
                    let (map, rule) = group_key(&r.table, i)?;
                    groups
                        .entry(("count_sweep".into(), map, rule))
                        .or_default()
                        .push((ts[i], counts[i], ratios[i]));
                }
                if let Some(cal) = calibration {
                    // a low ratio is the violation for the lower constant; flag its reciprocal
                    let lows: Vec<f64> = ratios.iter().map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY }).collect();
                    for (i, v) in lows.iter().enumerate() {
                        let warn = r.table.rows[i][r.table.column("range_warning")?] == "true";
                        let limit = FLAG_FACTOR / cal.c_lower;
                        if !warn && *v > limit {
                            report.flags.push(Flag {
                                file: r.file.clone(),
                                row: i,
                                column: "1/ratio".into(),
                                value: *v,
                                limit,
                            });
                        }
                    }
                }
            }
            "generic_split" => {
                let (ts, special) = (r.table.floats("t")?, r.table.floats("special_fraction")?);
                for i in 0..ts.len() {
                    let (map, rule) = group_key(&r.table, i)?;
                    groups
                        .entry(("generic_split".into(), map, rule))
                        .or_default()
                        .push((ts[i], special[i], f64::NAN));
                }
                if let Some(cal) = calibration {
                    flag_column(&mut report.flags, r, "generic_ratio", |_| Ok(FLAG_FACTOR * cal.c_generic))?;
                    flag_column(&mut report.flags, r, "tile_ratio", |_| Ok(FLAG_FACTOR * cal.c_tile))?;
                    let pred = r.table.floats("special_pred")?;
                    flag_column(&mut report.flags, r, "special_fraction", |i| Ok(FLAG_FACTOR * cal.k0 * pred[i]))?;
                }
            }
            "qnd_measure" => {
                let (ts, m) = (r.table.floats("t")?, r.table.floats("measure")?);
                for i in 0..ts.len() {
                    let (map, rule) = group_key(&r.table, i)?;
                    groups
                        .entry(("qnd_measure".into(), map, rule))
                        .or_default()
                        .push((ts[i], m[i], f64::NAN));
                }
                if calibration.is_some() {
                    let (bound, hw) = (r.table.floats("bound_classical")?, r.table.floats("half_width")?);
                    flag_column(&mut report.flags, r, "measure", |i| Ok(FLAG_FACTOR * bound[i] + hw[i]))?;
                }
            }
            "lower_bound" => {
                if let Some(cal) = calibration {
                    flag_column(&mut report.flags, r, "dual_ratio_max", |_| Ok(FLAG_FACTOR * cal.c_dual))?;
                }
            }
            _ => {}
        }
    }
    for (idx, ((table, map, rule), mut pts)) in groups.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let fit = log_fit(&ts, &vals);
        let ratios: Vec<f64> = pts.iter().map(|p| p.2).filter(|v| *v > 0.0).collect();
        let ratio_band = if ratios.is_empty() {
            None
        } else {
            Some(ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min))
        };
        if let (Some(cal), Some(b)) = (calibration, ratio_band) {
            if table == "count_sweep" && b > FLAG_FACTOR * cal.count_band {
                report.flags.push(Flag {
                    file: format!("{map} {rule}"),
                    row: 0,
                    column: "ratio_band".into(),
                    value: b,
                    limit: FLAG_FACTOR * cal.count_band,
                });
            }
        }
        let mut plot = String::from("# t value ln_value\n");
        for p in &pts {
            let _ = writeln!(plot, "{} {} {}", fmt_f64(p.0), fmt_f64(p.1), fmt_f64(p.1.ln()));
        }
        report.plots.push((format!("plot_{idx:02}_{table}.dat"), plot));
        report.groups.push(GroupFit {
            table,
            map,
            eps_rule: rule,
            points: pts.len(),
            slope: fit.map(|f| f.slope),
            slope_ci: fit
                .filter(|f| f.slope_se.is_finite())
                .map(|f| (f.slope - Z95 * f.slope_se, f.slope + Z95 * f.slope_se)),
            ratio_band,
        });
    }
    Ok(report)
}
