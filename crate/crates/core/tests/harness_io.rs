//! Config parsing, CSV and manifest round trips, and report rendering over
//! real run outputs.

use std::path::PathBuf;

use dioph::harness::csvio::{fmt_f64, Table};
use dioph::harness::manifest::{dyadic_ceil, dyadic_floor};
use dioph::harness::report::report_render;
use dioph::harness::{run, write_artifact, CalibrationManifest, Experiment, Overrides, RunConfig};
use dioph::Error;
use proptest::prelude::*;

fn calibration_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../calibration")
}

#[test]
fn config_errors_carry_line_numbers() {
    let text = "map = veronese2\n# note\nt_list = 6..8\nsampler = grid:abc\n";
    match RunConfig::parse(text) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    match RunConfig::parse("seed = 1\nseed = 2\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(RunConfig::parse("colour = red\n"), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn lists_ranges_and_integers_parse() {
    let cfg = RunConfig::parse("t_list = 6..9\nbudget = 2e9\ntheta = 0.3, 0.7\neps_rule = fixed:0.1; power:0.25\n").unwrap();
    assert_eq!(cfg.t_list, vec![6.0, 7.0, 8.0, 9.0]);
    assert_eq!(cfg.budget, 2_000_000_000);
    assert_eq!(cfg.theta, Some(vec![0.3, 0.7]));
    assert_eq!(cfg.eps_rules.len(), 2);
}

#[test]
fn overrides_win_over_the_file() {
    let mut cfg = RunConfig::parse("seed = 5\nbudget = 100\n").unwrap();
    cfg.apply(&Overrides {
        seed: Some(9),
        workers: Some(3),
        budget: None,
        out: None,
        calibration: None,
    });
    assert_eq!((cfg.seed, cfg.workers, cfg.budget), (Some(9), 3, 100));
}

#[test]
fn hash_ignores_workers_and_output() {
    let a = RunConfig::parse("t_list = 6\n").unwrap();
    let mut b = a.clone();
    b.workers = 4;
    b.out = PathBuf::from("/elsewhere");
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig::parse("t_list = 7\n").unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn validation_requires_seeds_and_lists() {
    let mut cfg = RunConfig::parse("psi = power:0.45\n").unwrap();
    assert!(cfg.validate(Experiment::KhintchineMc).is_err());
    let mut cfg = RunConfig::parse("").unwrap();
    assert!(cfg.validate(Experiment::CountSweep).is_err());
    let mut cfg = RunConfig::parse("experiment = count-sweep\nt_list = 3\n").unwrap();
    assert!(matches!(cfg.validate(Experiment::LowerBound), Err(Error::Schema(_))));
}

#[test]
fn checked_in_manifests_load_and_round_trip() {
    for name in ["veronese2_theta0", "veronese2_theta_03_07", "paraboloid_theta0"] {
        let path = calibration_dir().join(format!("{name}.json"));
        let (m, hash) = CalibrationManifest::load(&path).unwrap();
        assert_eq!(hash.len(), 64);
        assert_eq!(CalibrationManifest::from_json(&m.to_json()).unwrap(), m);
        assert_eq!(m.to_json(), std::fs::read_to_string(&path).unwrap());
        for b in &m.transference {
            assert!(b.lo <= 1.0 && b.hi <= b.k as f64);
        }
    }
}

#[test]
fn manifest_rejects_unknown_fields_and_wrong_maps() {
    let text = std::fs::read_to_string(calibration_dir().join("veronese2_theta0.json")).unwrap();
    let extra = text.replacen('{', "{\n  \"colour\": 1,", 1);
    assert!(CalibrationManifest::from_json(&extra).is_err());
    let m = CalibrationManifest::from_json(&text).unwrap();
    assert!(m.check_applies("veronese2", &[0.0, 0.0]).is_ok());
    assert!(m.check_applies("veronese2", &[0.3, 0.7]).is_err());
    assert!(m.check_applies("paraboloid", &[0.0, 0.0, 0.0]).is_err());
}

#[test]
fn dyadic_rounding_brackets() {
    for v in [0.3, 1.0, 1.5, 7.9, 1e-3] {
        assert!(dyadic_floor(v) <= v && v <= dyadic_ceil(v));
        assert!(dyadic_ceil(v) <= 2.0 * v && dyadic_floor(v) * 2.0 > v);
    }
}

fn cell() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z ,\"]{0,8}",
        any::<f64>().prop_map(fmt_f64),
    ]
}

proptest! {
    #[test]
    fn tables_round_trip(
        name in "[a-z_]{1,12}",
        width in 1usize..5,
        rows in prop::collection::vec(prop::collection::vec(cell(), 4), 0..6),
    ) {
        let header: Vec<String> = (0..width).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new(&name, &refs);
        for r in rows {
            t.push(r[..width].to_vec());
        }
        prop_assert_eq!(Table::parse(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn floats_survive_text(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn config_parser_never_panics(text in "[a-z_ =.,;:0-9#\n-]{0,80}") {
        let _ = RunConfig::parse(&text);
    }
}

#[test]
fn table_parse_rejects_bad_headers() {
    assert!(matches!(Table::parse("#schema=v2\n#table=x\na\n"), Err(Error::Schema(_))));
    assert!(matches!(Table::parse("a,b\n1,2\n"), Err(Error::Schema(_))));
    assert!(matches!(Table::parse("#schema=v1\na,b\n"), Err(Error::Schema(_))));
}

#[test]
fn report_refits_count_sweeps_and_flags_nothing_when_calibrated() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(
        "map = veronese2\nball_center = 0.5\nball_radius = 0.4\nt_list = 5..7\neps_rule = fixed:0.1\n",
    )
    .unwrap();
    cfg.validate(Experiment::CountSweep).unwrap();
    let art = run(Experiment::CountSweep, &cfg, None).unwrap();
    write_artifact(Experiment::CountSweep, &cfg, None, &art, 0.0, dir.path()).unwrap();
    let csv = dir.path().join("count_sweep.csv");
    let (cal, _) = CalibrationManifest::load(&calibration_dir().join("veronese2_theta0.json")).unwrap();
    let report = report_render(&[csv], Some(&cal)).unwrap();
    assert_eq!(report.groups.len(), 1);
    let g = &report.groups[0];
    assert_eq!(g.points, 3);
    let slope = g.slope.unwrap();
    assert!((slope - 2.0).abs() < 0.15, "slope {slope}");
    let (lo, hi) = g.slope_ci.unwrap();
    assert!(lo <= slope && slope <= hi);
    assert!(report.flags.is_empty(), "{:?}", report.flags);
    let art = report.into_artifact();
    assert!(art.files.iter().any(|(n, _)| n == "report.txt"));
    assert!(art.files.iter().any(|(n, _)| n.starts_with("plot_00_")));
}

#[test]
fn report_flags_cells_above_frozen_constants() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(
        "lower_bound",
        &["dual_ratio_max"],
    );
    t.push(vec![fmt_f64(0.5)]);
    t.push(vec![fmt_f64(5.0)]);
    let path = dir.path().join("lower_bound.csv");
    std::fs::write(&path, t.to_csv()).unwrap();
    let (cal, _) = CalibrationManifest::load(&calibration_dir().join("veronese2_theta0.json")).unwrap();
    let report = report_render(&[path], Some(&cal)).unwrap();
    assert_eq!(report.flags.len(), 1);
    assert_eq!(report.flags[0].row, 1);
    assert!(!report.into_artifact().passed());
}
