//! Replays the fuzz corpus, and every prefix of each seed, through the same
//! calls the fuzz targets make. Catches panics without a fuzzing toolchain.

use std::path::PathBuf;

use dioph::harness::csvio::Table;
use dioph::harness::{CalibrationManifest, Experiment, RunConfig};
use dioph::khintchine::ApproxFunction;
use dioph::lattice::Matrix;
use dioph::poly::{parse_rational, rational_to_f64};

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    assert!(!out.is_empty(), "no seeds for {target}");
    out.sort();
    out
}

fn prefixes(text: &str) -> impl Iterator<Item = &str> {
    text.char_indices().map(|(i, _)| &text[..i]).chain(std::iter::once(text))
}

fn replay(target: &str, f: impl Fn(&str)) {
    for s in seeds(target) {
        for p in prefixes(&s) {
            f(p);
        }
    }
}

#[test]
fn map_file_seeds() {
    replay("map_file", |text| {
        if let Ok(map) = dioph::manifold::parse_map_file(text) {
            let c = map.domain().center.clone();
            let _ = map.eval_full(&c);
        }
    });
    for s in seeds("map_file") {
        dioph::manifold::parse_map_file(&s).unwrap();
    }
}

#[test]
fn run_config_seeds() {
    replay("run_config", |text| {
        if let Ok(mut cfg) = RunConfig::parse(text) {
            let _ = cfg.hash();
            let _ = cfg.validate(Experiment::LatticeSelftest);
        }
    });
}

#[test]
fn calibration_manifest_seeds() {
    replay("calibration_manifest", |text| {
        if let Ok(m) = CalibrationManifest::from_json(text) {
            assert_eq!(CalibrationManifest::from_json(&m.to_json()).unwrap(), m);
        }
    });
}

#[test]
fn csv_table_seeds() {
    replay("csv_table", |text| {
        if let Ok(t) = Table::parse(text) {
            for h in t.header.clone() {
                let _ = t.floats(&h);
            }
        }
    });
}

#[test]
fn approx_function_seeds() {
    replay("approx_function", |text| {
        if let Ok(psi) = text.parse::<ApproxFunction>() {
            let _ = psi.eval(2.0);
            let _ = psi.validate(64);
        }
    });
}

#[test]
fn rational_seeds() {
    replay("rational", |text| {
        if let Some(r) = parse_rational(text) {
            let _ = rational_to_f64(&r);
        }
    });
}

#[test]
fn matrix_json_seeds() {
    replay("matrix_json", |text| {
        if let Ok(m) = Matrix::from_json(text) {
            let _ = m.det();
        }
    });
}
