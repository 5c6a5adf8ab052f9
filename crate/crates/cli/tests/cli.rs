use std::path::Path;
use std::process::{Command, Output};

fn dioph(args: &[&str], envs: &[(&str, &str)], dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dioph"));
    cmd.args(args).current_dir(dir);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("DIOPH_")) {
        cmd.env_remove(k);
    }
    cmd.envs(envs.iter().copied());
    cmd.output().expect("spawn dioph")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn manifest(dir: &Path, exp: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{exp}.json"))).unwrap()).unwrap()
}

const SMALL_MC: &str = "map = veronese2\ntheta = 0.3, 0.7\npsi = power:0.6\nn_samples = 10\nq_max = 2000\nseed = 1\n";

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dioph(&["no-such-command"], &[], dir.path())), 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dioph(&["lattice-selftest", "--config", "missing.conf"], &[], dir.path());
    assert_eq!(code(&o), 2);

    let bad = write(dir.path(), "bad.conf", "seed = 1\nselftest_bases = lots\n");
    let o = dioph(&["lattice-selftest", "--config", &bad], &[], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"), "{o:?}");

    // khintchine-mc without psi fails validation
    let no_psi = write(dir.path(), "nopsi.conf", "seed = 1\n");
    assert_eq!(code(&dioph(&["khintchine-mc", "--config", &no_psi], &[], dir.path())), 2);
}

#[test]
fn selftest_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.conf", "seed = 4\nselftest_bases = 30\nout = res\n");
    let o = dioph(&["lattice-selftest", "--config", &cfg], &[], dir.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")), "{stdout}");
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL ")), "{stdout}");
    let m = manifest(&dir.path().join("res"), "lattice-selftest");
    assert_eq!(m["passed"], true);
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.conf", &format!("{SMALL_MC}expect_tail_max = -1\nout = res\n"));
    let o = dioph(&["khintchine-mc", "--config", &cfg], &[], dir.path());
    assert_eq!(code(&o), 1, "{o:?}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL tail_fraction"));
}

#[test]
fn budget_exhaustion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.conf", &format!("{SMALL_MC}budget = 10\nout = res\n"));
    assert_eq!(code(&dioph(&["khintchine-mc", "--config", &cfg], &[], dir.path())), 2);
}

#[test]
fn flag_beats_environment_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.conf", SMALL_MC);
    let seed_of = |out: &str, args: &[&str], envs: &[(&str, &str)]| {
        let mut all = vec!["khintchine-mc", "--config", &cfg, "--out", out];
        all.extend_from_slice(args);
        let o = dioph(&all, envs, dir.path());
        assert!(code(&o) != 2, "{o:?}");
        manifest(&dir.path().join(out), "khintchine-mc")["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of("a", &[], &[]), 1);
    assert_eq!(seed_of("b", &[], &[("DIOPH_SEED", "7")]), 7);
    assert_eq!(seed_of("c", &["--seed", "9"], &[("DIOPH_SEED", "7")]), 9);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.conf", SMALL_MC);
    for (out, w) in [("w1", "1"), ("w3", "3")] {
        dioph(&["khintchine-mc", "--config", &cfg, "--out", out, "--workers", w], &[], dir.path());
    }
    let files: Vec<_> = std::fs::read_dir(dir.path().join("w1"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    assert!(!files.is_empty());
    for f in files {
        let a = std::fs::read(dir.path().join("w1").join(&f)).unwrap();
        let b = std::fs::read(dir.path().join("w3").join(&f)).unwrap();
        assert_eq!(a, b, "{f:?}");
    }
}

#[test]
fn report_render_without_inputs_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = dioph(&["report-render", "--out", "rep"], &[], dir.path());
    assert_eq!(code(&o), 0, "{o:?}");
    let text = std::fs::read_to_string(dir.path().join("rep/report.txt")).unwrap();
    assert!(text.contains("files: 0"), "{text}");
}
