use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privet::data::{load_matrix, save_matrix, DtypeHint, Format};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_privet"));
    c.env_remove("PRIVET_OUT_DIR");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(line: &str, key: &str) -> Option<String> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
}

/// Null three-way split of a generated population.
fn fixture(dir: &Path) -> PathBuf {
    let o = run(
        &["leakgen", "--population", "1500", "--split", "500,500,500", "--n-features", "1024", "--seed", "3", "--out", "fx"],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("fx")
}

fn score_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["score", "--train", "fx/train.bin", "--test", "fx/test.bin", "--synth", "fx/synth.bin"];
    a.extend_from_slice(extra);
    a
}

#[test]
fn null_fixture_scores_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(&score_args(&["--out", "s"]), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let npl: usize = summary_value(&line, "npl").unwrap().parse().unwrap();
    let m: usize = summary_value(&line, "m").unwrap().parse().unwrap();
    assert_eq!(m, 500);
    assert!(npl * 100 <= m, "npl {npl}");
    for f in ["samples.csv", "summary.json", "ecdf.csv", "ecdf.svg", "timing.json", "config.toml"] {
        assert!(dir.path().join("s").join(f).exists(), "{f} missing");
    }
}

#[test]
fn missing_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(
        &["score", "--train", "fx/absent.bin", "--test", "fx/test.bin", "--synth", "fx/synth.bin", "--out", "s"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fx/absent.bin"), "{}", stderr(&o));
}

#[test]
fn no_test_mode_prints_banner() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(&["score", "--train", "fx/train.bin", "--synth", "fx/synth.bin", "--no-test", "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert_eq!(err.matches(privet::pipeline::NO_TEST_BANNER).count(), 1, "{err}");
    assert_eq!(summary_value(&stdout(&o), "privacy_scores").as_deref(), Some("false"));
    let json = std::fs::read_to_string(dir.path().join("s/summary.json")).unwrap();
    assert!(json.contains("\"banner\""));
}

#[test]
fn bad_flags_and_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["score", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["nosuchcommand"], dir.path()).status.code(), Some(2));
    fixture(dir.path());
    let o = run(&score_args(&["--q-frac", "2", "--out", "s"]), dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(&score_args(&["--decimation", "maybe", "--out", "s"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_echo_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(&score_args(&["--out", "a", "--tau", "-2.5", "--decimation", "false", "--seed", "5"]), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["score", "--config", "a/config.toml", "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["samples.csv", "summary.json", "ecdf.csv", "ecdf.svg"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    std::fs::write(dir.path().join("c.toml"), "tau = -3.0\nwindow_size = 4\n").unwrap();
    let o = run(&score_args(&["--config", "c.toml", "--out", "s"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("window_size"));
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = bin()
        .args(score_args(&[]))
        .env("PRIVET_OUT_DIR", "from-env")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/summary.json").exists());
    // A flag still wins.
    let o = bin()
        .args(score_args(&["--out", "from-flag"]))
        .env("PRIVET_OUT_DIR", "from-env-2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-flag/summary.json").exists());
    assert!(!dir.path().join("from-env-2").exists());
}

#[test]
fn ecdf_has_three_curves_and_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(
        &["ecdf", "--train", "fx/train.bin", "--test", "fx/test.bin", "--synth", "fx/synth.bin", "--out", "e"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("e/ecdf.csv")).unwrap();
    let ids: BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, BTreeSet::from(["d_ste", "d_str", "d_trtr", "fit"]));
    let svg = std::fs::read_to_string(dir.path().join("e/ecdf.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn two_by_two_grid_writes_four_row_maps() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "grid", "--f-fake", "0.1,0.3", "--f-copy", "0.1,0.3", "--n-train", "300", "--n-test", "300", "--n-synth",
            "300", "--n-features", "512", "--seed", "2", "--out", "g",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("g/maps/privet_npl.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("f_fake,f_copy,metric,value\n"));
    assert_eq!(summary_value(&stdout(&o), "cells").as_deref(), Some("4"));
}

#[test]
fn attack_recall_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let train = load_matrix(fx.join("train.bin"), Format::DenseBinary, DtypeHint::Auto).unwrap();
    let test = load_matrix(fx.join("test.bin"), Format::DenseBinary, DtypeHint::Auto).unwrap();
    let mut synth = load_matrix(fx.join("synth.bin"), Format::DenseBinary, DtypeHint::Auto).unwrap();
    for i in 0..50 {
        synth.copy_row_from(i, &train, i);
    }
    save_matrix(&train.vstack(&test).unwrap(), dir.path().join("ref.bin"), Format::DenseBinary).unwrap();
    save_matrix(&synth, dir.path().join("mem.bin"), Format::DenseBinary).unwrap();
    let labels: String = (0..1000).map(|i| if i < 500 { "1\n" } else { "0\n" }).collect();
    std::fs::write(dir.path().join("labels.txt"), labels).unwrap();
    let o = run(
        &["attack", "--reference", "ref.bin", "--labels", "labels.txt", "--synth", "mem.bin", "--memorized", "50", "--out", "a"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pr = std::fs::read_to_string(dir.path().join("a/pr.csv")).unwrap();
    let recall: Vec<f64> = pr.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(recall.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*recall.last().unwrap(), 1.0);
    assert!(dir.path().join("a/pr_ideal.csv").exists());
}

#[test]
fn seeded_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let again = run(
        &["leakgen", "--population", "1500", "--split", "500,500,500", "--n-features", "1024", "--seed", "3", "--out", "fx2"],
        dir.path(),
    );
    assert!(again.status.success());
    for f in ["population.bin", "train.bin", "test.bin", "synth.bin"] {
        assert_eq!(std::fs::read(fx.join(f)).unwrap(), std::fs::read(dir.path().join("fx2").join(f)).unwrap());
    }
    let inject = |out: &str| {
        run(
            &["leakgen", "--train", "fx/train.bin", "--synth", "fx/synth.bin", "--f-fake", "0.2", "--f-copy", "0.3", "--seed", "9", "--out", out],
            dir.path(),
        )
    };
    assert!(inject("i1").status.success());
    assert!(inject("i2").status.success());
    for f in ["pseudo_synth.bin", "truth.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("i1").join(f)).unwrap(),
            std::fs::read(dir.path().join("i2").join(f)).unwrap()
        );
    }
}

#[test]
fn fit_gof_and_baseline_run() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = run(&["fit", "--data", "fx/train.bin", "--out", "f"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("f/fit.json")).unwrap()).unwrap();
    assert!(fit["fit"]["shape"].as_f64().unwrap() > 0.0);

    let o = run(&["gof", "--data", "fx/train.bin", "--n-bootstrap", "40", "--n-splits", "2", "--out", "g"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let p: f64 = summary_value(&stdout(&o), "mc_p_value").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(dir.path().join("g/pp.svg").exists());

    let o = run(
        &["baseline", "--train", "fx/train.bin", "--test", "fx/test.bin", "--synth", "fx/synth.bin", "--out", "b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("b/authenticity.csv").exists());
    assert!(dir.path().join("b/baseline.json").exists());
}
