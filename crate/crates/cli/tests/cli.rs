use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use liesym::model::parse_model;
use liesym::structures::{BenchmarkCase, BenchmarkSpec};
use serde_json::Value;

fn model_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/twodof.model")
}

fn liesym(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liesym"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("liesym-out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn names(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn twodof_layout_misses_the_first_floor() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    let out = liesym(
        dir.path(),
        &["analyze", "--model", model.to_str().unwrap(), "--definition", "affine-inputs", "--kmax", "6"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["deficiency"], 1);
    let mut unobs = names(&r["unobservable"]);
    unobs.sort();
    assert_eq!(unobs, ["k1", "w", "x1", "x2"]);
    let csv = fs::read_to_string(dir.path().join("liesym-out/rank.csv")).unwrap();
    assert!(csv.starts_with("# liesym "));
    assert!(csv.lines().nth(1).unwrap().starts_with("order,rank"));
}

#[test]
fn knowing_k1_restores_observability() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    let out = liesym(dir.path(), &["analyze", "--model", model.to_str().unwrap(), "--known", "k1", "--fail-on-unobservable"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["observable"], true);
}

#[test]
fn unobservable_layout_exits_two_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    let m = model.to_str().unwrap();
    let out = liesym(dir.path(), &["analyze", "--model", m, "--definition", "affine-inputs", "--fail-on-unobservable"]);
    assert_eq!(out.status.code(), Some(2));
    let out = liesym(dir.path(), &["analyze", "--model", m, "--definition", "affine-inputs"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = liesym(dir.path(), &["simulate", "--model", "missing.model"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.model"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(liesym(dir.path(), &["analyze", "--case", "no-such-case"]).status.code(), Some(1));
    assert_eq!(liesym(dir.path(), &["analyze", "--bogus"]).status.code(), Some(1));
    assert_eq!(liesym(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn simulation_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed: &str| {
        let o = liesym(
            dir.path(),
            &["simulate", "--case", "isolated-inerter", "--sensors", "a2,d2", "--t-end", "3", "--seed", seed, "--out", out],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a", "5");
    run("b", "5");
    run("c", "6");
    for file in ["trajectory.csv", "measurements.csv", "inputs.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let a = fs::read(dir.path().join("a/measurements.csv")).unwrap();
    let c = fs::read(dir.path().join("c/measurements.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn benchmark_output_reparses_to_the_factory_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = liesym(dir.path(), &["benchmark", "--case", "viscous-wind", "--sensors", "a1,a3,a5", "--out", "v.model"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("v.model")).unwrap();
    let parsed = parse_model(&text).unwrap();
    let spec = BenchmarkSpec::default_for(BenchmarkCase::ViscousWind);
    let built = spec.build(&liesym::structures::parse_sensors("a1,a3,a5").unwrap(), None).unwrap();
    assert_eq!(parsed.states, built.model.states);
    assert_eq!(parsed.params, built.model.params);
    assert_eq!(parsed.output_names, built.model.output_names);
    for (a, b) in parsed.dynamics.iter().zip(&built.model.dynamics) {
        assert!(a.equivalent(b), "{a} vs {b}");
    }

    // the written file drives the analysis like the case does
    let out = liesym(dir.path(), &["analyze", "--model", "v.model", "--unknowns", "C1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    fs::write(
        dir.path().join("run.toml"),
        format!("model = {:?}\n[analyze]\ndefinition = \"affine-inputs\"\nkmax = 4\n", model.to_str().unwrap()),
    )
    .unwrap();
    let out = liesym(dir.path(), &["--config", "run.toml", "analyze"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["definition"], "affine-inputs");
    let hash_file = r["provenance"]["config_hash"].clone();

    let out = liesym(dir.path(), &["--config", "run.toml", "analyze", "--known", "k1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["deficiency"], 0);
    assert_ne!(r["provenance"]["config_hash"], hash_file);

    fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(liesym(dir.path(), &["--config", "bad.toml", "analyze"]).status.code(), Some(1));
}

#[test]
fn measuring_k1_breaks_the_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    let out = liesym(
        dir.path(),
        &["symmetries", "--model", model.to_str().unwrap(), "--definition", "affine-inputs", "--measure", "k1", "--measure", "k2"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("liesym-out/symmetries.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("measure k1: destroyed"), "{stdout}");
    assert!(stdout.contains("measure k2: kept"), "{stdout}");
    assert!(v.to_string().contains("k1"));
}

#[test]
fn estimation_writes_a_record_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path();
    let out = liesym(
        dir.path(),
        &["estimate", "--model", model.to_str().unwrap(), "--unknowns", "k2,m", "--t-end", "4", "--seed", "3"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("liesym-out/estimation.csv")).unwrap();
    // header line, column line, 401 samples
    assert_eq!(csv.lines().count(), 403);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("liesym-out/summary.json")).unwrap()).unwrap();
    let m = summary["final_coefficients"]["m"].as_f64().unwrap();
    assert!((m - 1.0).abs() < 0.05, "alpha_m {m}");
}

#[test]
fn preset_selects_the_device_unknowns() {
    let dir = tempfile::tempdir().unwrap();
    let out = liesym(
        dir.path(),
        &["estimate", "--case", "isolated-inerter", "--sensors", "a2,d2", "--init-case", "II", "--t-end", "1"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("alpha_k_lrb") && stdout.contains("alpha_c_in"), "{stdout}");
    let devices = fs::read_to_string(dir.path().join("liesym-out/devices.csv")).unwrap();
    assert!(devices.lines().nth(1).unwrap().ends_with("f_in_true"));
    let out = liesym(dir.path(), &["estimate", "--case", "isolated-inerter", "--init-case", "IV"]);
    assert_eq!(out.status.code(), Some(1));
}
