use std::path::Path;
use std::process::{Command, Output};

use phasepart::cli::config::parse_config;
use phasepart::cli::raster::read_pgm;

const SMALL_RUN: &str = r#"{
    "problem": "isoperimetric",
    "boundary": "periodic",
    "fractions": [0.2],
    "schedule": {
        "stages": [{"n": 41, "eps": 0.03}, {"n": 61, "eps": 0.02}],
        "max_iters": 300
    },
    "seed": 3
}"#;

fn phasepart(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasepart"))
        .args(args)
        .current_dir(dir)
        .env("PHASEPART_OUTPUT_DIR", dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[derive(Debug, serde::Deserialize)]
struct Row {
    stage: usize,
    iter: usize,
    energy_scaled: f64,
    sum_residual: f64,
    mass_residual: f64,
}

fn rows(path: &Path) -> Vec<Row> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn validate_echoes_a_reparsable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", SMALL_RUN);
    let out = phasepart(&["validate", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = String::from_utf8(out.stdout).unwrap();
    let parsed = parse_config(&echoed).unwrap();
    assert_eq!(parsed, parse_config(SMALL_RUN).unwrap());
    assert_eq!(parsed.phases, Some(1));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_sum = write(
        dir.path(),
        "sum.json",
        r#"{"problem": "partition", "fractions": [0.5, 0.6],
            "schedule": {"stages": [{"n": 41, "eps": 0.05}]}}"#,
    );
    let out = phasepart(&["validate", &bad_sum], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mass fractions must sum to 1"));

    let unknown = write(
        dir.path(),
        "key.json",
        &SMALL_RUN.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1"),
    );
    let out = phasepart(&["run", &unknown], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let out = phasepart(&["validate", "does-not-exist.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasepart(&["sharp", "--labels", "missing.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", SMALL_RUN);
    let out = phasepart(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let outdir = dir.path().join("out");

    let log = rows(&outdir.join("iterations.csv"));
    assert!(log.iter().any(|r| r.stage == 0) && log.iter().any(|r| r.stage == 1));
    for w in log.windows(2) {
        if w[0].stage == w[1].stage {
            assert_eq!(w[1].iter, w[0].iter + 1);
            assert!(w[1].energy_scaled <= w[0].energy_scaled, "{w:?}");
        }
    }
    assert!(log.iter().all(|r| r.sum_residual <= 1e-10 && r.mass_residual <= 1e-10));

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(outdir.join("report.json")).unwrap()).unwrap();
    let stages = report["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 2);
    let last = log.iter().rfind(|r| r.stage == 1).unwrap();
    assert_eq!(report["final_energy_scaled"].as_f64().unwrap(), last.energy_scaled);

    let echoed = std::fs::read_to_string(outdir.join("config.json")).unwrap();
    assert_eq!(parse_config(&echoed).unwrap(), parse_config(SMALL_RUN).unwrap());

    let pgm = read_pgm(&outdir.join("labels.pgm")).unwrap();
    assert_eq!((pgm.width, pgm.height), (61, 61));
    assert!(pgm.pixels.contains(&128) && pgm.pixels.contains(&255));
}

#[test]
fn single_stage_log_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"problem": "partition", "fractions": [0.5, 0.5],
        "schedule": {"stages": [{"n": 25, "eps": 0.1}], "max_iters": 40, "grad_tol": 0}}"#;
    let cfg = write(dir.path(), "one.json", text);
    let out = phasepart(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let outdir = dir.path().join("out");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(outdir.join("report.json")).unwrap()).unwrap();
    let iterations = report["stages"][0]["iterations"].as_u64().unwrap() as usize;
    let log = rows(&outdir.join("iterations.csv"));
    assert_eq!(log.len(), iterations + 1);
}

#[test]
fn oracle_and_sharp_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasepart(&["oracle", "profile", "--z", "2"], dir.path());
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 2.0 / 3.0).abs() < 1e-6, "{v}");

    // Periodic vertical split: two interface lines of length 1, each
    // counted for both phases.
    let n = 20;
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    for _ in 0..n {
        bytes.extend((0..n).map(|i| if i < n / 2 { 128u8 } else { 255 }));
    }
    std::fs::write(dir.path().join("split.pgm"), bytes).unwrap();
    let out = phasepart(&["sharp", "--labels", "split.pgm", "--periodic"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 4.0).abs() < 1e-9, "{v}");
}
