use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otlab::experiments::{Family, StabilityReport, Theorem};
use otlab::ot_discrete::Backend;
use otlab_cli::commands::stability_table;
use serde_json::Value;
use tempfile::TempDir;

fn otlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otlab")).args(args).env_remove("OTLAB_THREADS").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn data(name: &str) -> String {
    examples().join("data").join(name).display().to_string()
}

fn write_line_file(dir: &Path, name: &str, magic: &str, floor: Option<f64>, values: &[f64]) -> String {
    let mut s = format!("otlab-{magic} v1\ndomain interval 0 1\nmesh line {}\n", values.len() - 1);
    if let Some(f) = floor {
        s += &format!("floor {f}\n");
    }
    s += "values\n";
    for v in values {
        s += &format!("{v}\n");
    }
    let p = dir.join(name);
    std::fs::write(&p, s).unwrap();
    p.display().to_string()
}

fn json_of(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn schema_errors(command: &str, v: &Value) -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{command}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator.iter_errors(v).map(|e| e.to_string()).collect()
}

#[test]
fn d2_of_identical_files_is_zero() {
    let u = data("uniform_1000.dat");
    let v = json_of(&otlab(&["d2", "--mu", &u, "--nu", &u, "--backend", "exact", "--json"]));
    assert_eq!(v["d2"], 0.0);
    for key in ["version", "seed", "backend", "timings"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(schema_errors("d2", &v).is_empty());
}

#[test]
fn d2_matches_the_ramp_oracle() {
    // density 0.8 + 0.4x against the uniform density: quantile Q(s) = (-0.8 + sqrt(0.64 + 0.8s)) / 0.4
    let v = json_of(&otlab(&["d2", "--mu", &data("uniform_1000.dat"), "--nu", &data("ramp_1000.dat"), "--json"]));
    let n = 200_000;
    let q = |s: f64| (-0.8 + (0.64 + 0.8 * s).sqrt()) / 0.4;
    let w2: f64 = (0..n).map(|k| (k as f64 + 0.5) / n as f64).map(|s| (q(s) - s).powi(2)).sum::<f64>() / n as f64;
    assert!((v["d2"].as_f64().unwrap() - w2.sqrt()).abs() < 1e-6);
}

#[test]
fn sharpness_csv_has_increasing_ratios() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("s.csv");
    let o = otlab(&["sharpness", "--p", "2", "--eta", "0.9", "--eps", "1e-1,1e-2,1e-3", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "eps,a,map_gap,density_gap,ratio,midpoint_gap");
    let ratios: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    let header = std::fs::read_to_string(dir.path().join("s.csv.header")).unwrap();
    assert!(header.lines().count() == 6 && header.contains("ratio:"));
}

#[test]
fn sharpness_svg_is_log_x_and_monotone() {
    let dir = TempDir::new().unwrap();
    let svg = dir.path().join("s.svg");
    let o = otlab(&["sharpness", "--svg", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert!(text.contains("(log scale)"));
    for k in -4..=-1 {
        assert!(text.contains(&format!(">1e{k}<")), "missing decade 1e{k}");
    }
    let points = text.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    let xy: Vec<(f64, f64)> = points
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert_eq!(xy.len(), 4);
    // x grows to the right; the ratio falls as eps grows, so SVG y (downwards) increases
    assert!(xy.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), "{xy:?}");
}

#[test]
fn empty_report_gives_header_only_csv() {
    let report = StabilityReport {
        theorem: Theorem::Gradient,
        family: Family::Translation { cells: 10, sizes: vec![] },
        backend: Backend::Exact,
        alpha: None,
        p: None,
        normalization_defect: None,
        columns: ["index", "size", "lhs", "rhs", "ratio", "lhs_alt", "rhs_alt", "ratio_alt", "error"].map(String::from).to_vec(),
        rows: vec![],
    };
    let csv = stability_table(&report).to_csv();
    assert_eq!(csv, "index,size,lhs,rhs,ratio,lhs_alt,rhs_alt,ratio_alt,error\n");
}

#[test]
fn stability_csv_is_sorted_by_size() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("fam.json");
    std::fs::write(&cfg, r#"{"family": {"family": "multiplicative", "cells": 400, "sizes": [0.4, 0.05, 0.2, 0.1]}}"#).unwrap();
    let csv = dir.path().join("out.csv");
    let o = otlab(&["stability", "--theorem", "1.1", "--config", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let sizes: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sizes, vec![0.05, 0.1, 0.2, 0.4]);
}

#[test]
fn second_variation_example_config() {
    let cfg = examples().join("sv_cos.json");
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = otlab(&["second-variation", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let formula = v["formula_value"].as_f64().unwrap();
    assert!((formula - 0.05066).abs() < 1e-5, "{formula}");
    assert!(v["relative_gap"].as_f64().unwrap() <= 1e-3);
    assert!(schema_errors("second-variation", &v).is_empty());
}

#[test]
fn every_json_output_matches_its_schema() {
    let dir = TempDir::new().unwrap();
    let (u, r, c, z) = (data("uniform_1000.dat"), data("ramp_1000.dat"), data("cos_1000.dat"), data("zero_1000.dat"));
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("d2", vec!["d2", "--mu", &u, "--nu", &r, "--json"]),
        ("path", vec!["path", "--f0", &u, "--f1", &r, "--kind", "geodesic", "--json"]),
        ("path", vec!["path", "--f0", &u, "--h", &c, "--kind", "multiplicative", "--times", "0,0.5", "--json"]),
        ("response", vec!["response", "--f0", &u, "--f1", &r, "--g0", &u, "--g1", &u, "--t", "0.5", "--json"]),
        ("response", vec!["response", "--f0", &u, "--g0", &u, "--h", &c, "--k", &z, "--kind", "multiplicative", "--json"]),
        ("stability", vec!["stability", "--theorem", "1.2", "--family", "multiplicative", "--json"]),
        ("stability", vec!["stability", "--theorem", "1.3", "--family", "counterexample", "--json"]),
        ("stability", vec!["stability", "--theorem", "1.2", "--family", "translation", "--json"]),
        ("sharpness", vec!["sharpness", "--json"]),
        ("identities", vec!["identities", "--bl-count", "4", "--resolutions", "6,12", "--json"]),
    ];
    for (schema, args) in runs {
        let v = json_of(&otlab(&args));
        let errors = schema_errors(schema, &v);
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
    }
    let out = dir.path().join("sv.json");
    let o = otlab(&["second-variation", "--f", &u, "--g", &u, "--h", &c, "--k", &z, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(schema_errors("second-variation", &v).is_empty());
}

#[test]
fn validation_errors_exit_2_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let (u, c, z) = (data("uniform_1000.dat"), data("cos_1000.dat"), data("zero_1000.dat"));
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["d2", "--nu", &u], "'mu'"),
        (vec!["d2", "--mu", "missing.dat", "--nu", &u], "missing.dat"),
        (vec!["d2", "--mu", &u, "--nu", &u, "--backend", "sinkhorn"], "'eps'"),
        (vec!["d2", "--mu", &u, "--nu", &u, "--tol=-1"], "'tol'"),
        (vec!["second-variation", "--f", &u, "--g", &u, "--h", &c, "--k", &z, "--dt", "0"], "'dt'"),
        (vec!["second-variation", "--f", &u, "--g", &u, "--h", &u, "--k", &z], "'h'"),
        (vec!["stability", "--theorem", "1.3", "--family", "translation", "--alpha", "1.5"], "'alpha'"),
        (vec!["stability", "--theorem", "1.1", "--family", "nonsense"], "'family'"),
        (vec!["stability", "--family", "translation"], "'theorem'"),
        (vec!["sharpness", "--eps", "0.7"], "'eps'"),
        (vec!["sharpness", "--eta", "1.5"], "'eta'"),
        (vec!["identities", "--resolutions", "8"], "'resolutions'"),
        (vec!["path", "--f0", &u, "--kind", "linear"], "'f1'"),
        (vec!["--threads", "0", "sharpness"], "'threads'"),
    ];
    for (args, needle) in cases {
        let o = otlab(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    let bad = write_line_file(dir.path(), "bad.dat", "density", Some(0.5), &[1.0, -1.0, 1.0]);
    let o = otlab(&["d2", "--mu", &bad, "--nu", &u]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("'mu'"), "{}", stderr(&o));
    assert_eq!(otlab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(otlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn solver_failures_exit_3() {
    let u = data("uniform_1000.dat");
    let dir = TempDir::new().unwrap();
    let a = write_line_file(dir.path(), "a.dat", "density", Some(0.1), &[1.0; 21]);
    let ramp: Vec<f64> = (0..=20).map(|k| 0.5 + k as f64 / 20.0).collect();
    let b = write_line_file(dir.path(), "b.dat", "density", Some(0.1), &ramp);
    let o = otlab(&["d2", "--mu", &a, "--nu", &b, "--backend", "sinkhorn", "--eps", "1e-2", "--max-iter", "3"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("convergence"));
    let o = otlab(&["d2", "--mu", &a, "--nu", &b, "--backend", "sinkhorn", "--eps", "1e-2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(otlab(&["d2", "--mu", &u, "--nu", &u, "--max-iter", "0"]).status.code(), Some(2));
}

#[test]
fn config_rejects_unknown_keys_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"p": 2.0, "etta": 0.9}"#).unwrap();
    let o = otlab(&["sharpness", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("etta") && stderr(&o).contains("bad.json"), "{}", stderr(&o));

    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, r#"{"p": 2.0, "eta": 0.9, "eps": [0.1, 0.01]}"#).unwrap();
    let v = json_of(&otlab(&["sharpness", "--config", cfg.to_str().unwrap(), "--json"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["eta"], 0.9);
    let v = json_of(&otlab(&["sharpness", "--config", cfg.to_str().unwrap(), "--eta", "0.8", "--eps", "0.2", "--json"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
    assert_eq!(v["eta"], 0.8);

    let missing = dir.path().join("nope.json");
    let o = otlab(&["sharpness", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn config_paths_resolve_against_the_config_directory() {
    let dir = TempDir::new().unwrap();
    let sub = dir.path().join("inputs");
    std::fs::create_dir(&sub).unwrap();
    write_line_file(&sub, "u.dat", "density", Some(0.5), &[1.0; 11]);
    let cfg = dir.path().join("d2.json");
    std::fs::write(&cfg, r#"{"mu": "inputs/u.dat", "nu": "inputs/u.dat", "backend": "exact"}"#).unwrap();
    let v = json_of(&otlab(&["d2", "--config", cfg.to_str().unwrap(), "--json"]));
    assert_eq!(v["d2"], 0.0);
    let cfg = dir.path().join("gone.json");
    std::fs::write(&cfg, r#"{"mu": "inputs/u.dat", "nu": "inputs/gone.dat"}"#).unwrap();
    let o = otlab(&["d2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("'nu'") && stderr(&o).contains("gone.dat"), "{}", stderr(&o));
}

#[test]
fn thread_count_from_flag_and_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_otlab"));
        c.args(args).env_remove("OTLAB_THREADS");
        if let Some(e) = env {
            c.env("OTLAB_THREADS", e);
        }
        c.output().unwrap()
    };
    let base = run(None, &["stability", "--theorem", "1.1", "--family", "multiplicative", "--json"]);
    let env = run(Some("2"), &["stability", "--theorem", "1.1", "--family", "multiplicative", "--json"]);
    let flag = run(Some("0"), &["--threads", "1", "stability", "--theorem", "1.1", "--family", "multiplicative", "--json"]);
    assert_eq!(base.status.code(), Some(0));
    assert_eq!(base.stdout, env.stdout);
    assert_eq!(base.stdout, flag.stdout);
    let bad = run(Some("zero"), &["sharpness"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("threads"), "{}", stderr(&bad));
    assert_eq!(run(Some("0"), &["sharpness"]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let out = dir.path().join(format!("{tag}.json"));
        let o = otlab(&[
            "--seed",
            "7",
            "stability",
            "--theorem",
            "1.1",
            "--family",
            "random_smooth",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (std::fs::read(csv).unwrap(), std::fs::read(out).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["family"]["seed"], 7);
    assert_eq!(v["timings"]["seconds"], Value::Null);
}

#[test]
fn wall_clock_flag_records_seconds() {
    let v = json_of(&otlab(&["--wall-clock", "sharpness", "--json"]));
    assert_eq!(v["timings"]["wall_clock"], true);
    assert!(v["timings"]["seconds"].as_f64().unwrap() >= 0.0);
    assert!(schema_errors("sharpness", &v).is_empty());
}

#[test]
fn path_writes_slices() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("slices");
    let v = json_of(&otlab(&[
        "path",
        "--f0",
        &data("uniform_1000.dat"),
        "--f1",
        &data("ramp_1000.dat"),
        "--kind",
        "linear",
        "--times",
        "0,0.5,1",
        "--out-dir",
        out.to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(v["files"].as_array().unwrap().len(), 3);
    assert_eq!(v["action"], Value::Null);
    let mid = otlab::measures::io::read_density(&out.join("slice_001.dat")).unwrap();
    let last = mid.values()[mid.domain().len() - 1];
    assert!((last - 1.1).abs() < 1e-9, "{last}");
    for m in v["masses"].as_array().unwrap() {
        assert!((m.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn response_writes_its_field() {
    let dir = TempDir::new().unwrap();
    let field = dir.path().join("xi.dat");
    let (u, c, z) = (data("uniform_1000.dat"), data("cos_1000.dat"), data("zero_1000.dat"));
    let v = json_of(&otlab(&[
        "response", "--f0", &u, "--g0", &u, "--h", &c, "--k", &z, "--kind", "multiplicative", "--field", field.to_str().unwrap(), "--json",
    ]));
    let xi = otlab::measures::io::read_field(&field).unwrap();
    // ξ'' = h on the uniform pair, so ξ = -cos(πx)/π² + const
    let expected = 1.0 / (std::f64::consts::PI.powi(2) * 2f64.sqrt());
    let l2 = v["xi_l2"].as_f64().unwrap();
    assert!((l2 - expected).abs() < 1e-4, "{l2} vs {expected}");
    assert_eq!(xi.domain().len(), 1001);
}
