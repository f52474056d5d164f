use std::path::Path;
use std::process::{Command, Output};

use curvpath::cli::{render, run_config, Command as Run, OutputFormat, RunConfig, CSV_HEADER, KEYS};
use curvpath::Error;

fn curvpath(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_curvpath"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("CURVPATH_WORKERS", w),
        None => cmd.env_remove("CURVPATH_WORKERS"),
    };
    cmd.output().expect("spawn curvpath")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn minimal_flat_ricci_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ric.cfg", "manifold.name = euclidean\nmanifold.dim = 2\ncheck.id = RIC\n");
    let out = curvpath(&["check", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 14);
    assert_eq!(row[0], "RIC");
    assert!(row[8].parse::<f64>().unwrap().abs() < 0.05);
    assert_eq!(row[13], "holds");
}

#[test]
fn exit_codes_follow_verdicts() {
    let ok = curvpath(&["check", "manifold.name=sphere", "check.id=T12-2a", "sim.n_paths=2000"], None);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    let margin: f64 = text.lines().nth(1).unwrap().split(',').nth(12).unwrap().parse().unwrap();
    assert!(margin > 0.0);

    let bad = curvpath(&["check", "manifold.name=sphere", "check.id=SLOPE-LOWER", "bounds.K2=1.5", "sim.n_paths=2000"], None);
    assert_eq!(bad.status.code(), Some(2));

    let vague = curvpath(&["check", "manifold.name=sphere", "check.id=T12-2a", "sim.n_paths=200", "check.power_fraction=1e-6"], None);
    assert_eq!(vague.status.code(), Some(3));

    let err = curvpath(&["check", "check.id=T12-9"], None);
    assert_eq!(err.status.code(), Some(1));
}

#[test]
fn unknown_and_duplicate_keys_are_reported_with_lines() {
    let e = RunConfig::parse("manifold.name = sphere\n\n# c\nsim.steps = 4\n").unwrap_err();
    match e {
        Error::Config { line, key, .. } => {
            assert_eq!(line, 4);
            assert_eq!(key, "sim.steps");
        }
        other => panic!("unexpected {other:?}"),
    }
    let e = RunConfig::parse("sim.T = 1\nsim.T = 2\n").unwrap_err();
    assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
    let e = RunConfig::parse("sim.dt = fast\n").unwrap_err();
    assert!(matches!(e, Error::Config { line: 1, .. }));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "check.id = RIC\nmanifold.nmae = sphere\n");
    let out = curvpath(&["check", "-c", &cfg], None);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert!(msg.contains("line 2") && msg.contains("manifold.nmae"), "{msg}");
}

#[test]
fn invalid_combinations_are_rejected() {
    let cases = [
        ("sim.T = 0.5\nsim.dt = 0.3\ncheck.id = T12-2a\n", "sim.dt"),
        ("check.id = T12-3\ncheck.q = 2.5\n", "check.q"),
        ("check.id = T12-2a\ncheck.p = 0.5\n", "check.p"),
        ("check.id = T12-4\ncheck.t0 = 0.3\ncheck.t1 = 0.2\n", "check.t1"),
        ("check.id = T12-2a\nbounds.K1 = 0\nbounds.K2 = 1\n", "bounds.K2"),
    ];
    for (text, key) in cases {
        let cfg = RunConfig::parse(text).unwrap();
        match run_config(cfg, Run::Check) {
            Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn every_documented_key_parses() {
    let sample = |k: &str| match k {
        "manifold.name" => "sphere",
        "bounds.mu_convention" => "global",
        "bounds.preset" => "einstein",
        "functional.name" => "eigenfunction",
        "functional.times" | "functional.params" | "check.T_list" | "check.x" => "0.1, 0.2",
        "check.id" => "RIC",
        "check.exit_monitor" => "discrete",
        "output.format" => "json",
        "output.path" => "-",
        k if k.starts_with("check.") && ["nested", "nested_entropy", "allow_unsafe_bound", "normalize"].iter().any(|s| k.ends_with(s)) => "true",
        _ => "3",
    };
    for (k, _) in KEYS {
        let mut cfg = RunConfig::default();
        cfg.set(1, k, sample(k)).unwrap_or_else(|e| panic!("{k}: {e}"));
    }
}

#[test]
fn reports_are_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.cfg",
        "manifold.name = hyperbolic\nbounds.K1 = -1\nbounds.K2 = -1\ncheck.id = T12-5\nsim.n_paths = 1000\nsim.inner_paths = 8\nsim.T = 0.2\noutput.format = json\n",
    );
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    let r3 = dir.path().join("r3.json");
    let arg = |p: &Path| format!("output.path={}", p.display());
    assert_eq!(curvpath(&["check", "-c", &cfg, &arg(&r1)], None).status.code(), Some(0));
    assert_eq!(curvpath(&["check", "-c", &cfg, &arg(&r2)], Some("1")).status.code(), Some(0));
    let a = std::fs::read(&r1).unwrap();
    assert_eq!(a, std::fs::read(&r2).unwrap());

    // the echoed configuration reproduces the report
    let replay = r1.to_string_lossy().into_owned();
    assert_eq!(curvpath(&["check", "-c", &replay, &arg(&r3)], None).status.code(), Some(0));
    assert_eq!(a, std::fs::read(&r3).unwrap());

    let doc: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["config"]["check.id"], "T12-5");
    assert_eq!(doc["config"]["manifold.name"], "hyperbolic");
    assert!(doc["outcomes"][0]["lhs"]["extras"].is_object());
}

#[test]
fn sweeps_add_a_summary_row() {
    let cfg = RunConfig::parse("manifold.name = ou\ncheck.id = RIC\nsim.n_paths = 2000\ncheck.T_list = 0.01, 0.02, 0.04\n").unwrap();
    let report = run_config(cfg, Run::Sweep).unwrap();
    let csv = render(&report, OutputFormat::Csv).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[..3].iter().all(|r| r.ends_with(",series")));
    let last: Vec<&str> = rows[3].split(',').collect();
    assert_eq!(last[4], "0");
    let limit: f64 = last[8].parse().unwrap();
    assert!((limit - 1.0).abs() < 0.1, "{limit}");
    assert_eq!(report.exit_code, 0);

    let cfg = RunConfig::parse("manifold.name = sphere\ncheck.id = T12-2a\nsim.n_paths = 500\ncheck.T_list = 0.1, 0.2\n").unwrap();
    let report = run_config(cfg, Run::Sweep).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[1].horizon, 0.2);
}

#[test]
fn estimates_and_listing() {
    let out = curvpath(&["estimate", "manifold.name=sphere", "check.id=grad-bismut", "sim.n_paths=500", "output.format=json"], None);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
    assert_eq!(doc["estimates"][0]["value"].as_array().unwrap().len(), 2);

    let list = curvpath(&["list-presets"], None);
    assert_eq!(list.status.code(), Some(0));
    let text = String::from_utf8(list.stdout).unwrap();
    for word in ["sphere", "hyperbolic", "T11-4", "two_time", "check.T_list"] {
        assert!(text.contains(word), "{word}");
    }
}
