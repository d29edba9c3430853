use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fairgauge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairgauge"))
        .args(args)
        .env_remove("FAIRGAUGE_SEED_OVERRIDE")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn metrics_on_published_block() {
    let dir = tempfile::tempdir().unwrap();
    let rates = fixtures().join("published/arcface_original_diveface.json");
    let o = fairgauge(&["metrics", "--rates", s(&rates), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&dir.path().join("metrics.json"));
    assert_eq!(doc["schema_version"], 1);
    let rows = doc["metrics"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["ir"], "inf");
    let md = fs::read_to_string(dir.path().join("metrics.md")).unwrap();
    assert!(md.contains("| t1 | 0.9109 |"), "{md}");
}

#[test]
fn equal_rates_are_perfectly_fair() {
    let dir = tempfile::tempdir().unwrap();
    let rates = fixtures().join("equal_rates.json");
    let o = fairgauge(&["metrics", "--rates", s(&rates), "--alpha", "0.3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&dir.path().join("metrics.json"));
    for row in doc["metrics"]["rows"].as_array().unwrap() {
        assert_eq!(row["fdr"], 1.0);
        assert_eq!(row["ir"], 1.0);
        assert_eq!(row["garbe"], 0.0);
    }
}

#[test]
fn single_group_is_undefined_metric() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("one.json");
    fs::write(
        &rates,
        r#"{"groups":["A"],"threshold_labels":["t1"],"fmr":[[0.1]],"fnmr":[[0.2]]}"#,
    )
    .unwrap();
    let o = fairgauge(&["metrics", "--rates", s(&rates), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_alpha = fairgauge(&[
        "metrics",
        "--rates",
        s(&fixtures().join("equal_rates.json")),
        "--alpha",
        "1.5",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(bad_alpha.status.code(), Some(2));

    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "score,mated,group\n0.5,1,A\nnot-a-number,0,A\n").unwrap();
    let o = fairgauge(&["audit", "--scores", s(&csv), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn non_positive_sd_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = read_json(&fixtures().join("scenarios/biased_diveface.json"));
    doc["groups"][1]["nonmated_sd"] = 0.0.into();
    let scen = dir.path().join("scenario.json");
    fs::write(&scen, doc.to_string()).unwrap();
    let o = fairgauge(&["simulate", "--scenario", s(&scen), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("groups[1].nonmated_sd"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairgauge(&[
        "audit",
        "--scores",
        s(&dir.path().join("absent.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn simulate_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = read_json(&fixtures().join("scenarios/biased_diveface.json"));
    for g in doc["groups"].as_array_mut().unwrap() {
        g["n_mated"] = 1000.into();
        g["n_nonmated"] = 1000.into();
    }
    let scen = dir.path().join("small.json");
    fs::write(&scen, doc.to_string()).unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = fairgauge(&["simulate", "--scenario", s(&scen), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(String::from_utf8_lossy(&bytes).lines().count(), 12_001);

    let cfg = fixtures().join("scenarios/run_config.json");
    let out = dir.path().join("audit");
    let o = fairgauge(&["audit", "--scores", s(&a), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&out.join("audit.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["input"]["records"], 12_000);
    assert_eq!(report["thresholds"]["entries"].as_array().unwrap().len(), 3);
    assert!(out.join("audit.md").exists());
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let scen = fixtures().join("scenarios/overcorrect_rfw.json");
    let run = |seed: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fairgauge"));
        cmd.args(["simulate", "--scenario", s(&scen), "--out", s(&out)]);
        match seed {
            Some(v) => cmd.env("FAIRGAUGE_SEED_OVERRIDE", v),
            None => cmd.env_remove("FAIRGAUGE_SEED_OVERRIDE"),
        };
        let o = cmd.output().unwrap();
        (o.status.code(), fs::read(&out).unwrap_or_default())
    };
    let (c0, plain) = run(None, "plain.csv");
    let (c1, over_a) = run(Some("7"), "a.csv");
    let (c2, over_b) = run(Some("7"), "b.csv");
    assert_eq!((c0, c1, c2), (Some(0), Some(0), Some(0)));
    assert_eq!(over_a, over_b);
    assert_ne!(plain, over_a);
    let (bad, _) = run(Some("seven"), "c.csv");
    assert_eq!(bad, Some(2));
}

#[test]
fn pipeline_writes_stage_and_delta_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sc = fixtures().join("scenarios");
    let o = fairgauge(&[
        "pipeline",
        "--scenario",
        s(&sc.join("biased_diveface.json")),
        "--mitigation",
        s(&sc.join("mitigation_targeted.json")),
        "--config",
        s(&sc.join("run_config.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["before", "after", "delta"] {
        let doc = read_json(&dir.path().join(format!("{f}.json")));
        assert_eq!(doc["schema_version"], 1, "{f}");
        assert!(dir.path().join(format!("{f}.md")).exists());
    }
    let before = read_json(&dir.path().join("before.json"));
    assert_eq!(before["biased_groups"], serde_json::json!(["AM"]));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Improved"), "{stdout}");
}
