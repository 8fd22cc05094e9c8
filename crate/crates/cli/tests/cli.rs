use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scope")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn write_config(dir: &Path, seeds: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(
        &path,
        format!(
            r#"{{"run_id": "t", "scenes": {{"generate": {{"rooms": 4, "objects_per_room": 4, "size": 32}}}},
                "seeds": [{seeds}], "metric_seeds": [0, 1],
                "variants": ["Full", "RandomFrontier", "NoPotentialGraph"],
                "episode": {{"matcher_error": 0.2, "validator_fp": 0.1, "validator_fn": 0.1}}}}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn gen_writes_one_file_per_seed_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scenes");
    let o = out.to_str().unwrap();
    ok(&scope(&["gen", "--seeds", "0..10", "--out", o]));
    let files = sorted_files(&out);
    assert_eq!(files.len(), 10);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    ok(&scope(&["gen", "--seeds", "0..10", "--out", o]));
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(first, second);

    let mut args = vec!["validate"];
    let names: Vec<String> = files.iter().map(|f| f.to_str().unwrap().to_string()).collect();
    args.extend(names.iter().map(String::as_str));
    let stdout = ok(&scope(&args));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok")).count(), 10);
}

#[test]
fn gen_with_impossible_params_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scope(&[
        "gen", "--seeds", "7", "--rooms", "2", "--size", "8", "--objects-per-room", "50",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("generation failed"), "{err}");
}

#[test]
fn validate_rejects_a_broken_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    ok(&scope(&["gen", "--seeds", "3", "--out", dir]));
    let good = tmp.path().join("scene-3.json");
    let bad = tmp.path().join("broken.json");
    fs::write(&bad, "").unwrap();
    let out = scope(&["validate", good.to_str().unwrap(), bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ok") && stdout.contains("invalid"), "{stdout}");
}

#[test]
fn run_is_reproducible_and_report_recomputes_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "0, 1, 2, 3, 4, 5");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let stdout = ok(&scope(&["run", "--config", cfg.to_str().unwrap(), "--workers", "1", "--out", a.to_str().unwrap()]));
    assert!(stdout.contains("Full"));
    ok(&scope(&["run", "--config", cfg.to_str().unwrap(), "--workers", "3", "--out", b.to_str().unwrap()]));

    let (ra, rb) = (a.join("t"), b.join("t"));
    for f in ["manifest.json", "report.csv", "report.json"] {
        assert!(ra.join(f).is_file(), "{f} missing");
    }
    let ta = sorted_files(&ra.join("traces"));
    let tb = sorted_files(&rb.join("traces"));
    assert_eq!(ta.len(), 6);
    for (x, y) in ta.iter().zip(&tb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    let csv = ok(&scope(&["report", ra.to_str().unwrap()]));
    assert_eq!(csv, fs::read_to_string(ra.join("report.csv")).unwrap());

    // json and csv carry the same numbers
    let json: serde_json::Value = serde_json::from_str(&ok(&scope(&["report", ra.to_str().unwrap(), "--format", "json"]))).unwrap();
    let mut checked = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (variant, seed, metric, value) = (cols[0], cols[1], cols[2], cols[3]);
        let Ok(seed) = seed.parse::<u64>() else { continue };
        if value.is_empty() {
            continue;
        }
        let group = json["groups"]
            .as_array()
            .unwrap()
            .iter()
            .find(|g| g["variant"] == variant && g["metric_seed"] == seed)
            .unwrap();
        assert_eq!(group[metric].as_f64().unwrap(), value.parse::<f64>().unwrap(), "{line}");
        checked += 1;
    }
    assert!(checked > 10);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(ra.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seeds"].as_array().unwrap().len(), 6);
    assert!(manifest["artifact_version"].is_string());
}

#[test]
fn run_overrides_seeds_and_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "0");
    let out = tmp.path().join("o");
    ok(&scope(&[
        "run", "--config", cfg.to_str().unwrap(), "--seeds", "0..3", "--variant", "full,random-frontier",
        "--out", out.to_str().unwrap(),
    ]));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("t/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(manifest["config"]["variants"], serde_json::json!(["Full", "RandomFrontier"]));
}

#[test]
fn bad_inputs_fail_with_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = scope(&["report", empty.to_str().unwrap()]);
    assert!(!out.status.success());

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"run_id": "x", "scenes": {"generate": {"rooms": 4, "objects_per_room": 4, "size": 32}}, "seeds": []}"#).unwrap();
    let out = scope(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));

    let out = scope(&["run", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}
