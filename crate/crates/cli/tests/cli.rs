use std::path::PathBuf;

use txsc_cli::{main_with, EXIT_NOT_SERIALIZABLE, EXIT_OK, EXIT_USAGE};

fn corpus(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(file).display().to_string()
}

fn txsc(args: &[&str]) -> (i32, String, String) {
    main_with(std::iter::once("txsc").chain(args.iter().copied()))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("txsc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn parse_reports_shape() {
    let (code, out, _) = txsc(&["parse", &corpus("puzzle.txsc")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("contract Puzzle: 5 attributes, 3 functions"));
}

#[test]
fn fmt_check_accepts_canonical_golden() {
    let (code, _, err) = txsc(&["fmt", "--check", &corpus("puzzle.transformed.txsc")]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, _, _) = txsc(&["fmt", "--check", &corpus("puzzle.txsc")]);
    assert_eq!(code, 1);
}

#[test]
fn analyze_json_classifies() {
    let (code, out, _) = txsc(&["--json", "analyze", &corpus("blockking.txsc")]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let enter = v.as_array().unwrap().iter().find(|p| p["function"] == "enter").unwrap();
    assert_eq!(enter["classification"], "CDTF");
}

#[test]
fn transform_writes_golden() {
    let out = tmp("puzzle.txsc");
    let (code, _, err) = txsc(&[
        "transform",
        &corpus("puzzle.txsc"),
        "--config",
        &corpus("puzzle.transform.toml"),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(
        std::fs::read_to_string(out).unwrap(),
        std::fs::read_to_string(corpus("puzzle.transformed.txsc")).unwrap()
    );
}

#[test]
fn sim_then_check_finds_the_anomaly() {
    let hist = tmp("puzzle-history.json");
    let (code, out, err) = txsc(&["sim", &corpus("scenarios/puzzle.toml"), "--out", hist.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("span bob-1:"));
    let (code, out, _) = txsc(&["check", hist.to_str().unwrap()]);
    assert_eq!(code, EXIT_NOT_SERIALIZABLE);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["serializable"], false);
    assert_eq!(v["conflictCycle"][0]["attribute"], "puzzle.reward");
}

#[test]
fn check_bound_without_fallback_is_an_error() {
    let hist = tmp("blockking-history.json");
    let (code, _, _) = txsc(&["sim", &corpus("scenarios/blockking.toml"), "--out", hist.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let (code, _, err) = txsc(&["check", hist.to_str().unwrap(), "--bound", "2"]);
    assert_eq!(code, 1);
    assert!(err.contains("exceed"));
    let (code, out, _) = txsc(&["check", hist.to_str().unwrap(), "--bound", "2", "--fallback-graph"]);
    assert_eq!(code, EXIT_NOT_SERIALIZABLE);
    assert!(out.contains("conflictGraph"));
}

#[test]
fn recipes_pass_and_are_listed() {
    let (code, list, _) = txsc(&["recipe"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(list.lines().count(), 6);
    for line in list.lines() {
        let name = line.split_whitespace().next().unwrap();
        let (code, out, err) = txsc(&["recipe", name]);
        assert_eq!(code, EXIT_OK, "{name}: {out}{err}");
        assert!(out.ends_with("PASS\n"));
    }
}

#[test]
fn usage_errors() {
    assert_eq!(txsc(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(txsc(&["check"]).0, EXIT_USAGE);
    let (code, _, err) = txsc(&["recipe", "nope"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown recipe"));
    let (code, _, err) = txsc(&["parse", "/nonexistent.txsc"]);
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent.txsc"));
}

#[test]
fn seed_override_is_reported() {
    let (_, out, _) = txsc(&["--json", "--seed", "99", "recipe", "blockking-anomaly"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["seed"], 99);
}
