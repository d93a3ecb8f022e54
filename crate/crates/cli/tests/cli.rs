//! End-to-end runs of the `varbound` binary: artifacts, manifests and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use varbound::io::sha256_hex;

const SPOT: &str = "2833";

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bs_two_expiries.csv")
}

fn varbound(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_varbound"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn small_book_runs_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = varbound(&["run", "--input", s(&fixture()), "--spot", SPOT, "--nx", "201", "--mc-paths", "20000", "--out", s(&out)]);
    assert_eq!(code, 0);
    let m = manifest(&out, "manifest.json");
    assert_eq!(m["verification_passed"], true);
    assert_eq!(m["completed_stages"].as_array().unwrap().len(), 7);
    let artifacts = m["artifacts"].as_array().unwrap();
    for a in artifacts {
        let bytes = std::fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let barriers = artifacts.iter().filter(|a| a["path"].as_str().unwrap().contains("/barrier_")).count();
    assert_eq!(barriers, 2 * 2 * 2, "two maturities, two kinds, single and multi");
    for f in ["quotes.json", "rate_estimate.json", "calibration.json", "curve_T0.25.csv", "potential_T0.5.csv", "single/bounds_T0.5.csv", "verification.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let head = std::fs::read_to_string(out.join("multi/barrier_root_T0.25.csv")).unwrap();
    assert!(head.starts_with("x,time,mask\n"));
}

#[test]
fn stage_subcommands_stop_after_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(varbound(&["calibrate", "--input", s(&fixture()), "--spot", SPOT, "--out", s(&out)]), 0);
    assert!(out.join("calibration.json").exists());
    assert!(!out.join("potential_T0.25.csv").exists());
    let m = manifest(&out, "manifest.json");
    assert_eq!(m["completed_stages"], serde_json::json!(["ingest", "rates", "calibrate"]));
}

#[test]
fn invalid_settings_exit_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let input = fixture();
    assert_eq!(varbound(&["ingest", "--input", s(&input), "--spot", SPOT, "--nx", "100", "--out", s(&out)]), 2);
    assert_eq!(varbound(&["ingest", "--input", s(&input), "--out", s(&out)]), 2, "missing spot");
    assert_eq!(varbound(&["ingest", "--input", s(&input), "--spot", SPOT, "--rate", "often"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "spot = 2833\nunknown_key = 1\n").unwrap();
    assert_eq!(varbound(&["ingest", "--config", s(&bad), "--input", s(&input)]), 2);
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("input = '{}'\nspot = 2833\nnx = 100\nout = '{}'\n", s(&fixture()), s(&out))).unwrap();
    assert_eq!(varbound(&["ingest", "--config", s(&cfg)]), 2);
    assert_eq!(varbound(&["ingest", "--config", s(&cfg), "--nx", "401"]), 0);
    assert_eq!(manifest(&out, "manifest.json")["config"]["nx"], 401);
}

#[test]
fn malformed_header_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("q.csv");
    std::fs::write(&input, "kind,strike,expiry,bid,ask\nC,100,0.5,1,2\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(varbound(&["run", "--input", s(&input), "--spot", "100", "--out", s(&out)]), 3);
    let m = manifest(&out, "manifest.json.partial");
    assert_eq!(m["failure"]["stage"], "ingest");
    assert_eq!(m["failure"]["exit_code"], 3);
}

#[test]
fn failing_stage_marks_earlier_artifacts_partial() {
    let dir = tempfile::tempdir().unwrap();
    // calls only: parses, but no parity pairs for the rate estimate
    let text: String = std::fs::read_to_string(fixture()).unwrap().lines().filter(|l| !l.starts_with('P')).map(|l| format!("{l}\n")).collect();
    let input = dir.path().join("calls.csv");
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    assert_eq!(varbound(&["run", "--input", s(&input), "--spot", SPOT, "--out", s(&out)]), 3);
    assert!(out.join("quotes.json.partial").exists());
    assert!(!out.join("quotes.json").exists());
    assert!(!out.join("manifest.json").exists());
    let m = manifest(&out, "manifest.json.partial");
    assert_eq!(m["failure"]["stage"], "rates");
    assert_eq!(m["artifacts"][0]["path"], "quotes.json.partial");
    // a fixed rate and dividend skip the estimators, and the rerun clears the partial copy
    assert_eq!(varbound(&["ingest", "--input", s(&input), "--spot", SPOT, "--rate", "0.0265", "--dividend", "0.0185", "--out", s(&out)]), 0);
    assert!(out.join("quotes.json").exists() && !out.join("quotes.json.partial").exists());
}

#[test]
fn synth_writes_a_parseable_book() {
    let dir = tempfile::tempdir().unwrap();
    let book = dir.path().join("book.csv");
    assert_eq!(varbound(&["synth", "--model", "bs", "--tick", "0", "--out", s(&book)]), 0);
    let parsed = varbound_core::market_data::parse_quotes(&std::fs::read_to_string(&book).unwrap(), 2833.0).unwrap();
    assert_eq!(parsed.dropped, 0);
    assert_eq!(parsed.quote_set.maturities.len(), 12);
}
