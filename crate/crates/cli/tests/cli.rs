use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cantor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cantor"))
        .args(args)
        .env_remove("CANTOR_FUEL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(cantor(&["field-info", "--minpoly", "x^4+x-1"]).status.code(), Some(0));
    let bad = cantor(&["refine", "--minpoly", "x^4+x-1", "--parts", "1,0;1,0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("SumMismatch"));
    assert_eq!(cantor(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(cantor(&["refine", "--minpoly", "x^4+x-1"]).status.code(), Some(2));
}

#[test]
fn refine_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let o = cantor(&[
        "refine",
        "--minpoly",
        "x^4+x-1",
        "--parts",
        "3,0;0,3;1,1*3",
        "--out",
        path(&cert),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = cantor(&["verify-cert", path(&cert)]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));

    // A certificate with one leaf removed no longer verifies.
    let mut json: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    json["partition"]["leaves"].as_array_mut().unwrap().pop();
    std::fs::write(&cert, json.to_string()).unwrap();
    assert_eq!(cantor(&["verify-cert", path(&cert)]).status.code(), Some(1));
}

#[test]
fn strategies_are_selected_by_name() {
    for name in ["selmer", "generic"] {
        let o = cantor(&[
            "--json",
            "refine",
            "--minpoly",
            "x^4+x-1",
            "--parts",
            "1,0;0,1",
            "--strategy",
            name,
        ]);
        assert!(o.status.success());
        let cert: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(cert["strategy"], name);
    }
    let o = cantor(&[
        "refine",
        "--minpoly",
        "x^4+x-1",
        "--parts",
        "1,0;0,1",
        "--strategy",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rational_check_reports_no_refinement() {
    let o = cantor(&["rational-check", "--r", "1/3", "--parts", "1,0*3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no tree refinement up to depth 10"));

    let o = cantor(&[
        "--json",
        "rational-check",
        "--r",
        "1/3",
        "--parts",
        "1,0*3",
        "--depth",
        "6",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["outcome"]["result"], "no_tree_refinement_up_to");
    assert_eq!(v["ones_leaf"]["holds"], true);
}

#[test]
fn homeo_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = cantor(&["homeo-build", "--r", "x^4+x-1", "--depth", "4", "--out", path(p)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v = cantor(&["verify-cert", path(&a)]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn json_outputs_parse() {
    let o = cantor(&["--json", "field-info", "--minpoly", "x^4+x-1"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["degree"], 4);
    assert_eq!(v["selmer_exponent"], 4);

    let o = cantor(&[
        "--json",
        "canonical",
        "--minpoly",
        "x^4+x-1",
        "--random",
        "20",
        "--seed",
        "3",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["agreed"], v["pairs"]);

    let o = cantor(&["reduce-search", "--r", "x^4+x-1"]);
    let text = stdout(&o);
    assert!(text.contains("n=2 a=(0,0,1)") && text.contains("n=2 a=(1,2,0)"));
}
