//! End-to-end tests of the `circopt` executable.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circopt::circuit::parse_qasm;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::{circuits_dir, equivalent};

fn circopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circopt")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn toffoli() -> PathBuf {
    circuits_dir().join("toffoli.qasm")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Gate statements of a QASM file, as `(name, operand text)`.
fn gate_lines(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(|l| l.split("//").next().unwrap().trim())
        .filter(|l| l.ends_with(';'))
        .filter(|l| !["OPENQASM", "include", "qreg", "creg"].iter().any(|k| l.starts_with(k)))
        .map(|l| {
            let name: String = l.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
            (name, l.to_string())
        })
        .collect()
}

fn gen_rules(dir: &Path) -> PathBuf {
    let rules = dir.join("small.rules");
    let o = circopt(&["gen-rules", "--qubits", "2", "--gates", "3", "-o", s(&rules)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    rules
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &[][..],
        &["no-such-verb"],
        &["stats"],
        &["stats", "x.qasm", "--bogus"],
        &["--profile", "huge", "stats", "x.qasm"],
        &["--log-level", "loud", "stats", "x.qasm"],
        &["--workers", "0", "stats", "x.qasm"],
    ] {
        let o = circopt(args);
        assert_eq!(code(&o), 2, "args {args:?}");
        assert!(!o.stderr.is_empty(), "args {args:?} printed nothing on stderr");
    }
}

#[test]
fn help_exits_zero() {
    let o = circopt(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("optimize"));
}

#[test]
fn operational_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.qasm");
    assert_eq!(code(&circopt(&["stats", s(&missing)])), 1);
    let bad = dir.path().join("bad.qasm");
    std::fs::write(&bad, "OPENQASM 2.0;\nqreg q[1];\nfoo q[0];\n").unwrap();
    let o = circopt(&["stats", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn stats_reports_counts() {
    let text = std::fs::read_to_string(toffoli()).unwrap();
    let gates = gate_lines(&text);
    let o = circopt(&["stats", s(&toffoli())]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let field = |k: &str| -> String {
        out.lines().find_map(|l| l.strip_prefix(&format!("{k} "))).unwrap_or_else(|| panic!("no {k} in {out}")).into()
    };
    assert_eq!(field("qubits"), "3");
    assert_eq!(field("total"), gates.len().to_string());
    assert_eq!(field("cnot"), gates.iter().filter(|g| g.0 == "cx").count().to_string());
    assert!(field("depth").parse::<usize>().unwrap() <= gates.len());
    assert!(!out.contains("fidelity"));

    let dir = tempfile::tempdir().unwrap();
    let errors = dir.path().join("errors.toml");
    std::fs::write(&errors, "h = 0.001\nx = 0.002\nrz = 0.0\ncx = 0.01\n").unwrap();
    let o = circopt(&["stats", s(&toffoli()), "--errors", s(&errors)]);
    assert_eq!(code(&o), 0);
    let rate = |name: &str| match name {
        "h" => 0.001,
        "x" => 0.002,
        "cx" => 0.01,
        _ => 0.0,
    };
    let expected: f64 = gates.iter().map(|g| 1.0 - rate(&g.0)).product();
    let got: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("fidelity ")).unwrap().parse().unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn rule_files_verify_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let rules = gen_rules(dir.path());
    let o = circopt(&["verify-rules", s(&rules)]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(report["rules"].as_u64().unwrap() >= 20);
    assert_eq!(report["verified"], report["rules"]);
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);

    // H·H -> identity becomes H·H -> X, which is not equivalent.
    let text = std::fs::read_to_string(&rules).unwrap();
    let tampered = text.replacen("src h q[0]; h q[0];\ndst \n", "src h q[0]; h q[0];\ndst x q[0];\n", 1);
    assert_ne!(tampered, text);
    let bad = dir.path().join("bad.rules");
    std::fs::write(&bad, tampered).unwrap();
    let o = circopt(&["verify-rules", s(&bad)]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 1);
    assert_eq!(report["verified"].as_u64().unwrap() + 1, report["rules"].as_u64().unwrap());
}

#[test]
fn optimize_is_verified_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let rules = gen_rules(dir.path());
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.qasm"));
        let log = dir.path().join(format!("{tag}.log"));
        let o = circopt(&[
            "--seed",
            "7",
            "optimize",
            s(&toffoli()),
            "--rules",
            s(&rules),
            "--steps",
            "400",
            "-o",
            s(&out),
            "--train-log",
            s(&log),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let report: Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
        (std::fs::read(&out).unwrap(), report)
    };
    let (qasm_a, report_a) = run("a");
    let (qasm_b, report_b) = run("b");
    assert_eq!(qasm_a, qasm_b);
    for key in ["input_cost", "output_cost", "steps", "verified"] {
        assert_eq!(report_a[key], report_b[key], "{key}");
    }
    let costs = |r: &Value| -> Vec<Value> { r["improvements"].as_array().unwrap().iter().map(|i| i["cost"].clone()).collect() };
    assert_eq!(costs(&report_a), costs(&report_b));

    let input = parse_qasm(&std::fs::read_to_string(toffoli()).unwrap()).unwrap();
    let output = parse_qasm(std::str::from_utf8(&qasm_a).unwrap()).unwrap();
    assert_eq!(report_a["input_cost"].as_f64().unwrap(), input.len() as f64);
    assert_eq!(report_a["output_cost"].as_f64().unwrap(), output.len() as f64);
    assert!(output.len() <= input.len());
    assert_eq!(report_a["verified"], Value::Bool(true));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(equivalent(&input, &output, &mut rng));
}
