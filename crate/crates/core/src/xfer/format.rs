//! Line-oriented rule file format.
//!
//! ```text
//! # comment
//! format 1
//! gateset nam h,x,rz,cx
//! rule 0 nop
//! rule 1 qubits 1
//! src h q[0]; h q[0];
//! dst
//! ```
//!
//! Gate lists use QASM statement syntax over a register named `q`; angles may
//! use the symbols `t0..t3`, `pi`, and integer linear combinations.

use std::fmt::Write as _;
use std::path::Path;

use crate::circuit::{emit_gate_list, parse_gate_list, Circuit, GateKind, GateSet};
use crate::error::{Error, Result};

use super::rule::{RuleSet, Transformation};

pub const FORMAT_VERSION: u32 = 1;

pub fn ruleset_to_string(set: &RuleSet) -> String {
    let mut out = String::new();
    let kinds: Vec<&str> = set.gate_set.kinds.iter().map(|k| k.name()).collect();
    let _ = writeln!(out, "format {FORMAT_VERSION}");
    let _ = writeln!(out, "gateset {} {}", set.gate_set.name.replace(' ', "_"), kinds.join(","));
    for (i, r) in set.rules().iter().enumerate() {
        if r.is_nop {
            let _ = writeln!(out, "rule {i} nop");
            continue;
        }
        let _ = writeln!(out, "rule {i} qubits {}", r.source.num_qubits());
        let _ = writeln!(out, "src {}", emit_gate_list(&r.source, " "));
        let _ = writeln!(out, "dst {}", emit_gate_list(&r.target, " "));
    }
    out
}

pub fn save_ruleset(set: &RuleSet, path: &Path) -> Result<()> {
    std::fs::write(path, ruleset_to_string(set))?;
    Ok(())
}

pub fn load_ruleset(path: &Path, trust: bool) -> Result<RuleSet> {
    parse_ruleset(&std::fs::read_to_string(path)?, trust)
}

struct Pending {
    line: usize,
    qubits: usize,
    src: Option<Circuit>,
    dst: Option<Circuit>,
}

/// Parse a rule file. Unless `trust` is set, every rule is re-verified and the
/// first failure is reported with its index and residual.
pub fn parse_ruleset(text: &str, trust: bool) -> Result<RuleSet> {
    let err = |line: usize, msg: String| Error::RuleFormat { line, msg };
    let mut gate_set: Option<GateSet> = None;
    let mut rules: Vec<Transformation> = Vec::new();
    let mut saw_nop = false;
    let mut pending: Option<Pending> = None;
    let mut next_index = 0usize;

    let finish = |p: Pending, rules: &mut Vec<Transformation>| -> Result<()> {
        let (Some(src), Some(dst)) = (p.src, p.dst) else {
            return Err(err(p.line, "rule needs both `src` and `dst` lines".into()));
        };
        let rule = Transformation::new(&src, &dst).map_err(|e| err(p.line, e.to_string()))?;
        rules.push(rule);
        Ok(())
    };

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match head {
            "format" => {
                if rest != FORMAT_VERSION.to_string() {
                    return Err(err(line_no, format!("unsupported format version `{rest}`")));
                }
            }
            "gateset" => {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| err(line_no, "missing gate set name".into()))?;
                let kinds = parts.next().unwrap_or("");
                let kinds: Option<Vec<GateKind>> = kinds.split(',').map(GateKind::from_name).collect();
                let kinds = kinds.filter(|k| !k.is_empty()).ok_or_else(|| err(line_no, "bad gate list".into()))?;
                let mut gs = GateSet::custom(&kinds);
                gs.name = name.to_string();
                gate_set = Some(gs);
            }
            "rule" => {
                if let Some(p) = pending.take() {
                    finish(p, &mut rules)?;
                }
                let mut parts = rest.split_whitespace();
                let index: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "missing rule index".into()))?;
                if index != next_index {
                    return Err(err(line_no, format!("expected rule index {next_index}, found {index}")));
                }
                next_index += 1;
                match (parts.next(), parts.next()) {
                    (Some("nop"), None) if index == 0 => saw_nop = true,
                    (Some("qubits"), Some(n)) if index > 0 => {
                        let qubits = n.parse().map_err(|_| err(line_no, format!("bad qubit count `{n}`")))?;
                        pending = Some(Pending { line: line_no, qubits, src: None, dst: None });
                    }
                    _ => return Err(err(line_no, "rule 0 must be `nop`; others need `qubits N`".into())),
                }
            }
            "src" | "dst" => {
                let p = pending.as_mut().ok_or_else(|| err(line_no, format!("`{head}` outside a rule")))?;
                let c = parse_gate_list(rest, p.qubits).map_err(|e| err(line_no, e.to_string()))?;
                let slot = if head == "src" { &mut p.src } else { &mut p.dst };
                if slot.replace(c).is_some() {
                    return Err(err(line_no, format!("duplicate `{head}`")));
                }
            }
            other => return Err(err(line_no, format!("unknown directive `{other}`"))),
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut rules)?;
    }
    if !saw_nop {
        return Err(err(1, "missing `rule 0 nop`".into()));
    }
    let gate_set = gate_set.ok_or_else(|| err(1, "missing `gateset` line".into()))?;
    let set = RuleSet::new(gate_set, rules);
    if !trust {
        if let Some(&(index, residual)) = set.verify_all()?.first() {
            return Err(Error::RuleVerification { index, residual });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xfer::{generate_ruleset, ibm_extra_rules, GenConfig};

    #[test]
    fn round_trip_preserves_rules() {
        let mut cfg = GenConfig::new(GateSet::nam(), 2, 2);
        cfg.param_exprs = true;
        let (set, _) = generate_ruleset(&cfg).unwrap();
        let text = ruleset_to_string(&set);
        let back = parse_ruleset(&text, false).unwrap();
        assert_eq!(back.len(), set.len());
        for (a, b) in set.rules().iter().zip(back.rules()) {
            assert_eq!(a.digest(), b.digest());
        }
        assert_eq!(back.digest(), set.digest());
    }

    #[test]
    fn constant_angles_survive() {
        let set = RuleSet::new(GateSet::ibm(), ibm_extra_rules());
        let back = parse_ruleset(&ruleset_to_string(&set), false).unwrap();
        assert_eq!(back.digest(), set.digest());
    }

    #[test]
    fn corrupted_target_is_reported() {
        let text = "format 1\ngateset t h\nrule 0 nop\nrule 1 qubits 1\nsrc h q[0]; h q[0];\ndst\nrule 2 qubits 1\nsrc h q[0]; h q[0];\ndst x q[0];\n";
        match parse_ruleset(text, false) {
            Err(Error::RuleVerification { index, residual }) => {
                assert_eq!(index, 2);
                assert!(residual > 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_ruleset(text, true).unwrap().len(), 3);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(parse_ruleset("format 2\n", false), Err(Error::RuleFormat { line: 1, .. })));
        assert!(parse_ruleset("format 1\ngateset t h\nrule 1 qubits 1\n", false).is_err());
        assert!(parse_ruleset("format 1\ngateset t h\nrule 0 nop\nrule 1 qubits 1\nsrc h q[0];\n", false).is_err());
        let bad_gate = "format 1\ngateset t h\nrule 0 nop\nrule 1 qubits 1\nsrc foo q[0];\ndst\n";
        assert!(matches!(parse_ruleset(bad_gate, false), Err(Error::RuleFormat { line: 5, .. })));
    }
}
