//! Test-side oracles shared by the integration tests: an independent dense
//! simulator, random circuit generation, and exhaustive neighbour listing.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use circopt::circuit::{parse_qasm, Circuit, CircuitBuilder, GateKind, GateSet, Param};
use circopt::xfer::{apply, generate_ruleset, match_at_pos, GenConfig, RuleSet};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense unitary, row-major, with qubit 0 as the least significant bit and
/// `Rz(t) = diag(1, e^{it})`. Both conventions differ from the library's,
/// which is harmless for equivalence up to global phase.
pub fn unitary(c: &Circuit, symbols: &[f64]) -> Vec<Complex64> {
    let n = c.num_qubits();
    let dim = 1usize << n;
    let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        let mut state = vec![Complex64::new(0.0, 0.0); dim];
        state[col] = Complex64::new(1.0, 0.0);
        for p in c.canonical_order() {
            apply_gate(&mut state, c, p, symbols);
        }
        for row in 0..dim {
            u[row * dim + col] = state[row];
        }
    }
    u
}

fn apply_gate(state: &mut [Complex64], c: &Circuit, pos: usize, symbols: &[f64]) {
    let g = c.gate(pos);
    let qs = g.qubits();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let m: [Complex64; 4] = match g.kind {
        GateKind::H => [h, h, h, -h],
        GateKind::X => [zero, one, one, zero],
        GateKind::Z => [one, zero, zero, -one],
        GateKind::Sx => {
            let a = Complex64::new(0.5, 0.5);
            let b = Complex64::new(0.5, -0.5);
            [a, b, b, a]
        }
        GateKind::Rz => {
            let t = g.param.as_ref().map_or(0.0, |p| p.resolve(symbols));
            [one, zero, zero, Complex64::from_polar(1.0, t)]
        }
        GateKind::Cx => {
            let (cb, tb) = (1usize << qs[0], 1usize << qs[1]);
            for i in 0..state.len() {
                if i & cb != 0 && i & tb == 0 {
                    state.swap(i, i | tb);
                }
            }
            return;
        }
    };
    let b = 1usize << qs[0];
    for i in 0..state.len() {
        if i & b == 0 {
            let (x, y) = (state[i], state[i | b]);
            state[i] = m[0] * x + m[1] * y;
            state[i | b] = m[2] * x + m[3] * y;
        }
    }
}

/// Largest entrywise deviation of `b` from `λ·a` with `λ` fitted on the
/// largest entry of `a`.
pub fn phase_residual_at(a: &Circuit, b: &Circuit, symbols: &[f64]) -> f64 {
    if a.num_qubits() != b.num_qubits() {
        return f64::INFINITY;
    }
    let ua = unitary(a, symbols);
    let ub = unitary(b, symbols);
    let k = (0..ua.len()).max_by(|&i, &j| ua[i].norm().total_cmp(&ua[j].norm())).unwrap();
    let ratio = ub[k] / ua[k];
    let lambda = ratio / ratio.norm();
    ua.iter().zip(&ub).map(|(x, y)| (x * lambda - y).norm()).fold(0.0, f64::max)
}

/// Worst residual over `samples` random symbol assignments.
pub fn phase_residual(a: &Circuit, b: &Circuit, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    (0..samples)
        .map(|_| {
            let s: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            phase_residual_at(a, b, &s)
        })
        .fold(0.0, f64::max)
}

pub fn equivalent(a: &Circuit, b: &Circuit, rng: &mut ChaCha8Rng) -> bool {
    phase_residual(a, b, 4, rng) < 1e-8
}

/// Random circuit with sizes drawn from the ranges, over `kinds` with Rz angles drawn from `angles`.
pub fn random_circuit(
    rng: &mut ChaCha8Rng,
    qubits: RangeInclusive<usize>,
    gates: RangeInclusive<usize>,
    kinds: &[GateKind],
    angles: &[f64],
) -> Circuit {
    let qubits = rng.gen_range(qubits);
    let gates = rng.gen_range(gates);
    let mut b = CircuitBuilder::new(qubits);
    for _ in 0..gates {
        let kind = loop {
            let k = kinds[rng.gen_range(0..kinds.len())];
            if k.arity() <= qubits {
                break k;
            }
        };
        match kind {
            GateKind::Cx => {
                let c = rng.gen_range(0..qubits);
                let t = (c + rng.gen_range(1..qubits)) % qubits;
                b = b.cx(c, t);
            }
            GateKind::Rz => {
                let q = rng.gen_range(0..qubits);
                b = b.gate(GateKind::Rz, &[q], Some(Param::Value(angles[rng.gen_range(0..angles.len())])));
            }
            k => {
                let q = rng.gen_range(0..qubits);
                b = b.gate(k, &[q], None);
            }
        }
    }
    b.build().expect("random circuit is valid")
}

pub fn nam_kinds() -> Vec<GateKind> {
    GateSet::nam().kinds
}

pub fn quarter_turns() -> Vec<f64> {
    (1..8).map(|k| k as f64 * PI / 4.0).collect()
}

/// Every `(position, rule index)` with a match, trying every rule at every
/// position regardless of anchor kind.
pub fn all_matches(c: &Circuit, rules: &RuleSet) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for pos in 0..c.len() {
        for i in 1..rules.len() {
            if match_at_pos(c, pos, rules.get(i)).is_some() {
                out.push((pos, i));
            }
        }
    }
    out
}

/// Every circuit one rewrite away, one per match.
pub fn successors(c: &Circuit, rules: &RuleSet) -> Vec<Circuit> {
    all_matches(c, rules)
        .into_iter()
        .map(|(pos, i)| {
            let m = match_at_pos(c, pos, rules.get(i)).expect("matched above");
            apply(c, rules.get(i), &m).expect("apply succeeds on a match").0
        })
        .collect()
}

pub fn circuits_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../circuits")
}

pub fn repo_circuit(name: &str) -> Circuit {
    let path = circuits_dir().join(format!("{name}.qasm"));
    parse_qasm(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

pub fn repo_circuit_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(circuits_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "qasm").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

/// Nam gate set, 2 qubits, 3 gates, default options.
pub fn small_rules() -> RuleSet {
    generate_ruleset(&GenConfig::new(GateSet::nam(), 2, 3)).unwrap().0
}

/// The rule set used for desk-scale optimization: Nam gate set, 3 qubits,
/// 4 gates, rotation sums enabled.
pub fn desk_rules() -> RuleSet {
    let mut cfg = GenConfig::new(GateSet::nam(), 3, 4);
    cfg.param_exprs = true;
    generate_ruleset(&cfg).unwrap().0
}
