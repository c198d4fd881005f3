//! Exhaustive rule generation at small scale.
//!
//! Every circuit over the gate set with at most `max_gates` gates on
//! `max_qubits` wires is enumerated once (gate lists in canonical order, Rz
//! angles symbolic with symbols introduced in order of first use). Circuits
//! are grouped by a fingerprint of their phase-normalized unitaries at fixed
//! symbol assignments, and every ordered pair inside a group that survives the
//! structural filters becomes a candidate rule.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::circuit::{
    param_samples, unitary_with, Circuit, Gate, GateId, GateKind, GateSet, Param, SymExpr, DEFAULT_PARAM_SAMPLES,
    MAX_SYMBOLS,
};
use crate::error::{Error, Result};

use super::matching::match_at;
use super::rule::{RuleSet, Transformation};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub gate_set: GateSet,
    pub max_qubits: usize,
    pub max_gates: usize,
    /// Distinct symbols available to Rz gates.
    pub num_symbols: usize,
    /// Also enumerate Rz angles `-t_i` and `t_i + t_j`, which yields rotation
    /// merging and cancellation rules.
    pub param_exprs: bool,
    /// Only keep rules whose source has a single root gate.
    pub single_root: bool,
    /// Drop rules whose target connects an input wire to an output wire that
    /// the source does not connect.
    pub causal_filter: bool,
    /// Drop rules whose source contains a proper sub-circuit, or whose target
    /// contains any sub-circuit, that a size-reducing rule with at most
    /// `reducer_max_gates` source gates shrinks. Such rules are compositions
    /// of a smaller reduction with something else and mostly widen cost
    /// plateaus.
    pub prune_reducible: bool,
    pub reducer_max_gates: usize,
    /// Cap on enumerated candidate circuits.
    pub max_candidates: usize,
}

impl GenConfig {
    pub fn new(gate_set: GateSet, max_qubits: usize, max_gates: usize) -> GenConfig {
        GenConfig {
            gate_set,
            max_qubits,
            max_gates,
            num_symbols: 2,
            param_exprs: false,
            single_root: true,
            causal_filter: true,
            prune_reducible: true,
            reducer_max_gates: 3,
            max_candidates: 5_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct GenReport {
    pub candidates: usize,
    pub classes: usize,
    pub nontrivial_classes: usize,
    pub pairs: usize,
    pub rules: usize,
    pub verified: usize,
    pub pruned: usize,
    pub failures: Vec<usize>,
}

/// Generate and verify a rule set. The returned set has NOP at index 0 and
/// rules sorted by (source size, target size, canonical key).
pub fn generate_ruleset(cfg: &GenConfig) -> Result<(RuleSet, GenReport)> {
    let n = cfg.max_qubits;
    if n == 0 || n > 4 {
        return Err(Error::Config(format!("max_qubits must be in 1..=4, got {n}")));
    }
    let symbols = cfg.num_symbols.min(MAX_SYMBOLS);
    let options = gate_options(&cfg.gate_set, n, symbols, cfg.param_exprs);
    let mut circuits: Vec<Vec<Gate>> = Vec::new();
    let mut seq = Vec::new();
    enumerate(&options, cfg, &mut seq, 0, &mut circuits)?;

    let samples = param_samples(DEFAULT_PARAM_SAMPLES);
    let mut groups: HashMap<u128, Vec<usize>> = HashMap::new();
    for (i, gates) in circuits.iter().enumerate() {
        let c = Circuit::new(n, gates.clone())?;
        groups.entry(fingerprint(&c, &samples)?).or_default().push(i);
    }
    let mut report = GenReport { candidates: circuits.len(), classes: groups.len(), ..GenReport::default() };
    let mut ordered: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() > 1).collect();
    ordered.sort_by_key(|g| g[0]);
    report.nontrivial_classes = ordered.len();

    let mut rules: BTreeMap<(usize, usize, u64, u64), Transformation> = BTreeMap::new();
    for group in ordered {
        let members: Vec<Circuit> =
            group.iter().map(|&i| Circuit::new(n, circuits[i].clone()).expect("enumerated circuit")).collect();
        for (a, src) in members.iter().enumerate() {
            for (b, dst) in members.iter().enumerate() {
                if a == b {
                    continue;
                }
                report.pairs += 1;
                if let Some((key, rule)) = candidate_rule(src, dst, cfg) {
                    rules.entry(key).or_insert(rule);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(rules.len());
    for (i, rule) in rules.into_values().enumerate() {
        if rule.verify()? {
            out.push(rule);
        } else {
            report.failures.push(i + 1);
        }
    }
    report.verified = out.len();
    if cfg.prune_reducible {
        out = prune_reducible(out, cfg.reducer_max_gates);
        report.pruned = report.verified - out.len();
    }
    report.rules = out.len();
    Ok((RuleSet::new(cfg.gate_set.clone(), out), report))
}

#[derive(Clone, Copy, Debug)]
struct GateOption {
    kind: GateKind,
    qubits: [usize; 2],
    expr: Option<SymExpr>,
}

fn gate_options(gate_set: &GateSet, n: usize, symbols: usize, exprs: bool) -> Vec<GateOption> {
    let mut params = Vec::new();
    for i in 0..symbols {
        params.push(SymExpr::symbol(i));
    }
    if exprs {
        for i in 0..symbols {
            params.push(SymExpr::neg_symbol(i));
        }
        for i in 0..symbols {
            for j in i + 1..symbols {
                params.push(SymExpr::sum(i, j));
            }
        }
    }
    let mut out = Vec::new();
    for &kind in &gate_set.kinds {
        match (kind.arity(), kind.param_count()) {
            (1, 0) => out.extend((0..n).map(|q| GateOption { kind, qubits: [q, 0], expr: None })),
            (1, _) => {
                for q in 0..n {
                    out.extend(params.iter().map(|&e| GateOption { kind, qubits: [q, 0], expr: Some(e) }));
                }
            }
            _ => {
                for a in 0..n {
                    for b in 0..n {
                        if a != b {
                            out.push(GateOption { kind, qubits: [a, b], expr: None });
                        }
                    }
                }
            }
        }
    }
    out
}

fn min_qubit(o: &GateOption) -> usize {
    if o.kind.arity() == 2 {
        o.qubits[0].min(o.qubits[1])
    } else {
        o.qubits[0]
    }
}

fn option_qubits(o: &GateOption) -> &[usize] {
    &o.qubits[..o.kind.arity()]
}

/// Whether appending `o` keeps `seq` in canonical order.
fn stays_canonical(seq: &[GateOption], o: &GateOption) -> bool {
    let qs = option_qubits(o);
    let ready_after = seq.iter().rposition(|g| option_qubits(g).iter().any(|q| qs.contains(q)));
    let start = ready_after.map_or(0, |j| j + 1);
    let mq = min_qubit(o);
    seq[start..].iter().all(|g| min_qubit(g) < mq)
}

/// Symbols must be introduced in increasing order, and first with a positive sign.
fn symbols_in_order(seq: &[GateOption], o: &GateOption) -> bool {
    let Some(e) = o.expr else { return true };
    let fresh = seq
        .iter()
        .filter_map(|g| g.expr)
        .flat_map(|e| e.symbols().collect::<Vec<_>>())
        .max()
        .map_or(0, |m| m + 1);
    let mut next = fresh;
    for s in e.symbols() {
        if s < fresh {
            continue;
        }
        if s != next || e.coeffs[s] < 0 {
            return false;
        }
        next += 1;
    }
    true
}

fn enumerate(
    options: &[GateOption],
    cfg: &GenConfig,
    seq: &mut Vec<GateOption>,
    depth: usize,
    out: &mut Vec<Vec<Gate>>,
) -> Result<()> {
    if out.len() >= cfg.max_candidates {
        return Err(Error::EnumerationBudget(cfg.max_candidates));
    }
    out.push(
        seq.iter()
            .enumerate()
            .map(|(i, o)| Gate::new(GateId(i as u32), o.kind, option_qubits(o), o.expr.map(Param::Expr)))
            .collect(),
    );
    if depth == cfg.max_gates {
        return Ok(());
    }
    for o in options {
        if stays_canonical(seq, o) && symbols_in_order(seq, o) {
            seq.push(*o);
            enumerate(options, cfg, seq, depth + 1, out)?;
            seq.pop();
        }
    }
    Ok(())
}

fn fingerprint(c: &Circuit, samples: &[[f64; MAX_SYMBOLS]]) -> Result<u128> {
    let mut h = Sha256::new();
    for s in samples {
        let u = unitary_with(c, s, c.num_qubits())?;
        let pivot = u.data.iter().find(|z| z.norm() > 1e-6).copied().unwrap_or_default();
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { pivot };
        for z in &u.data {
            let w = z * phase;
            h.update(((w.re * 1e7).round() as i64).to_le_bytes());
            h.update(((w.im * 1e7).round() as i64).to_le_bytes());
        }
    }
    Ok(u128::from_le_bytes(h.finalize()[..16].try_into().expect("32-byte digest")))
}

/// Fixed generic angles used to instantiate symbolic patterns for matching.
const GENERIC_ANGLES: [f64; MAX_SYMBOLS] = [0.371_9, 1.117_3, 2.030_1, 0.779_3];

fn instantiate(c: &Circuit) -> Circuit {
    let gates = c
        .gates()
        .iter()
        .map(|g| Gate::new(g.id, g.kind, g.qubits(), g.param.map(|p| Param::Value(p.resolve(&GENERIC_ANGLES)))))
        .collect();
    Circuit::new(c.num_qubits(), gates).expect("same structure")
}

fn prune_reducible(rules: Vec<Transformation>, max_gates: usize) -> Vec<Transformation> {
    let reducers: Vec<Transformation> =
        rules.iter().filter(|r| r.gain() > 0 && r.source.len() <= max_gates).cloned().collect();
    let reducible = |c: &Circuit, max_len: usize| {
        let ci = instantiate(c);
        reducers
            .iter()
            .filter(|r| r.source.len() <= max_len)
            .any(|r| ci.gates().iter().any(|g| Some(g.kind) == r.anchor_kind() && match_at(&ci, g.id, r).is_some()))
    };
    rules
        .into_iter()
        .filter(|r| !reducible(&r.source, r.source.len() - 1) && !reducible(&r.target, r.target.len()))
        .collect()
}

/// Normalize `src -> dst` and return it with its dedup key if it passes the filters.
fn candidate_rule(src: &Circuit, dst: &Circuit, cfg: &GenConfig) -> Option<((usize, usize, u64, u64), Transformation)> {
    if src.is_empty() || !src.is_connected() || !dst.is_connected() {
        return None;
    }
    let used = src.used_qubits();
    if dst.used_qubits().iter().any(|q| !used.contains(q)) {
        return None;
    }
    if cfg.single_root && src.roots().len() != 1 {
        return None;
    }
    if shares_boundary_gate(src, dst) {
        return None;
    }
    if cfg.causal_filter && !causally_contained(dst, src) {
        return None;
    }
    let k = used.len();
    let mut compact = vec![usize::MAX; src.num_qubits()];
    for (i, &q) in used.iter().enumerate() {
        compact[q] = i;
    }
    let src = src.map_qubits(&compact, k);
    let dst = dst.map_qubits(&compact, k);
    let mut best: Option<((u64, u64), Circuit, Circuit)> = None;
    for perm in permutations(k) {
        let (s, d) = relabel_symbols(&src.map_qubits(&perm, k), &dst.map_qubits(&perm, k));
        let key = (s.canonical_hash(), d.canonical_hash());
        if best.as_ref().is_none_or(|(b, _, _)| key < *b) {
            best = Some((key, s, d));
        }
    }
    let (key, s, d) = best?;
    let rule = Transformation::new(&s, &d).ok()?;
    Some(((s.len(), d.len(), key.0, key.1), rule))
}

/// Rename symbols by first use in the source's canonical order.
fn relabel_symbols(src: &Circuit, dst: &Circuit) -> (Circuit, Circuit) {
    let mut perm = [usize::MAX; MAX_SYMBOLS];
    let mut next = 0;
    for p in src.canonical_order() {
        if let Some(Param::Expr(e)) = &src.gate(p).param {
            for s in e.symbols() {
                if perm[s] == usize::MAX {
                    perm[s] = next;
                    next += 1;
                }
            }
        }
    }
    for slot in perm.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    let rename = |c: &Circuit| {
        let gates = c
            .canonical_order()
            .into_iter()
            .map(|p| {
                let g = c.gate(p);
                let param = match g.param {
                    Some(Param::Expr(e)) => Some(Param::Expr(e.permuted(&perm))),
                    other => other,
                };
                Gate::new(g.id, g.kind, g.qubits(), param)
            })
            .collect();
        Circuit::new(c.num_qubits(), gates).expect("renaming keeps validity")
    };
    (rename(src), rename(dst))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// A first (or last) gate of the source that is also a first (or last) gate
/// of the target makes the rule a padded copy of a smaller one.
fn shares_boundary_gate(src: &Circuit, dst: &Circuit) -> bool {
    let same = |a: &Gate, b: &Gate| {
        a.kind == b.kind && a.qubits() == b.qubits() && a.param.map(|p| p.hash_key()) == b.param.map(|p| p.hash_key())
    };
    let firsts = |c: &Circuit| -> Vec<usize> { (0..c.len()).filter(|&p| c.pred_positions(p).next().is_none()).collect() };
    let lasts = |c: &Circuit| -> Vec<usize> { (0..c.len()).filter(|&p| c.succ_positions(p).next().is_none()).collect() };
    let shared = |xs: Vec<usize>, ys: Vec<usize>| xs.iter().any(|&x| ys.iter().any(|&y| same(src.gate(x), dst.gate(y))));
    shared(firsts(src), firsts(dst)) || shared(lasts(src), lasts(dst))
}

/// For each wire `w`, the set of output wires reachable from input `w`.
pub(crate) fn wire_reach(c: &Circuit) -> Vec<Vec<bool>> {
    let n = c.num_qubits();
    // For each gate, the set of input wires that reach it.
    let mut reach_gate: Vec<Vec<bool>> = Vec::with_capacity(c.len());
    for p in 0..c.len() {
        let g = c.gate(p);
        let mut r = vec![false; n];
        for (port, &q) in g.qubits().iter().enumerate() {
            match c.pred(p, port) {
                Some(l) => {
                    for (slot, &v) in r.iter_mut().zip(&reach_gate[l.pos]) {
                        *slot |= v;
                    }
                }
                None => r[q] = true,
            }
        }
        reach_gate.push(r);
    }
    let mut out = vec![vec![false; n]; n];
    for q in 0..n {
        let wire = c.wire(q);
        match wire.last() {
            Some(&last) => {
                for (w, row) in out.iter_mut().enumerate() {
                    row[q] = reach_gate[last][w];
                }
            }
            None => out[q][q] = true,
        }
    }
    out
}

/// Whether every input-to-output wire connection of `a` is also present in `b`.
fn causally_contained(a: &Circuit, b: &Circuit) -> bool {
    let (ra, rb) = (wire_reach(a), wire_reach(b));
    ra.iter().zip(&rb).all(|(x, y)| x.iter().zip(y).all(|(&p, &q)| !p || q))
}
