//! Rewrite rules and rule sets.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::circuit::{
    cost, phase_residual, Circuit, CircuitBuilder, CostMetric, GateKind, GateSet, Param, DEFAULT_PARAM_SAMPLES,
    EQUIV_TOL,
};
use crate::error::{Error, Result};

/// One edge check performed while growing a match from the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Step {
    pub from: usize,
    pub port: usize,
    pub forward: bool,
    pub to: usize,
    pub to_port: usize,
}

/// A verified rewrite `source -> target` over a shared set of pattern qubits.
///
/// The source is stored in canonical order with ids `0..n`; its first gate is
/// the anchor. Dangling wires correspond by qubit index, so the boundary map
/// is the identity on pattern qubits.
#[derive(Clone, Debug)]
pub struct Transformation {
    pub source: Circuit,
    pub target: Circuit,
    pub is_nop: bool,
    pub source_depth: usize,
    pub(crate) plan: Vec<Step>,
    /// `(position, port, is_input)` for every pattern port on a dangling wire.
    pub(crate) boundary: Vec<(usize, usize, bool)>,
}

impl PartialEq for Transformation {
    fn eq(&self, other: &Self) -> bool {
        self.is_nop == other.is_nop && self.source == other.source && self.target == other.target
    }
}

impl Transformation {
    pub const ANCHOR: usize = 0;

    pub fn nop() -> Transformation {
        Transformation {
            source: Circuit::empty(0),
            target: Circuit::empty(0),
            is_nop: true,
            source_depth: 0,
            plan: Vec::new(),
            boundary: Vec::new(),
        }
    }

    /// Build a rule, normalizing both sides and checking the structural
    /// requirements. Equivalence is not checked here; see [`Transformation::residual`].
    pub fn new(source: &Circuit, target: &Circuit) -> Result<Transformation> {
        if source.num_qubits() != target.num_qubits() {
            return Err(Error::InvalidRule(format!(
                "source has {} qubits, target {}",
                source.num_qubits(),
                target.num_qubits()
            )));
        }
        if source.is_empty() {
            return Err(Error::InvalidRule("empty source".into()));
        }
        if !source.is_connected() || !target.is_connected() {
            return Err(Error::InvalidRule("source and target must be connected".into()));
        }
        let mut src_symbols = BTreeSet::new();
        for g in source.gates() {
            if let Some(Param::Expr(e)) = &g.param {
                if e.single().is_none() {
                    return Err(Error::InvalidRule(format!("source parameter `{e}` is not a single symbol")));
                }
                src_symbols.extend(e.symbols());
            }
        }
        for g in target.gates() {
            if let Some(Param::Expr(e)) = &g.param {
                if let Some(s) = e.symbols().find(|s| !src_symbols.contains(s)) {
                    return Err(Error::InvalidRule(format!("target symbol t{s} is not bound by the source")));
                }
            }
        }
        let src_qubits = source.used_qubits();
        if let Some(q) = target.used_qubits().into_iter().find(|q| !src_qubits.contains(q)) {
            return Err(Error::InvalidRule(format!("target uses qubit {q} not touched by the source")));
        }
        let source = source.renumbered();
        let target = target.renumbered();
        let source_depth = cost(&source, &CostMetric::Depth)? as usize;
        let (plan, boundary) = build_plan(&source);
        Ok(Transformation { source, target, is_nop: false, source_depth, plan, boundary })
    }

    /// Worst-case phase residual between source and target.
    pub fn residual(&self) -> Result<f64> {
        if self.is_nop {
            return Ok(0.0);
        }
        phase_residual(&self.source, &self.target, DEFAULT_PARAM_SAMPLES)
    }

    pub fn verify(&self) -> Result<bool> {
        Ok(self.residual()? < EQUIV_TOL)
    }

    /// Source minus target gate count.
    pub fn gain(&self) -> isize {
        self.source.len() as isize - self.target.len() as isize
    }

    pub fn anchor_kind(&self) -> Option<GateKind> {
        self.source.gates().first().map(|g| g.kind)
    }

    /// The rule with source and target swapped, when the target can serve as a source.
    pub fn reversed(&self) -> Result<Transformation> {
        Transformation::new(&self.target, &self.source)
    }

    /// Digest of the (source, target) pair.
    pub fn digest(&self) -> u64 {
        if self.is_nop {
            return 0;
        }
        let mut h = Sha256::new();
        h.update(self.source.canonical_hash().to_le_bytes());
        h.update(self.target.canonical_hash().to_le_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("32-byte digest"))
    }
}

fn build_plan(source: &Circuit) -> (Vec<Step>, Vec<(usize, usize, bool)>) {
    let mut plan = Vec::new();
    let mut boundary = Vec::new();
    let mut seen = vec![false; source.len()];
    let mut queue = VecDeque::from([Transformation::ANCHOR]);
    seen[Transformation::ANCHOR] = true;
    while let Some(p) = queue.pop_front() {
        for port in 0..source.gate(p).arity() {
            for forward in [true, false] {
                let link = if forward { source.succ(p, port) } else { source.pred(p, port) };
                match link {
                    Some(l) => {
                        plan.push(Step { from: p, port, forward, to: l.pos, to_port: l.port });
                        if !seen[l.pos] {
                            seen[l.pos] = true;
                            queue.push_back(l.pos);
                        }
                    }
                    None => boundary.push((p, port, !forward)),
                }
            }
        }
    }
    (plan, boundary)
}

/// An indexed rule collection; index 0 is always NOP.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub gate_set: GateSet,
    rules: Vec<Transformation>,
    max_source_depth: usize,
    by_anchor: Vec<Vec<usize>>,
}

impl RuleSet {
    /// Wrap non-NOP rules, prepending NOP.
    pub fn new(gate_set: GateSet, rules: Vec<Transformation>) -> RuleSet {
        let mut all = Vec::with_capacity(rules.len() + 1);
        all.push(Transformation::nop());
        all.extend(rules.into_iter().filter(|r| !r.is_nop));
        let max_source_depth = all.iter().map(|r| r.source_depth).max().unwrap_or(0);
        let mut by_anchor = vec![Vec::new(); GateKind::ALL.len()];
        for (i, r) in all.iter().enumerate() {
            if let Some(k) = r.anchor_kind() {
                by_anchor[k.index()].push(i);
            }
        }
        RuleSet { gate_set, rules: all, max_source_depth, by_anchor }
    }

    /// Size of the action space including NOP.
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.len() <= 1
    }

    pub fn rules(&self) -> &[Transformation] {
        &self.rules
    }

    pub fn get(&self, index: usize) -> &Transformation {
        &self.rules[index]
    }

    pub fn max_source_depth(&self) -> usize {
        self.max_source_depth
    }

    /// Indices of rules whose anchor has the given kind.
    pub fn anchored_on(&self, kind: GateKind) -> &[usize] {
        &self.by_anchor[kind.index()]
    }

    /// Verify every rule, returning `(index, residual)` for each failure.
    pub fn verify_all(&self) -> Result<Vec<(usize, f64)>> {
        let mut failures = Vec::new();
        for (i, r) in self.rules.iter().enumerate().skip(1) {
            let res = r.residual()?;
            if !(res < EQUIV_TOL) {
                failures.push((i, res));
            }
        }
        Ok(failures)
    }

    /// Digest over the ordered rule list.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.gate_set.name.as_bytes());
        for r in &self.rules {
            h.update(r.digest().to_le_bytes());
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("32-byte digest"))
    }

    /// Keep only rules accepted by `keep` (NOP always kept), preserving order.
    pub fn filtered(&self, keep: impl Fn(&Transformation) -> bool) -> RuleSet {
        let rules = self.rules.iter().skip(1).filter(|r| keep(r)).cloned().collect();
        RuleSet::new(self.gate_set.clone(), rules)
    }

    /// Concatenate another rule set after this one, skipping duplicates.
    pub fn merged(&self, other: &RuleSet) -> RuleSet {
        let mut seen: BTreeSet<u64> = self.rules.iter().map(|r| r.digest()).collect();
        let mut rules: Vec<Transformation> = self.rules[1..].to_vec();
        for r in &other.rules[1..] {
            if seen.insert(r.digest()) {
                rules.push(r.clone());
            }
        }
        let mut kinds = self.gate_set.kinds.clone();
        kinds.extend(other.gate_set.kinds.iter().copied());
        let gate_set = if self.gate_set == other.gate_set { self.gate_set.clone() } else { GateSet::custom(&kinds) };
        RuleSet::new(gate_set, rules)
    }
}

/// Three single-qubit identities over {SX, Rz}:
/// `Rz(pi) = SX Rz(pi) SX`, and `SX Rz(a) SX = Rz(a) SX Rz(a)` for `a` in {pi/2, 3pi/2}.
pub fn ibm_extra_rules() -> Vec<Transformation> {
    let rz = |a: f64| CircuitBuilder::new(1).rz(0, a).build().expect("valid");
    let sandwich = |a: f64| CircuitBuilder::new(1).sx(0).rz(0, a).sx(0).build().expect("valid");
    let outer = |a: f64| CircuitBuilder::new(1).rz(0, a).sx(0).rz(0, a).build().expect("valid");
    vec![
        Transformation::new(&rz(PI), &sandwich(PI)).expect("valid rule"),
        Transformation::new(&sandwich(PI / 2.0), &outer(PI / 2.0)).expect("valid rule"),
        Transformation::new(&sandwich(3.0 * PI / 2.0), &outer(3.0 * PI / 2.0)).expect("valid rule"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::SymExpr;

    #[test]
    fn ibm_rules_verify() {
        for r in ibm_extra_rules() {
            assert!(r.residual().unwrap() < EQUIV_TOL, "{r:?}");
        }
    }

    #[test]
    fn rejects_malformed_rules() {
        let hh = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        assert!(Transformation::new(&Circuit::empty(1), &hh).is_err());
        let disconnected = CircuitBuilder::new(2).h(0).h(1).build().unwrap();
        assert!(Transformation::new(&disconnected, &Circuit::empty(2)).is_err());
        let sum = CircuitBuilder::new(1).rz_sym(0, SymExpr::sum(0, 1)).build().unwrap();
        assert!(Transformation::new(&sum, &sum).is_err());
        let free = CircuitBuilder::new(1).rz_sym(0, SymExpr::symbol(1)).build().unwrap();
        let bound = CircuitBuilder::new(1).rz_sym(0, SymExpr::symbol(0)).build().unwrap();
        assert!(Transformation::new(&bound, &free).is_err());
        let wide = CircuitBuilder::new(2).cx(0, 1).build().unwrap();
        let h2 = CircuitBuilder::new(2).h(0).h(0).build().unwrap();
        assert!(Transformation::new(&h2, &wide).is_err());
    }

    #[test]
    fn plan_covers_every_edge() {
        let src = CircuitBuilder::new(2).h(1).cx(0, 1).h(0).cx(0, 1).build().unwrap();
        let r = Transformation::new(&src, &src).unwrap();
        let edges = r.source.edges().iter().filter(|e| matches!(e.src, crate::circuit::Endpoint::Gate(_)) && matches!(e.dst, crate::circuit::Endpoint::Gate(_))).count();
        assert_eq!(r.plan.iter().filter(|s| s.forward).count(), edges);
        assert_eq!(r.boundary.len(), 4);
        assert_eq!(r.source_depth, 4);
    }

    #[test]
    fn nop_sits_at_index_zero() {
        let hh = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let r = Transformation::new(&hh, &Circuit::empty(1)).unwrap();
        let set = RuleSet::new(GateSet::nam(), vec![r]);
        assert_eq!(set.len(), 2);
        assert!(set.get(0).is_nop);
        assert_eq!(set.anchored_on(GateKind::H), &[1]);
        assert_eq!(set.max_source_depth(), 2);
        assert!(set.verify_all().unwrap().is_empty());
    }
}
