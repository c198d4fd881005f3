//! Anchored pattern matching and rewrite application.

use crate::circuit::{Circuit, Gate, GateId, Param, MAX_SYMBOLS};
use crate::error::{Error, Result};

use super::rule::{RuleSet, Transformation};

/// A placement of a rule's source inside a circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub anchored_at: GateId,
    /// Circuit gate id for each source gate, by source position.
    pub mapping: Vec<GateId>,
    positions: Vec<usize>,
    qubit_map: Vec<usize>,
    bindings: [f64; MAX_SYMBOLS],
    circuit_digest: u64,
}

impl Match {
    /// Circuit positions of the matched gates, by source position.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Circuit qubit for each pattern qubit (`usize::MAX` where unused).
    pub fn qubit_map(&self) -> &[usize] {
        &self.qubit_map
    }

    pub fn bindings(&self) -> &[f64; MAX_SYMBOLS] {
        &self.bindings
    }
}

const UNMAPPED: usize = usize::MAX;

/// Match `rule` with its anchor placed on the gate at `pos`.
pub fn match_at_pos(circuit: &Circuit, pos: usize, rule: &Transformation) -> Option<Match> {
    if rule.is_nop {
        return None;
    }
    let src = &rule.source;
    let n = src.len();
    let mut map = vec![UNMAPPED; n];
    let mut qmap = vec![UNMAPPED; src.num_qubits()];
    let mut used_q = vec![false; circuit.num_qubits()];
    if !bind_gate(circuit, src, Transformation::ANCHOR, pos, &mut map, &mut qmap, &mut used_q) {
        return None;
    }
    for step in &rule.plan {
        let cpos = map[step.from];
        let link = if step.forward { circuit.succ(cpos, step.port) } else { circuit.pred(cpos, step.port) };
        let link = link?;
        if link.port != step.to_port {
            return None;
        }
        if map[step.to] == UNMAPPED {
            if !bind_gate(circuit, src, step.to, link.pos, &mut map, &mut qmap, &mut used_q) {
                return None;
            }
        } else if map[step.to] != link.pos {
            return None;
        }
    }
    // Every source gate is reached because sources are connected.
    debug_assert!(map.iter().all(|&m| m != UNMAPPED));

    let mut in_region = std::collections::HashSet::with_capacity(n);
    in_region.extend(map.iter().copied());
    // Dangling pattern ports must not attach to another matched gate.
    for &(p, port, is_input) in &rule.boundary {
        let link = if is_input { circuit.pred(map[p], port) } else { circuit.succ(map[p], port) };
        if let Some(l) = link {
            if in_region.contains(&l.pos) {
                return None;
            }
        }
    }

    let bindings = bind_params(circuit, src, &map)?;
    if !is_convex(circuit, &map, &in_region) {
        return None;
    }
    Some(Match {
        anchored_at: circuit.gate(pos).id,
        mapping: map.iter().map(|&p| circuit.gate(p).id).collect(),
        positions: map,
        qubit_map: qmap,
        bindings,
        circuit_digest: circuit.canonical_hash(),
    })
}

/// Match `rule` anchored at gate `gate`.
pub fn match_at(circuit: &Circuit, gate: GateId, rule: &Transformation) -> Option<Match> {
    circuit.position(gate).and_then(|p| match_at_pos(circuit, p, rule))
}

fn bind_gate(
    circuit: &Circuit,
    src: &Circuit,
    sp: usize,
    cp: usize,
    map: &mut [usize],
    qmap: &mut [usize],
    used_q: &mut [bool],
) -> bool {
    let (sg, cg) = (src.gate(sp), circuit.gate(cp));
    if sg.kind != cg.kind || map.contains(&cp) {
        return false;
    }
    for (&sq, &cq) in sg.qubits().iter().zip(cg.qubits()) {
        if qmap[sq] == UNMAPPED {
            if used_q[cq] {
                return false;
            }
            qmap[sq] = cq;
            used_q[cq] = true;
        } else if qmap[sq] != cq {
            return false;
        }
    }
    map[sp] = cp;
    true
}

fn bind_params(circuit: &Circuit, src: &Circuit, map: &[usize]) -> Option<[f64; MAX_SYMBOLS]> {
    let mut bound: [Option<f64>; MAX_SYMBOLS] = [None; MAX_SYMBOLS];
    for (sp, &cp) in map.iter().enumerate() {
        let (Some(sparam), Some(cparam)) = (&src.gate(sp).param, &circuit.gate(cp).param) else {
            continue;
        };
        let Param::Value(v) = *cparam else {
            return None;
        };
        match sparam {
            Param::Value(c) => {
                if *c != v {
                    return None;
                }
            }
            Param::Expr(e) => {
                let (s, coeff) = e.single()?;
                let value = if coeff > 0 { v } else { -v };
                match bound[s] {
                    None => bound[s] = Some(value),
                    Some(b) if b == value => {}
                    Some(_) => return None,
                }
            }
        }
    }
    let mut out = [0.0; MAX_SYMBOLS];
    for (o, b) in out.iter_mut().zip(bound) {
        *o = b.unwrap_or(0.0);
    }
    Some(out)
}

/// No path leaves the region and comes back.
fn is_convex(circuit: &Circuit, map: &[usize], region: &std::collections::HashSet<usize>) -> bool {
    let max_pos = *map.iter().max().expect("nonempty match");
    let mut stack: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &p in map {
        for s in circuit.succ_positions(p) {
            if !region.contains(&s) && s < max_pos && seen.insert(s) {
                stack.push(s);
            }
        }
    }
    while let Some(p) = stack.pop() {
        for s in circuit.succ_positions(p) {
            if region.contains(&s) {
                return false;
            }
            if s < max_pos && seen.insert(s) {
                stack.push(s);
            }
        }
    }
    true
}

/// Applicability mask over the whole action space; entry 0 (NOP) is always true.
pub fn valid_xfers(circuit: &Circuit, gate: GateId, rules: &RuleSet) -> Vec<bool> {
    let mut mask = vec![false; rules.len()];
    mask[0] = true;
    if let Some(pos) = circuit.position(gate) {
        for &i in rules.anchored_on(circuit.gate(pos).kind) {
            mask[i] = match_at_pos(circuit, pos, rules.get(i)).is_some();
        }
    }
    mask
}

/// Replace the matched region by the instantiated target.
///
/// Returns the new circuit and the ids of the inserted gates. Gates outside
/// the region keep their ids; new ids start at `circuit.next_id()`.
pub fn apply(circuit: &Circuit, rule: &Transformation, m: &Match) -> Result<(Circuit, Vec<GateId>)> {
    if m.circuit_digest != circuit.canonical_hash()
        || m.positions.len() != m.mapping.len()
        || m.positions.iter().zip(&m.mapping).any(|(&p, &id)| p >= circuit.len() || circuit.gate(p).id != id)
    {
        return Err(Error::StaleMatch);
    }
    let n = circuit.len();
    let mut in_region = vec![false; n];
    for &p in &m.positions {
        in_region[p] = true;
    }
    // Gates that must precede the inserted target: ancestors of the region.
    let mut ancestor = vec![false; n];
    let mut stack: Vec<usize> = m.positions.clone();
    while let Some(p) = stack.pop() {
        for q in circuit.pred_positions(p) {
            if !in_region[q] && !ancestor[q] {
                ancestor[q] = true;
                stack.push(q);
            }
        }
    }
    let mut next = circuit.next_id();
    let mut new_ids = Vec::with_capacity(rule.target.len());
    let mut gates: Vec<Gate> = Vec::with_capacity(n + rule.target.len());
    gates.extend((0..n).filter(|&p| ancestor[p]).map(|p| circuit.gate(p).clone()));
    for tg in rule.target.gates() {
        let qubits: Vec<usize> = tg.qubits().iter().map(|&q| m.qubit_map[q]).collect();
        let param = tg.param.map(|p| Param::Value(p.resolve(&m.bindings)));
        let id = GateId(next);
        next += 1;
        new_ids.push(id);
        gates.push(Gate::new(id, tg.kind, &qubits, param));
    }
    gates.extend((0..n).filter(|&p| !ancestor[p] && !in_region[p]).map(|p| circuit.gate(p).clone()));
    let out = Circuit::with_next_id(circuit.num_qubits(), gates, next)?;
    Ok((out, new_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{equivalent_up_to_phase, CircuitBuilder, GateSet, SymExpr};

    fn hh_rule() -> Transformation {
        let hh = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        Transformation::new(&hh, &Circuit::empty(1)).unwrap()
    }

    #[test]
    fn anchored_at_first_gate_only() {
        let c = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let r = hh_rule();
        let m = match_at(&c, GateId(0), &r).expect("match");
        assert_eq!(m.mapping, vec![GateId(0), GateId(1)]);
        assert!(match_at(&c, GateId(1), &r).is_none());
        let (out, new_ids) = apply(&c, &r, &m).unwrap();
        assert!(out.is_empty());
        assert!(new_ids.is_empty());
    }

    #[test]
    fn gate_in_between_blocks_match() {
        let cxcx = CircuitBuilder::new(2).cx(0, 1).cx(0, 1).build().unwrap();
        let r = Transformation::new(&cxcx, &Circuit::empty(2)).unwrap();
        let c = CircuitBuilder::new(2).cx(0, 1).z(1).cx(0, 1).build().unwrap();
        assert!(match_at(&c, GateId(0), &r).is_none());
        let ok = CircuitBuilder::new(3).h(2).cx(0, 1).cx(0, 1).h(2).build().unwrap();
        let m = match_at(&ok, GateId(1), &r).unwrap();
        let (out, _) = apply(&ok, &r, &m).unwrap();
        assert_eq!(out.len(), 2);
        assert!(equivalent_up_to_phase(&ok, &out, 4).unwrap());
    }

    #[test]
    fn nonconvex_region_rejected() {
        let src = CircuitBuilder::new(3).cx(0, 1).cx(0, 2).build().unwrap();
        let r = Transformation::new(&src, &src).unwrap();
        // Wire 0 links g0 directly to g2, but the path g0 -> g1 -> g2 leaves the region.
        let c = CircuitBuilder::new(3).cx(0, 1).cx(1, 2).cx(0, 2).build().unwrap();
        assert!(match_at(&c, GateId(0), &r).is_none());
        let c_ok = CircuitBuilder::new(3).cx(0, 1).cx(0, 2).cx(1, 2).build().unwrap();
        assert!(match_at(&c_ok, GateId(0), &r).is_some());
    }

    #[test]
    fn parameters_bind_exactly() {
        let src = CircuitBuilder::new(1)
            .rz_sym(0, SymExpr::symbol(0))
            .rz_sym(0, SymExpr::neg_symbol(0))
            .build()
            .unwrap();
        let r = Transformation::new(&src, &Circuit::empty(1)).unwrap();
        let yes = CircuitBuilder::new(1).rz(0, 0.3).rz(0, -0.3).build().unwrap();
        let no = CircuitBuilder::new(1).rz(0, 0.3).rz(0, -0.30000000000000004).build().unwrap();
        assert!(match_at(&yes, GateId(0), &r).is_some());
        assert!(match_at(&no, GateId(0), &r).is_none());
    }

    #[test]
    fn apply_substitutes_parameters_and_keeps_ids() {
        let src = CircuitBuilder::new(1)
            .rz_sym(0, SymExpr::symbol(0))
            .rz_sym(0, SymExpr::symbol(1))
            .build()
            .unwrap();
        let dst = CircuitBuilder::new(1).rz_sym(0, SymExpr::sum(0, 1)).build().unwrap();
        let r = Transformation::new(&src, &dst).unwrap();
        let c = CircuitBuilder::new(2).h(1).rz(0, 0.25).rz(0, 0.5).cx(0, 1).build().unwrap();
        let m = match_at(&c, GateId(1), &r).unwrap();
        let (out, new_ids) = apply(&c, &r, &m).unwrap();
        assert_eq!(new_ids, vec![GateId(4)]);
        assert_eq!(out.gate_by_id(GateId(4)).unwrap().param, Some(Param::Value(0.75)));
        assert!(out.contains(GateId(0)) && out.contains(GateId(3)));
        assert!(equivalent_up_to_phase(&c, &out, 4).unwrap());
    }

    #[test]
    fn stale_match_detected() {
        let c = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let r = hh_rule();
        let m = match_at(&c, GateId(0), &r).unwrap();
        let other = c.push(crate::circuit::GateKind::X, &[0], None).unwrap();
        assert!(matches!(apply(&other, &r, &m), Err(Error::StaleMatch)));
    }

    #[test]
    fn mask_shape_and_nop() {
        let set = RuleSet::new(GateSet::nam(), vec![hh_rule()]);
        let c = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        assert_eq!(valid_xfers(&c, GateId(0), &set), vec![true, true]);
        assert_eq!(valid_xfers(&c, GateId(1), &set), vec![true, false]);
        let lone = CircuitBuilder::new(1).x(0).build().unwrap();
        assert_eq!(valid_xfers(&lone, GateId(0), &set), vec![true, false]);
    }
}
