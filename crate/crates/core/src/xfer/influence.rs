//! Gates whose value estimates may change after a rewrite.

use std::collections::BTreeSet;

use crate::circuit::{Circuit, GateId};
use crate::error::{Error, Result};

/// Positions reachable from `start` by following predecessor edges at most
/// `hops` times (including `start` itself).
fn pred_closure(c: &Circuit, start: &[usize], hops: usize, out: &mut BTreeSet<usize>) {
    let mut frontier: Vec<usize> = start.to_vec();
    out.extend(frontier.iter().copied());
    for _ in 0..hops {
        let mut next = Vec::new();
        for &p in &frontier {
            for q in c.pred_positions(p) {
                if out.insert(q) {
                    next.push(q);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
}

/// New gates plus their `hops`-step directed predecessors in `after`.
///
/// Two cases go beyond the plain definition so the set is never empty and
/// covers every site whose neighbourhood changed:
/// - a wire touched by the removed gates but by no new gate: its surviving
///   boundary predecessor is included, with `hops - 1` further predecessors;
/// - a pure deletion: the boundary successors of the removed region and
///   their `hops`-step predecessors are included.
///
/// If the set is still empty, the surviving gate nearest to the removed region
/// on one of its wires is returned, or else the first gate of `after`. The
/// result is empty only when `after` has no gates.
pub fn influenced_gates(before: &Circuit, after: &Circuit, new_ids: &[GateId], hops: usize) -> Result<Vec<GateId>> {
    let mut new_pos = Vec::with_capacity(new_ids.len());
    for &id in new_ids {
        new_pos.push(after.position(id).ok_or(Error::GateNotFound(id))?);
    }
    let mut set = BTreeSet::new();
    pred_closure(after, &new_pos, hops, &mut set);

    let removed: Vec<usize> = (0..before.len()).filter(|&p| !after.contains(before.gate(p).id)).collect();
    if !removed.is_empty() && (new_ids.is_empty() || hops > 0) {
        let mut covered = vec![false; after.num_qubits()];
        for &p in &new_pos {
            for &q in after.gate(p).qubits() {
                covered[q] = true;
            }
        }
        let is_removed = |p: usize| !after.contains(before.gate(p).id);
        let mut boundary_preds = Vec::new();
        let mut boundary_succs = Vec::new();
        for &p in &removed {
            let g = before.gate(p);
            for (port, &q) in g.qubits().iter().enumerate() {
                if covered[q] {
                    continue;
                }
                if let Some(l) = before.pred(p, port) {
                    if !is_removed(l.pos) {
                        boundary_preds.push(after.position(before.gate(l.pos).id).expect("survivor"));
                    }
                }
                if let Some(l) = before.succ(p, port) {
                    if !is_removed(l.pos) {
                        boundary_succs.push(after.position(before.gate(l.pos).id).expect("survivor"));
                    }
                }
            }
        }
        if hops > 0 {
            pred_closure(after, &boundary_preds, hops - 1, &mut set);
        }
        if new_ids.is_empty() {
            pred_closure(after, &boundary_succs, hops, &mut set);
        }
        if set.is_empty() {
            if let Some(p) = nearest_survivor(before, after, &removed) {
                set.insert(p);
            }
        }
    }
    if set.is_empty() && !after.is_empty() {
        set.insert(0);
    }
    Ok(set.into_iter().map(|p| after.gate(p).id).collect())
}

/// Surviving gate closest (in wire order) to the removed region.
fn nearest_survivor(before: &Circuit, after: &Circuit, removed: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &p in removed {
        for &q in before.gate(p).qubits() {
            for s in before.wire(q) {
                let id = before.gate(s).id;
                if let Some(ap) = after.position(id) {
                    let d = s.abs_diff(p);
                    if best.is_none_or(|(bd, bp)| (d, ap) < (bd, bp)) {
                        best = Some((d, ap));
                    }
                }
            }
        }
    }
    best.map(|(_, p)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;
    use crate::xfer::{apply, match_at, Transformation};

    #[test]
    fn direction_rule_on_a_chain() {
        // a -> b -> NEW -> c on one wire; NEW replaces an H H pair.
        let c = CircuitBuilder::new(1).z(0).x(0).h(0).h(0).z(0).build().unwrap();
        let src = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let dst = CircuitBuilder::new(1).h(0).build().unwrap();
        // Not an equivalence, but influence only needs the structure.
        let r = Transformation::new(&src, &dst).unwrap();
        let m = match_at(&c, GateId(2), &r).unwrap();
        let (after, new_ids) = apply(&c, &r, &m).unwrap();
        assert_eq!(influenced_gates(&c, &after, &new_ids, 0).unwrap(), new_ids);
        let one = influenced_gates(&c, &after, &new_ids, 1).unwrap();
        assert_eq!(one, vec![GateId(1), new_ids[0]]);
        assert!(!one.contains(&GateId(4)));
    }

    #[test]
    fn pure_deletion_uses_boundary_successors() {
        let c = CircuitBuilder::new(1).x(0).h(0).h(0).z(0).build().unwrap();
        let src = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let r = Transformation::new(&src, &Circuit::empty(1)).unwrap();
        let m = match_at(&c, GateId(1), &r).unwrap();
        let (after, new_ids) = apply(&c, &r, &m).unwrap();
        let set = influenced_gates(&c, &after, &new_ids, 1).unwrap();
        assert_eq!(set, vec![GateId(0), GateId(3)]);
        let zero = influenced_gates(&c, &after, &new_ids, 0).unwrap();
        assert_eq!(zero, vec![GateId(3)]);
    }

    #[test]
    fn deletion_at_the_end_falls_back() {
        let c = CircuitBuilder::new(2).x(1).h(0).h(0).build().unwrap();
        let src = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let r = Transformation::new(&src, &Circuit::empty(1)).unwrap();
        let m = match_at(&c, GateId(1), &r).unwrap();
        let (after, new_ids) = apply(&c, &r, &m).unwrap();
        // No gate survives on wire 0, so the first remaining gate stands in.
        assert_eq!(influenced_gates(&c, &after, &new_ids, 1).unwrap(), vec![GateId(0)]);
        let empty = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let m = match_at(&empty, GateId(0), &r).unwrap();
        let (after, new_ids) = apply(&empty, &r, &m).unwrap();
        assert!(influenced_gates(&empty, &after, &new_ids, 1).unwrap().is_empty());
    }

    #[test]
    fn unknown_ids_rejected() {
        let c = CircuitBuilder::new(1).x(0).build().unwrap();
        assert!(influenced_gates(&c, &c, &[GateId(7)], 1).is_err());
    }
}
