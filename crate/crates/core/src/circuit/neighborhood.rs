//! Undirected k-hop neighbourhoods of a gate.

use std::collections::VecDeque;

use super::dag::{Circuit, Edge, Endpoint, Gate, GateId};
use crate::error::{Error, Result};

/// A subgraph of a circuit around one gate.
///
/// `edges` holds every wire edge between member gates; edges leaving the
/// fragment are kept as dangling stubs with an `Input(q)` source or an
/// `Output(q)` destination on the severed wire `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub center: GateId,
    /// Member gates in the circuit's stored topological order.
    pub gates: Vec<Gate>,
    /// Undirected hop distance of each member from the center.
    pub distance: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl Fragment {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn ids(&self) -> Vec<GateId> {
        self.gates.iter().map(|g| g.id).collect()
    }

    pub fn index_of(&self, id: GateId) -> Option<usize> {
        self.gates.iter().position(|g| g.id == id)
    }

    /// Edges with both ends on member gates.
    pub fn internal_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges
            .iter()
            .filter(|e| matches!((e.src, e.dst), (Endpoint::Gate(_), Endpoint::Gate(_))))
    }
}

/// Positions within undirected distance `k` of `pos`, paired with their
/// distance, sorted by position.
pub fn k_hop_gates(circuit: &Circuit, pos: usize, k: usize) -> Vec<(usize, usize)> {
    let mut dist = vec![usize::MAX; circuit.len()];
    dist[pos] = 0;
    let mut queue = VecDeque::from([pos]);
    while let Some(p) = queue.pop_front() {
        if dist[p] == k {
            continue;
        }
        for q in circuit.neighbor_positions(p).collect::<Vec<_>>() {
            if dist[q] == usize::MAX {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    dist.iter().enumerate().filter(|(_, &d)| d != usize::MAX).map(|(p, &d)| (p, d)).collect()
}

pub fn k_hop_neighborhood(circuit: &Circuit, gate: GateId, k: usize) -> Result<Fragment> {
    let pos = circuit.position(gate).ok_or(Error::GateNotFound(gate))?;
    let members = k_hop_gates(circuit, pos, k);
    let mut inside = vec![false; circuit.len()];
    for &(p, _) in &members {
        inside[p] = true;
    }
    let mut edges = Vec::new();
    for &(p, _) in &members {
        let g = circuit.gate(p);
        for (port, &q) in g.qubits().iter().enumerate() {
            match circuit.pred(p, port) {
                Some(l) if inside[l.pos] => edges.push(Edge {
                    src: Endpoint::Gate(circuit.gate(l.pos).id),
                    src_port: l.port,
                    dst: Endpoint::Gate(g.id),
                    dst_port: port,
                }),
                _ => edges.push(Edge { src: Endpoint::Input(q), src_port: 0, dst: Endpoint::Gate(g.id), dst_port: port }),
            }
            match circuit.succ(p, port) {
                Some(l) if inside[l.pos] => {}
                _ => edges.push(Edge { src: Endpoint::Gate(g.id), src_port: port, dst: Endpoint::Output(q), dst_port: 0 }),
            }
        }
    }
    edges.sort();
    Ok(Fragment {
        center: gate,
        gates: members.iter().map(|&(p, _)| circuit.gate(p).clone()).collect(),
        distance: members.iter().map(|&(_, d)| d).collect(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;

    fn chain() -> Circuit {
        CircuitBuilder::new(1).h(0).x(0).h(0).x(0).build().unwrap()
    }

    #[test]
    fn zero_hops_is_the_gate() {
        let c = chain();
        let f = k_hop_neighborhood(&c, GateId(1), 0).unwrap();
        assert_eq!(f.ids(), vec![GateId(1)]);
        assert_eq!(f.internal_edges().count(), 0);
        assert_eq!(f.edges.len(), 2);
    }

    #[test]
    fn chain_one_hop() {
        let c = chain();
        let f = k_hop_neighborhood(&c, GateId(1), 1).unwrap();
        assert_eq!(f.ids(), vec![GateId(0), GateId(1), GateId(2)]);
        assert_eq!(f.distance, vec![1, 0, 1]);
        assert_eq!(f.internal_edges().count(), 2);
    }

    #[test]
    fn saturates_to_whole_circuit() {
        let c = CircuitBuilder::new(3).h(0).cx(0, 1).cx(1, 2).x(2).h(0).build().unwrap();
        let f = k_hop_neighborhood(&c, GateId(0), 10).unwrap();
        assert_eq!(f.len(), c.len());
        let internal: Vec<Edge> = f.internal_edges().copied().collect();
        let full: Vec<Edge> = c
            .edges()
            .into_iter()
            .filter(|e| matches!((e.src, e.dst), (Endpoint::Gate(_), Endpoint::Gate(_))))
            .collect();
        assert_eq!(internal, full);
    }

    #[test]
    fn missing_gate() {
        assert!(matches!(k_hop_neighborhood(&chain(), GateId(9), 1), Err(Error::GateNotFound(_))));
    }
}
