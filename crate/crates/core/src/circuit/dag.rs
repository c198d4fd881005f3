//! The circuit DAG.
//!
//! A circuit is stored as a list of gates in a topological order. Each gate
//! port `i` sits on qubit `qubits[i]`; the DAG edges are implied by wire
//! order and cached as per-port predecessor/successor positions. Values are
//! immutable once built: rewrites construct a fresh `Circuit`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use sha2::{Digest, Sha256};

use super::gate::{GateKind, Param};
use crate::error::{Error, Result};

/// Identifier of a gate, stable across rewrites of the same lineage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateId(pub u32);

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub id: GateId,
    pub kind: GateKind,
    qubits: [usize; 2],
    pub param: Option<Param>,
}

impl Gate {
    pub fn new(id: GateId, kind: GateKind, qubits: &[usize], param: Option<Param>) -> Gate {
        let mut q = [usize::MAX; 2];
        q[..qubits.len().min(2)].copy_from_slice(&qubits[..qubits.len().min(2)]);
        Gate { id, kind, qubits: q, param }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    /// Port index of `qubit` on this gate.
    pub fn port_of(&self, qubit: usize) -> Option<usize> {
        self.qubits().iter().position(|&q| q == qubit)
    }
}

/// One end of a wire edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Input(usize),
    Gate(GateId),
    Output(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: Endpoint,
    pub src_port: usize,
    pub dst: Endpoint,
    pub dst_port: usize,
}

/// A neighbour across a wire: gate position plus the port used on that gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub pos: usize,
    pub port: usize,
}

#[derive(Clone)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    next_id: u32,
    pos_of: Vec<u32>,
    preds: Vec<[Option<Link>; 2]>,
    succs: Vec<[Option<Link>; 2]>,
    digest: u64,
}

const NO_POS: u32 = u32::MAX;

impl Circuit {
    pub fn empty(num_qubits: usize) -> Circuit {
        Circuit::new(num_qubits, Vec::new()).expect("empty circuit is valid")
    }

    /// Build from gates listed in a valid topological (program) order.
    pub fn new(num_qubits: usize, gates: Vec<Gate>) -> Result<Circuit> {
        let next_id = gates.iter().map(|g| g.id.0 + 1).max().unwrap_or(0);
        Circuit::with_next_id(num_qubits, gates, next_id)
    }

    pub(crate) fn with_next_id(num_qubits: usize, gates: Vec<Gate>, next_id: u32) -> Result<Circuit> {
        let mut pos_of = vec![NO_POS; next_id as usize];
        let mut last: Vec<Option<Link>> = vec![None; num_qubits];
        let mut preds = Vec::with_capacity(gates.len());
        let mut succs = vec![[None, None]; gates.len()];
        for (pos, g) in gates.iter().enumerate() {
            if g.id.0 >= next_id || pos_of[g.id.0 as usize] != NO_POS {
                return Err(Error::InvalidCircuit(format!("duplicate or out-of-range gate id {}", g.id)));
            }
            pos_of[g.id.0 as usize] = pos as u32;
            if g.param.is_some() != (g.kind.param_count() == 1) {
                return Err(Error::InvalidCircuit(format!("gate {} has wrong parameter count", g.id)));
            }
            let qs = g.qubits();
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(Error::InvalidCircuit(format!("gate {} repeats qubit {}", g.id, qs[0])));
            }
            let mut p = [None, None];
            for (port, &q) in qs.iter().enumerate() {
                if q >= num_qubits {
                    return Err(Error::QubitOutOfRange { qubit: q, num_qubits });
                }
                p[port] = last[q];
                if let Some(prev) = last[q] {
                    succs[prev.pos][prev.port] = Some(Link { pos, port });
                }
                last[q] = Some(Link { pos, port });
            }
            preds.push(p);
        }
        let mut c = Circuit {
            num_qubits,
            gates,
            next_id,
            pos_of,
            preds,
            succs,
            digest: 0,
        };
        c.digest = c.compute_digest();
        Ok(c)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn gate(&self, pos: usize) -> &Gate {
        &self.gates[pos]
    }

    pub fn position(&self, id: GateId) -> Option<usize> {
        match self.pos_of.get(id.0 as usize) {
            Some(&p) if p != NO_POS => Some(p as usize),
            _ => None,
        }
    }

    pub fn contains(&self, id: GateId) -> bool {
        self.position(id).is_some()
    }

    pub fn gate_by_id(&self, id: GateId) -> Option<&Gate> {
        self.position(id).map(|p| &self.gates[p])
    }

    pub fn pred(&self, pos: usize, port: usize) -> Option<Link> {
        self.preds[pos][port]
    }

    pub fn succ(&self, pos: usize, port: usize) -> Option<Link> {
        self.succs[pos][port]
    }

    pub fn pred_positions(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        let a = self.gates[pos].arity();
        self.preds[pos][..a].iter().flatten().map(|l| l.pos)
    }

    pub fn succ_positions(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        let a = self.gates[pos].arity();
        self.succs[pos][..a].iter().flatten().map(|l| l.pos)
    }

    /// Undirected neighbours, one entry per wire edge (parallel edges repeat).
    pub fn neighbor_positions(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        self.pred_positions(pos).chain(self.succ_positions(pos))
    }

    /// Every wire edge, including boundary stubs.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        let mut first: Vec<Option<(usize, usize)>> = vec![None; self.num_qubits];
        let mut last: Vec<Option<(usize, usize)>> = vec![None; self.num_qubits];
        for (pos, g) in self.gates.iter().enumerate() {
            for (port, &q) in g.qubits().iter().enumerate() {
                if first[q].is_none() {
                    first[q] = Some((pos, port));
                }
                last[q] = Some((pos, port));
                if let Some(s) = self.succs[pos][port] {
                    out.push(Edge {
                        src: Endpoint::Gate(g.id),
                        src_port: port,
                        dst: Endpoint::Gate(self.gates[s.pos].id),
                        dst_port: s.port,
                    });
                }
            }
        }
        for q in 0..self.num_qubits {
            match (first[q], last[q]) {
                (Some((fp, fport)), Some((lp, lport))) => {
                    out.push(Edge {
                        src: Endpoint::Input(q),
                        src_port: 0,
                        dst: Endpoint::Gate(self.gates[fp].id),
                        dst_port: fport,
                    });
                    out.push(Edge {
                        src: Endpoint::Gate(self.gates[lp].id),
                        src_port: lport,
                        dst: Endpoint::Output(q),
                        dst_port: 0,
                    });
                }
                _ => out.push(Edge {
                    src: Endpoint::Input(q),
                    src_port: 0,
                    dst: Endpoint::Output(q),
                    dst_port: 0,
                }),
            }
        }
        out.sort();
        out
    }

    /// Gates touching each qubit, in wire order.
    pub fn wire(&self, qubit: usize) -> Vec<usize> {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.qubits().contains(&qubit))
            .map(|(p, _)| p)
            .collect()
    }

    /// Positions in canonical topological order: among ready gates, the one
    /// on the smallest qubit wire goes first (ready gates never share a wire,
    /// so this is a total order).
    pub fn canonical_order(&self) -> Vec<usize> {
        let n = self.gates.len();
        let mut indeg: Vec<u8> = (0..n).map(|p| self.pred_positions(p).count() as u8).collect();
        let mut ready: BTreeSet<(usize, usize)> = BTreeSet::new();
        for p in 0..n {
            if indeg[p] == 0 {
                ready.insert((min_qubit(&self.gates[p]), p));
            }
        }
        let mut order = Vec::with_capacity(n);
        while let Some(&first) = ready.iter().next() {
            ready.remove(&first);
            let p = first.1;
            order.push(p);
            for s in self.succ_positions(p).collect::<Vec<_>>() {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert((min_qubit(&self.gates[s]), s));
                }
            }
        }
        order
    }

    /// 64-bit digest of the circuit content in canonical order. Equal for
    /// circuits with the same DAG, labels, and parameters regardless of gate
    /// ids or listing order.
    pub fn canonical_hash(&self) -> u64 {
        self.digest
    }

    fn compute_digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.num_qubits as u64).to_le_bytes());
        for p in self.canonical_order() {
            let g = &self.gates[p];
            h.update([g.kind.index() as u8]);
            for &q in g.qubits() {
                h.update((q as u32).to_le_bytes());
            }
            if let Some(param) = &g.param {
                let (tag, bits) = param.hash_key();
                h.update([tag]);
                h.update(bits.to_le_bytes());
            }
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 output has 32 bytes"))
    }

    /// Copy with gates listed in canonical order.
    pub fn canonicalized(&self) -> Circuit {
        let gates = self.canonical_order().into_iter().map(|p| self.gates[p].clone()).collect();
        Circuit::with_next_id(self.num_qubits, gates, self.next_id).expect("reordering keeps validity")
    }

    /// Same gates with ids renumbered 0..n in canonical order.
    pub fn renumbered(&self) -> Circuit {
        let gates = self
            .canonical_order()
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut g = self.gates[p].clone();
                g.id = GateId(i as u32);
                g
            })
            .collect();
        Circuit::new(self.num_qubits, gates).expect("renumbering keeps validity")
    }

    pub fn has_symbolic_params(&self) -> bool {
        self.gates.iter().any(|g| matches!(g.param, Some(Param::Expr(_))))
    }

    /// Largest symbol index used plus one.
    pub fn symbol_count(&self) -> usize {
        self.gates
            .iter()
            .filter_map(|g| match &g.param {
                Some(Param::Expr(e)) => e.symbols().max().map(|m| m + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Qubits touched by at least one gate.
    pub fn used_qubits(&self) -> Vec<usize> {
        let mut used = vec![false; self.num_qubits];
        for g in &self.gates {
            for &q in g.qubits() {
                used[q] = true;
            }
        }
        (0..self.num_qubits).filter(|&q| used[q]).collect()
    }

    /// Positions whose gates have no predecessor gate.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.gates.len()).filter(|&p| self.pred_positions(p).next().is_none()).collect()
    }

    /// Whether the gate graph (ignoring direction) is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.gates.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(p) = queue.pop_front() {
            for q in self.neighbor_positions(p).collect::<Vec<_>>() {
                if !seen[q] {
                    seen[q] = true;
                    count += 1;
                    queue.push_back(q);
                }
            }
        }
        count == n
    }

    /// Relabel qubits: gate on `q` moves to `map[q]`.
    pub fn map_qubits(&self, map: &[usize], num_qubits: usize) -> Circuit {
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let qs: Vec<usize> = g.qubits().iter().map(|&q| map[q]).collect();
                Gate::new(g.id, g.kind, &qs, g.param)
            })
            .collect();
        Circuit::with_next_id(num_qubits, gates, self.next_id).expect("qubit relabeling keeps validity")
    }

    /// Append a gate, returning the new circuit. Convenience for builders and tests.
    pub fn push(&self, kind: GateKind, qubits: &[usize], param: Option<Param>) -> Result<Circuit> {
        let mut gates = self.gates.clone();
        gates.push(Gate::new(GateId(self.next_id), kind, qubits, param));
        Circuit::with_next_id(self.num_qubits, gates, self.next_id + 1)
    }
}

fn min_qubit(g: &Gate) -> usize {
    g.qubits().iter().copied().min().unwrap_or(usize::MAX)
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.num_qubits == other.num_qubits && self.gates == other.gates
    }
}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Circuit[{}q]{{", self.num_qubits)?;
        for (i, g) in self.gates.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}", g.kind)?;
            if let Some(p) = &g.param {
                match p {
                    Param::Value(v) => write!(f, "({v})")?,
                    Param::Expr(e) => write!(f, "({e})")?,
                }
            }
            for q in g.qubits() {
                write!(f, " {q}")?;
            }
        }
        f.write_str("}")
    }
}

/// Small fluent builder used by tests and generators.
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl CircuitBuilder {
    pub fn new(num_qubits: usize) -> Self {
        CircuitBuilder { num_qubits, gates: Vec::new() }
    }

    pub fn gate(mut self, kind: GateKind, qubits: &[usize], param: Option<Param>) -> Self {
        let id = GateId(self.gates.len() as u32);
        self.gates.push(Gate::new(id, kind, qubits, param));
        self
    }

    pub fn h(self, q: usize) -> Self {
        self.gate(GateKind::H, &[q], None)
    }

    pub fn x(self, q: usize) -> Self {
        self.gate(GateKind::X, &[q], None)
    }

    pub fn z(self, q: usize) -> Self {
        self.gate(GateKind::Z, &[q], None)
    }

    pub fn sx(self, q: usize) -> Self {
        self.gate(GateKind::Sx, &[q], None)
    }

    pub fn rz(self, q: usize, theta: f64) -> Self {
        self.gate(GateKind::Rz, &[q], Some(Param::Value(theta)))
    }

    pub fn rz_sym(self, q: usize, expr: super::gate::SymExpr) -> Self {
        self.gate(GateKind::Rz, &[q], Some(Param::Expr(expr)))
    }

    pub fn cx(self, control: usize, target: usize) -> Self {
        self.gate(GateKind::Cx, &[control, target], None)
    }

    pub fn build(self) -> Result<Circuit> {
        Circuit::new(self.num_qubits, self.gates)
    }
}
