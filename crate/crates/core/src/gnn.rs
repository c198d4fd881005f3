//! Message-passing gate embeddings.
//!
//! Layer `k` computes, for every gate `g`,
//! `a_g = Σ_edges relu(W_a · [h_u, e_ug] + b_a)` over the wire edges incident
//! to `g` (one term per edge, so parallel edges count twice), then
//! `h_g = relu(W_u · [h_g, a_g])`. The initial `h` is a learned per-type
//! vector. After `K` layers a gate's vector depends only on its `K`-hop
//! neighbourhood, which [`Gnn::embed_fragment`] exploits.

use rand_chacha::ChaCha8Rng;

use crate::circuit::{k_hop_neighborhood, Circuit, Endpoint, GateId, GateKind, GateSet};
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tape, Tensor, Var};

/// Edge feature layout: `[dir_in, dir_out, src_port (2), dst_port (2)]`.
pub const EDGE_FEATURES: usize = 6;

#[derive(Clone, Debug)]
struct Layer {
    wa: ParamId,
    ba: ParamId,
    wu: ParamId,
}

/// Parameter handles of the network; the tensors live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Gnn {
    pub layers: usize,
    pub dim: usize,
    kinds: Vec<GateKind>,
    table: ParamId,
    layer_params: Vec<Layer>,
}

/// A gate graph ready for the network: node types plus directed wire edges
/// `(src, src_port, dst, dst_port)` between node indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GateGraph {
    pub kinds: Vec<GateKind>,
    pub ids: Vec<GateId>,
    pub edges: Vec<(usize, usize, usize, usize)>,
}

impl GateGraph {
    /// Nodes in the circuit's stored order.
    pub fn from_circuit(c: &Circuit) -> GateGraph {
        let mut edges = Vec::new();
        for p in 0..c.len() {
            for port in 0..c.gate(p).arity() {
                if let Some(s) = c.succ(p, port) {
                    edges.push((p, port, s.pos, s.port));
                }
            }
        }
        GateGraph { kinds: c.gates().iter().map(|g| g.kind).collect(), ids: c.gates().iter().map(|g| g.id).collect(), edges }
    }

    /// The `k`-hop neighbourhood of `gate`; nodes in the fragment's order.
    pub fn around(c: &Circuit, gate: GateId, k: usize) -> Result<GateGraph> {
        let f = k_hop_neighborhood(c, gate, k)?;
        let ids = f.ids();
        let index = |id: GateId| ids.iter().position(|&x| x == id).expect("fragment member");
        let edges = f
            .internal_edges()
            .map(|e| match (e.src, e.dst) {
                (Endpoint::Gate(a), Endpoint::Gate(b)) => (index(a), e.src_port, index(b), e.dst_port),
                _ => unreachable!("internal edge"),
            })
            .collect();
        Ok(GateGraph { kinds: f.gates.iter().map(|g| g.kind).collect(), ids, edges })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn index_of(&self, id: GateId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Message list `(from, to, feature)`: every wire edge delivers one
    /// message to each of its two ends.
    fn messages(&self) -> (Vec<usize>, Vec<usize>, Tensor) {
        let mut from = Vec::with_capacity(2 * self.edges.len());
        let mut to = Vec::with_capacity(2 * self.edges.len());
        let mut feat = Vec::with_capacity(2 * self.edges.len() * EDGE_FEATURES);
        for &(s, sp, d, dp) in &self.edges {
            for (u, v, dir_in) in [(s, d, true), (d, s, false)] {
                from.push(u);
                to.push(v);
                let mut e = [0.0; EDGE_FEATURES];
                e[if dir_in { 0 } else { 1 }] = 1.0;
                e[2 + sp] = 1.0;
                e[4 + dp] = 1.0;
                feat.extend_from_slice(&e);
            }
        }
        let n = from.len();
        (from, to, Tensor { shape: vec![n, EDGE_FEATURES], data: feat })
    }
}

impl Gnn {
    /// Register a `layers`-deep, `dim`-wide network over `gate_set` in `store`.
    pub fn new(store: &mut ParamStore, gate_set: &GateSet, layers: usize, dim: usize, rng: &mut ChaCha8Rng) -> Gnn {
        let kinds = gate_set.kinds.clone();
        let table = store.add_uniform("gnn.type_embedding", &[kinds.len(), dim], dim, rng);
        let layer_params = (1..=layers)
            .map(|k| Layer {
                wa: store.add_uniform(&format!("gnn.{k}.w_a"), &[dim + EDGE_FEATURES, dim], dim + EDGE_FEATURES, rng),
                ba: store.add_uniform(&format!("gnn.{k}.b_a"), &[dim], dim + EDGE_FEATURES, rng),
                wu: store.add_uniform(&format!("gnn.{k}.w_u"), &[2 * dim, dim], 2 * dim, rng),
            })
            .collect();
        Gnn { layers, dim, kinds, table, layer_params }
    }

    fn kind_row(&self, kind: GateKind) -> Result<usize> {
        self.kinds.iter().position(|&k| k == kind).ok_or_else(|| Error::UnsupportedGate(kind.name().to_string()))
    }

    /// Per-node embeddings `[n, dim]` on `tape`, rows in the graph's node order.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, graph: &GateGraph) -> Result<Var> {
        let rows: Vec<usize> = graph.kinds.iter().map(|&k| self.kind_row(k)).collect::<Result<_>>()?;
        let table = tape.param(store, self.table);
        let mut h = tape.gather_rows(table, &rows)?;
        if self.layers == 0 || graph.is_empty() {
            return Ok(h);
        }
        let n = graph.len();
        let (from, to, feat) = graph.messages();
        let feat = tape.constant(feat);
        for layer in &self.layer_params {
            let (wa, ba, wu) = (tape.param(store, layer.wa), tape.param(store, layer.ba), tape.param(store, layer.wu));
            let agg = if from.is_empty() {
                tape.constant(Tensor::zeros(&[n, self.dim]))
            } else {
                let hu = tape.gather_rows(h, &from)?;
                let x = tape.concat(&[hu, feat])?;
                let m = tape.matmul(x, wa)?;
                let m = tape.add(m, ba)?;
                let m = tape.relu(m);
                tape.scatter_add_rows(m, &to, n)?
            };
            let x = tape.concat(&[h, agg])?;
            let x = tape.matmul(x, wu)?;
            h = tape.relu(x);
        }
        Ok(h)
    }

    /// Embeddings of every gate, rows in the circuit's stored order.
    pub fn embed_positions(&self, store: &ParamStore, c: &Circuit) -> Result<Tensor> {
        let mut tape = Tape::new();
        let h = self.forward(&mut tape, store, &GateGraph::from_circuit(c))?;
        Ok(tape.value(h).clone())
    }

    /// Embeddings of every gate, rows in canonical gate order.
    pub fn embed(&self, store: &ParamStore, c: &Circuit) -> Result<Tensor> {
        let h = self.embed_positions(store, c)?;
        let order = c.canonical_order();
        let mut data = Vec::with_capacity(h.len());
        for p in order {
            data.extend_from_slice(h.row(p));
        }
        Tensor::matrix(c.len(), self.dim, data)
    }

    /// One gate's embedding computed on its `K`-hop neighbourhood only, as a
    /// `[1, dim]` row on `tape`.
    pub fn embed_fragment_on(&self, tape: &mut Tape, store: &ParamStore, c: &Circuit, gate: GateId) -> Result<Var> {
        let graph = GateGraph::around(c, gate, self.layers)?;
        let h = self.forward(tape, store, &graph)?;
        let row = graph.index_of(gate).expect("center is a member");
        tape.gather_rows(h, &[row])
    }

    pub fn embed_fragment(&self, store: &ParamStore, c: &Circuit, gate: GateId) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = self.embed_fragment_on(&mut tape, store, c, gate)?;
        Ok(tape.value(v).data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;
    use crate::nn::init_rng;

    fn net(layers: usize) -> (ParamStore, Gnn) {
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, &GateSet::nam(), layers, 8, &mut init_rng(5));
        (store, gnn)
    }

    #[test]
    fn isolated_gate_uses_update_path_only() {
        let (store, gnn) = net(2);
        let c = CircuitBuilder::new(1).h(0).build().unwrap();
        let h = gnn.embed(&store, &c).unwrap();
        // With no neighbours: h1 = relu(W_u [h0, 0]) and so on.
        let mut x = store.value(gnn.table).row(gnn.kind_row(GateKind::H).unwrap()).to_vec();
        for l in &gnn.layer_params {
            let wu = store.value(l.wu);
            x = (0..8).map(|j| (0..8).map(|i| x[i] * wu.get(i, j)).sum::<f64>().max(0.0)).collect();
        }
        for (a, b) in h.data.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fragment_matches_full_embedding() {
        let (store, gnn) = net(3);
        let c = CircuitBuilder::new(3).h(0).cx(0, 1).rz(1, 0.3).cx(1, 2).x(2).cx(0, 2).h(1).cx(1, 0).build().unwrap();
        let full = gnn.embed_positions(&store, &c).unwrap();
        for p in 0..c.len() {
            let f = gnn.embed_fragment(&store, &c, c.gate(p).id).unwrap();
            for (a, b) in f.iter().zip(full.row(p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_layers_is_type_only() {
        let (store, gnn) = net(0);
        let c = CircuitBuilder::new(2).h(0).cx(0, 1).h(1).build().unwrap();
        let h = gnn.embed_positions(&store, &c).unwrap();
        assert_eq!(h.row(0), h.row(2));
    }

    #[test]
    fn parallel_edges_count_twice() {
        let g = GateGraph::from_circuit(&CircuitBuilder::new(2).cx(0, 1).cx(0, 1).build().unwrap());
        assert_eq!(g.edges.len(), 2);
        let (from, _, feat) = g.messages();
        assert_eq!(from.len(), 4);
        assert_eq!(feat.row(0), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(feat.row(1), &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn unknown_type_rejected() {
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, &GateSet::custom(&[GateKind::H]), 1, 4, &mut init_rng(1));
        let c = CircuitBuilder::new(1).x(0).build().unwrap();
        assert!(matches!(gnn.embed(&store, &c), Err(Error::UnsupportedGate(_))));
    }
}
