//! Circuit IR, QASM I/O, cost metrics, and the unitary oracle.

mod cost;
mod dag;
mod gate;
mod neighborhood;
mod qasm;
mod sim;

pub use cost::{cost, fidelity, CostMetric, ErrorModel};
pub use dag::{Circuit, CircuitBuilder, Edge, Endpoint, Gate, GateId, Link};
pub use gate::{GateKind, GateSet, Param, SymExpr, MAX_SYMBOLS};
pub use neighborhood::{k_hop_gates, k_hop_neighborhood, Fragment};
pub use qasm::{emit_qasm, parse_qasm};
pub(crate) use qasm::{emit_gate_list, parse_gate_list};
pub use sim::{
    equivalent_up_to_phase, param_samples, phase_residual, unitary, unitary_with, Matrix,
    DEFAULT_PARAM_SAMPLES, DEFAULT_QUBIT_LIMIT, EQUIV_TOL,
};
