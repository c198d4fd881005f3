use thiserror::Error;

use crate::circuit::GateId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown gate `{name}` at {line}:{col}")]
    UnknownGate { name: String, line: usize, col: usize },
    #[error("qubit {qubit} out of range for {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("missing error rate for gate type `{0}`")]
    MissingErrorRate(String),
    #[error("{num_qubits} qubits exceeds simulation limit of {limit}")]
    QubitLimit { num_qubits: usize, limit: usize },
    #[error("circuit has symbolic parameters")]
    SymbolicParameter,
    #[error("dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error("gate {0} is not in the circuit")]
    GateNotFound(GateId),
    #[error("match is stale for this circuit")]
    StaleMatch,
    #[error("enumeration budget of {0} candidates exceeded")]
    EnumerationBudget(usize),
    #[error("malformed rule file at line {line}: {msg}")]
    RuleFormat { line: usize, msg: String },
    #[error("rule {index} failed verification (residual {residual:.3e})")]
    RuleVerification { index: usize, residual: f64 },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("gate type `{0}` has no embedding")]
    UnsupportedGate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mask has no valid entry")]
    EmptyMask,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("node budget of {0} states exhausted")]
    NodeBudget(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
