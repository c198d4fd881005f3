//! Cost metrics and the product fidelity model.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::dag::Circuit;
use super::gate::GateKind;
use crate::error::{Error, Result};

/// Per-gate-type error rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorModel {
    rates: BTreeMap<GateKind, f64>,
}

impl Default for ErrorModel {
    /// Calibration rates for the IBM gate set.
    fn default() -> Self {
        let rates = BTreeMap::from([
            (GateKind::Cx, 1.214e-2),
            (GateKind::Rz, 0.0),
            (GateKind::X, 2.77e-4),
            (GateKind::Sx, 2.77e-4),
        ]);
        ErrorModel { rates }
    }
}

impl ErrorModel {
    pub fn new(rates: impl IntoIterator<Item = (GateKind, f64)>) -> Result<ErrorModel> {
        let rates: BTreeMap<_, _> = rates.into_iter().collect();
        for (k, r) in &rates {
            if !(0.0..=1.0).contains(r) {
                return Err(Error::Config(format!("error rate for `{k}` must be in [0, 1], got {r}")));
            }
        }
        Ok(ErrorModel { rates })
    }

    pub fn rate(&self, kind: GateKind) -> Option<f64> {
        self.rates.get(&kind).copied()
    }

    /// Parse `gate_name = rate` lines (`#` comments allowed).
    pub fn parse(text: &str) -> Result<ErrorModel> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut rates = Vec::new();
        for (name, value) in table {
            let kind = GateKind::from_name(&name).ok_or_else(|| Error::Config(format!("unknown gate `{name}`")))?;
            let rate = match value {
                toml::Value::Float(f) => f,
                toml::Value::Integer(i) => i as f64,
                other => return Err(Error::Config(format!("rate for `{name}` is not a number: {other}"))),
            };
            rates.push((kind, rate));
        }
        ErrorModel::new(rates)
    }

    pub fn load(path: &Path) -> Result<ErrorModel> {
        ErrorModel::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostMetric {
    TotalGates,
    CnotCount,
    Depth,
    Fidelity(ErrorModel),
}

impl CostMetric {
    pub fn name(&self) -> &'static str {
        match self {
            CostMetric::TotalGates => "total",
            CostMetric::CnotCount => "cnot",
            CostMetric::Depth => "depth",
            CostMetric::Fidelity(_) => "fidelity",
        }
    }

    /// Scalar to minimize. Fidelity is turned into `-ln(fidelity)`.
    pub fn objective(&self, circuit: &Circuit) -> Result<f64> {
        let v = cost(circuit, self)?;
        Ok(match self {
            CostMetric::Fidelity(_) => -v.ln(),
            _ => v,
        })
    }
}

impl FromStr for CostMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total" => Ok(CostMetric::TotalGates),
            "cnot" => Ok(CostMetric::CnotCount),
            "depth" => Ok(CostMetric::Depth),
            "fidelity" => Ok(CostMetric::Fidelity(ErrorModel::default())),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Evaluate a metric. Fidelity is the success probability `prod(1 - e(g))`.
pub fn cost(circuit: &Circuit, metric: &CostMetric) -> Result<f64> {
    Ok(match metric {
        CostMetric::TotalGates => circuit.len() as f64,
        CostMetric::CnotCount => circuit.gates().iter().filter(|g| g.arity() == 2).count() as f64,
        CostMetric::Depth => depth(circuit) as f64,
        CostMetric::Fidelity(model) => fidelity(circuit, model)?,
    })
}

pub fn fidelity(circuit: &Circuit, model: &ErrorModel) -> Result<f64> {
    let mut f = 1.0;
    for g in circuit.gates() {
        let e = model.rate(g.kind).ok_or_else(|| Error::MissingErrorRate(g.kind.name().to_string()))?;
        f *= 1.0 - e;
    }
    Ok(f)
}

fn depth(circuit: &Circuit) -> usize {
    let mut level = vec![0usize; circuit.len()];
    let mut best = 0;
    for pos in 0..circuit.len() {
        let l = circuit.pred_positions(pos).map(|p| level[p]).max().unwrap_or(0) + 1;
        level[pos] = l;
        best = best.max(l);
    }
    best
}
