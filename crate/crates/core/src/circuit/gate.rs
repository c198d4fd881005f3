//! Gate types, parameters, and the two registered gate sets.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Maximum number of distinct symbols a parametric pattern may use.
pub const MAX_SYMBOLS: usize = 4;

/// The gate kinds understood by the IR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Z,
    Sx,
    Rz,
    Cx,
}

impl GateKind {
    pub const ALL: [GateKind; 6] = [
        GateKind::H,
        GateKind::X,
        GateKind::Z,
        GateKind::Sx,
        GateKind::Rz,
        GateKind::Cx,
    ];

    /// Lower-case QASM name.
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::Sx => "sx",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        match name {
            "h" => Some(GateKind::H),
            "x" => Some(GateKind::X),
            "z" => Some(GateKind::Z),
            "sx" => Some(GateKind::Sx),
            "rz" => Some(GateKind::Rz),
            "cx" | "cnot" => Some(GateKind::Cx),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx => 2,
            _ => 1,
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            GateKind::Rz => 1,
            _ => 0,
        }
    }

    /// Dense index used by embedding tables.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Row-major `2^arity x 2^arity` matrix. For two-qubit gates port 0 is the
    /// most significant bit of the local index (control for CX).
    pub fn unitary(self, theta: Option<f64>) -> Vec<Complex64> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        match self {
            GateKind::H => {
                let s = c(FRAC_1_SQRT_2, 0.0);
                vec![s, s, s, -s]
            }
            GateKind::X => vec![z, o, o, z],
            GateKind::Z => vec![o, z, z, -o],
            GateKind::Sx => {
                let a = c(0.5, 0.5);
                let b = c(0.5, -0.5);
                vec![a, b, b, a]
            }
            GateKind::Rz => {
                let t = theta.unwrap_or(0.0);
                vec![Complex64::from_polar(1.0, -t / 2.0), z, z, Complex64::from_polar(1.0, t / 2.0)]
            }
            GateKind::Cx => vec![
                o, z, z, z, //
                z, o, z, z, //
                z, z, z, o, //
                z, z, o, z,
            ],
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Integer linear combination of symbols `t0..t3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymExpr {
    pub coeffs: [i8; MAX_SYMBOLS],
}

impl SymExpr {
    pub fn symbol(i: usize) -> SymExpr {
        let mut coeffs = [0; MAX_SYMBOLS];
        coeffs[i] = 1;
        SymExpr { coeffs }
    }

    pub fn neg_symbol(i: usize) -> SymExpr {
        let mut coeffs = [0; MAX_SYMBOLS];
        coeffs[i] = -1;
        SymExpr { coeffs }
    }

    pub fn sum(i: usize, j: usize) -> SymExpr {
        let mut coeffs = [0; MAX_SYMBOLS];
        coeffs[i] += 1;
        coeffs[j] += 1;
        SymExpr { coeffs }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0)
            .map(|(i, c)| *c as f64 * values[i])
            .sum()
    }

    /// `Some((symbol, coefficient))` when the expression is `±t_i`.
    pub fn single(&self) -> Option<(usize, i8)> {
        let mut found = None;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0 {
                if found.is_some() {
                    return None;
                }
                found = Some((i, c));
            }
        }
        match found {
            Some((_, c)) if c == 1 || c == -1 => found,
            _ => None,
        }
    }

    pub fn symbols(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0).map(|(i, _)| i)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0)
    }

    pub fn permuted(&self, perm: &[usize]) -> SymExpr {
        let mut coeffs = [0; MAX_SYMBOLS];
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0 {
                coeffs[perm[i]] = c;
            }
        }
        SymExpr { coeffs }
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.unsigned_abs();
            if mag == 1 {
                write!(f, "{sign}t{i}")?;
            } else {
                write!(f, "{sign}{mag}*t{i}")?;
            }
            first = false;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// A rotation angle: concrete radians, or a symbolic expression inside rule patterns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Param {
    Value(f64),
    Expr(SymExpr),
}

impl Param {
    pub fn value(&self) -> Option<f64> {
        match self {
            Param::Value(v) => Some(*v),
            Param::Expr(_) => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, Param::Expr(_))
    }

    /// Resolve against a symbol assignment.
    pub fn resolve(&self, symbols: &[f64]) -> f64 {
        match self {
            Param::Value(v) => *v,
            Param::Expr(e) => e.eval(symbols),
        }
    }

    /// Bit pattern used for hashing and exact comparisons; `-0.0` folds to `0.0`.
    pub(crate) fn hash_key(&self) -> (u8, u64) {
        match self {
            Param::Value(v) => {
                let v = if *v == 0.0 { 0.0 } else { *v };
                (0, v.to_bits())
            }
            Param::Expr(e) => {
                let mut k = 0u64;
                for c in e.coeffs {
                    k = (k << 8) | (c as u8 as u64);
                }
                (1, k)
            }
        }
    }
}

/// A named universe of gate kinds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSet {
    pub name: String,
    pub kinds: Vec<GateKind>,
}

impl GateSet {
    /// {CNOT, X, H, Rz}
    pub fn nam() -> GateSet {
        GateSet {
            name: "nam".into(),
            kinds: vec![GateKind::H, GateKind::X, GateKind::Rz, GateKind::Cx],
        }
    }

    /// {CX, Rz, X, SX}
    pub fn ibm() -> GateSet {
        GateSet {
            name: "ibm".into(),
            kinds: vec![GateKind::X, GateKind::Sx, GateKind::Rz, GateKind::Cx],
        }
    }

    pub fn custom(kinds: &[GateKind]) -> GateSet {
        let mut kinds = kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        let name = kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(",");
        GateSet { name, kinds }
    }

    pub fn by_name(name: &str) -> Option<GateSet> {
        match name {
            "nam" => Some(GateSet::nam()),
            "ibm" => Some(GateSet::ibm()),
            other => {
                let kinds: Option<Vec<_>> = other.split(',').map(|s| GateKind::from_name(s.trim())).collect();
                kinds.filter(|k| !k.is_empty()).map(|k| GateSet::custom(&k))
            }
        }
    }

    pub fn contains(&self, kind: GateKind) -> bool {
        self.kinds.contains(&kind)
    }
}
