//! Dense unitary simulation, used as the equivalence oracle.
//!
//! Qubit 0 is the most significant bit of the basis-state index.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dag::Circuit;
use super::gate::MAX_SYMBOLS;
use crate::error::{Error, Result};

pub const DEFAULT_QUBIT_LIMIT: usize = 8;
/// Entrywise tolerance for equivalence up to global phase.
pub const EQUIV_TOL: f64 = 1e-8;
pub const DEFAULT_PARAM_SAMPLES: usize = 4;
const SAMPLE_SEED: u64 = 0x5eed_0f_a11;

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Matrix {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Matrix { dim, data }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    /// Max entrywise deviation of `U U^dagger` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += self.get(i, k) * self.get(j, k).conj();
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }

    /// Max entrywise distance to another matrix.
    pub fn max_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Fixed parameter assignments, uniform in `[0, 2pi)`, shared by every
/// equivalence check and fingerprint.
pub fn param_samples(count: usize) -> Vec<[f64; MAX_SYMBOLS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    (0..count)
        .map(|_| {
            let mut a = [0.0; MAX_SYMBOLS];
            for v in a.iter_mut() {
                *v = rng.gen_range(0.0..TAU);
            }
            a
        })
        .collect()
}

/// Unitary of a concrete circuit with the default qubit limit.
pub fn unitary(circuit: &Circuit) -> Result<Matrix> {
    if circuit.has_symbolic_params() {
        return Err(Error::SymbolicParameter);
    }
    unitary_with(circuit, &[], DEFAULT_QUBIT_LIMIT)
}

/// Unitary with symbolic parameters resolved against `symbols`.
pub fn unitary_with(circuit: &Circuit, symbols: &[f64], limit: usize) -> Result<Matrix> {
    let n = circuit.num_qubits();
    if n > limit {
        return Err(Error::QubitLimit { num_qubits: n, limit });
    }
    if circuit.has_symbolic_params() && symbols.len() < circuit.symbol_count() {
        return Err(Error::SymbolicParameter);
    }
    let dim = 1usize << n;
    let mut m = Matrix::identity(dim);
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    for g in circuit.gates() {
        let theta = g.param.map(|p| p.resolve(symbols));
        let u = g.kind.unitary(theta);
        let qs = g.qubits();
        // Apply to every column of `m` (left multiplication).
        for col in 0..dim {
            for (r, s) in scratch.iter_mut().enumerate() {
                *s = m.data[r * dim + col];
            }
            apply_gate(&mut scratch, n, qs, &u);
            for (r, s) in scratch.iter().enumerate() {
                m.data[r * dim + col] = *s;
            }
        }
    }
    Ok(m)
}

fn apply_gate(state: &mut [Complex64], n: usize, qubits: &[usize], u: &[Complex64]) {
    match qubits {
        [q] => {
            let bit = 1usize << (n - 1 - q);
            for i in 0..state.len() {
                if i & bit == 0 {
                    let (a, b) = (state[i], state[i | bit]);
                    state[i] = u[0] * a + u[1] * b;
                    state[i | bit] = u[2] * a + u[3] * b;
                }
            }
        }
        [q0, q1] => {
            let b0 = 1usize << (n - 1 - q0);
            let b1 = 1usize << (n - 1 - q1);
            for i in 0..state.len() {
                if i & (b0 | b1) == 0 {
                    let idx = [i, i | b1, i | b0, i | b0 | b1];
                    let v = idx.map(|k| state[k]);
                    for r in 0..4 {
                        state[idx[r]] = (0..4).map(|c| u[r * 4 + c] * v[c]).sum();
                    }
                }
            }
        }
        _ => unreachable!("gates act on one or two qubits"),
    }
}

/// Smallest `max |U_a - lambda U_b|` over unit-modulus `lambda`, estimated from
/// the largest-magnitude entry of `U_a`; worst case over the parameter samples.
pub fn phase_residual(a: &Circuit, b: &Circuit, samples: usize) -> Result<f64> {
    if a.num_qubits() != b.num_qubits() {
        return Err(Error::DimensionMismatch(a.num_qubits(), b.num_qubits()));
    }
    let symbolic = a.has_symbolic_params() || b.has_symbolic_params();
    let assignments = if symbolic { param_samples(samples.max(1)) } else { vec![[0.0; MAX_SYMBOLS]] };
    let mut worst = 0.0f64;
    for s in &assignments {
        let ua = unitary_with(a, s, DEFAULT_QUBIT_LIMIT)?;
        let ub = unitary_with(b, s, DEFAULT_QUBIT_LIMIT)?;
        worst = worst.max(residual_of(&ua, &ub));
    }
    Ok(worst)
}

fn residual_of(ua: &Matrix, ub: &Matrix) -> f64 {
    let k = (0..ua.data.len())
        .max_by(|&i, &j| ua.data[i].norm().total_cmp(&ua.data[j].norm()).then(j.cmp(&i)))
        .unwrap_or(0);
    if ub.data[k].norm() < 1e-12 {
        return f64::INFINITY;
    }
    let lambda = ua.data[k] / ub.data[k];
    let lambda = lambda / lambda.norm();
    ua.data.iter().zip(&ub.data).map(|(x, y)| (x - lambda * y).norm()).fold(0.0, f64::max)
}

/// Whether `U_a = lambda U_b` for a unit-modulus `lambda`, for every sampled
/// assignment of the shared symbols.
pub fn equivalent_up_to_phase(a: &Circuit, b: &Circuit, samples: usize) -> Result<bool> {
    Ok(phase_residual(a, b, samples)? < EQUIV_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitBuilder, SymExpr};

    #[test]
    fn involutions_give_identity() {
        let c = CircuitBuilder::new(2).cx(0, 1).cx(0, 1).build().unwrap();
        assert!(unitary(&c).unwrap().max_diff(&Matrix::identity(4)) < 1e-12);
        let h = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        assert!(unitary(&h).unwrap().max_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn cnot_direction_flip_by_hadamards() {
        let a = CircuitBuilder::new(2).cx(0, 1).build().unwrap();
        let b = CircuitBuilder::new(2).h(0).h(1).cx(1, 0).h(0).h(1).build().unwrap();
        assert!(unitary(&a).unwrap().max_diff(&unitary(&b).unwrap()) < 1e-9);
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let c = CircuitBuilder::new(2).x(0).build().unwrap();
        let u = unitary(&c).unwrap();
        // |00> maps to |10>, i.e. index 2.
        assert!((u.get(2, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_equivalence() {
        // Rz(t) vs Z-like: Rz(t) and itself, Rz(t)*e^{it/2} = diag(1, e^{it}).
        let a = CircuitBuilder::new(1).rz_sym(0, SymExpr::symbol(0)).build().unwrap();
        assert!(equivalent_up_to_phase(&a, &a, 4).unwrap());
        // Z equals Rz(pi) up to phase i.
        let z = CircuitBuilder::new(1).z(0).build().unwrap();
        let rz = CircuitBuilder::new(1).rz(0, std::f64::consts::PI).build().unwrap();
        assert!(equivalent_up_to_phase(&z, &rz, 4).unwrap());
        let cx = CircuitBuilder::new(2).cx(0, 1).build().unwrap();
        assert!(!equivalent_up_to_phase(&cx, &Circuit::empty(2), 4).unwrap());
        assert!(matches!(
            equivalent_up_to_phase(&cx, &Circuit::empty(3), 4),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn limits_and_symbols() {
        assert!(matches!(unitary(&Circuit::empty(9)), Err(Error::QubitLimit { .. })));
        let s = CircuitBuilder::new(1).rz_sym(0, SymExpr::symbol(0)).build().unwrap();
        assert!(matches!(unitary(&s), Err(Error::SymbolicParameter)));
    }

    #[test]
    fn samples_are_fixed() {
        assert_eq!(param_samples(4), param_samples(4));
        assert!(param_samples(4).iter().flatten().all(|v| (0.0..TAU).contains(v)));
    }
}
