use std::f64::consts::PI;

use super::gate::GateOp;
use super::state::StateVector;
use crate::error::{Error, Result};

fn check_distinct(qubits: &[usize]) -> Result<()> {
    if qubits.is_empty() {
        return Err(Error::argument("QFT needs at least one qubit"));
    }
    for (i, q) in qubits.iter().enumerate() {
        if qubits[..i].contains(q) {
            return Err(Error::argument(format!("QFT qubit list repeats index {q}")));
        }
    }
    Ok(())
}

/// Hadamard and controlled-phase ladder of the QFT, without the final
/// bit-reversal. `qubits[0]` is the least-significant bit of the register
/// the transform acts on.
pub fn qft_ladder(qubits: &[usize]) -> Vec<GateOp> {
    let m = qubits.len();
    let mut ops = Vec::with_capacity(m * (m + 1) / 2);
    for a in (0..m).rev() {
        ops.push(GateOp::h(qubits[a]));
        for b in (0..a).rev() {
            ops.push(GateOp::cphase(qubits[b], qubits[a], PI / (1u64 << (a - b)) as f64));
        }
    }
    ops
}

/// Swaps reversing the bit order of `qubits`.
pub fn bit_reversal(qubits: &[usize]) -> Vec<GateOp> {
    let m = qubits.len();
    (0..m / 2)
        .map(|i| GateOp::swap(qubits[i], qubits[m - 1 - i]))
        .collect()
}

/// Expanded QFT over `qubits`, realizing `y_k = 2^{-m/2} Σ_j e^{2πi jk/2^m} x_j`
/// on the sub-register. `inverse` yields the adjoint sequence.
pub fn qft_ops(qubits: &[usize], inverse: bool) -> Result<Vec<GateOp>> {
    check_distinct(qubits)?;
    let mut ops = qft_ladder(qubits);
    ops.extend(bit_reversal(qubits));
    if inverse {
        ops = ops.iter().rev().map(GateOp::adjoint).collect();
    }
    Ok(ops)
}

pub fn apply_qft(mut state: StateVector, qubits: &[usize], inverse: bool) -> Result<StateVector> {
    for op in qft_ops(qubits, inverse)? {
        state.apply(&op)?;
    }
    Ok(state)
}
