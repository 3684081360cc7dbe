//! Builds the QFT on a few qubits and compares every column of the
//! realized unitary with the discrete Fourier matrix.

use num_complex::Complex64;
use qnet::sim::{qft_ops, GateKind, StateVector};
use std::f64::consts::PI;

fn main() -> qnet::Result<()> {
    for m in 1..=5usize {
        let qubits: Vec<usize> = (0..m).collect();
        let ops = qft_ops(&qubits, false)?;
        let dim = 1usize << m;
        let mut worst = 0.0f64;
        for j in 0..dim {
            let mut psi = StateVector::basis(m, j)?;
            for op in &ops {
                psi.apply(op)?;
            }
            for (k, amp) in psi.amplitudes().iter().enumerate() {
                let want = Complex64::from_polar((dim as f64).powf(-0.5), 2.0 * PI * (j * k) as f64 / dim as f64);
                worst = worst.max((amp - want).norm());
            }
        }
        let count = |kind| ops.iter().filter(|o| o.kind == kind).count();
        println!(
            "m={m}: {} H, {} CPHASE, {} SWAP, max deviation from DFT {worst:.2e}",
            count(GateKind::H),
            count(GateKind::CPhase),
            count(GateKind::Swap)
        );
    }
    Ok(())
}
