//! Dense statevector simulation.

pub mod gate;
pub mod noise;
pub mod qft;
pub mod state;

pub use gate::{apply_gate, GateKind, GateOp};
pub use noise::{apply_depolarizing_trajectory, derive_seed, NoiseSpec};
pub use qft::{apply_qft, qft_ops};
pub use state::{StateVector, MAX_QUBITS};

/// Pauli-Z expectation of every qubit.
pub fn pauli_z_expectations(state: &StateVector) -> Vec<f64> {
    state.z_expectations()
}

/// |0…0⟩ on `num_qubits` qubits.
pub fn init_zero(num_qubits: usize) -> crate::Result<StateVector> {
    StateVector::zero(num_qubits)
}
