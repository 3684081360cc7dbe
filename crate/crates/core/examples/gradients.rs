//! Differentiates a weighted Z readout of a random QNet three ways and runs
//! the built-in gradient checker, including a deliberately broken shift.

use qnet::autodiff::{
    adjoint_gradient, finite_difference_gradient, gradcheck, gradcheck_with_shift, parameter_shift_gradient,
};
use qnet::linalg::Matrix;
use qnet::qnet::{Ablation, QNetCircuit, QNetConfig};
use qnet::sim::StateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> qnet::Result<()> {
    let cfg = QNetConfig::new(2, 2, 1)?;
    let qc = QNetCircuit::new(cfg, Ablation::Full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params: Vec<f64> = (0..qc.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Matrix::new(2, 2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let bound = qc.bind_vector(&params, &x)?;
    let zero = StateVector::zero(cfg.num_qubits())?;
    let weights = [1.0, -0.5, 0.25, 2.0];

    let adjoint = adjoint_gradient(qc.circuit(), &bound, &zero, &weights)?;
    let shift = parameter_shift_gradient(qc.circuit(), &bound, &zero, &weights, None, 1)?;
    let fd = finite_difference_gradient(qc.circuit(), &bound, &zero, &weights, 1e-6)?;
    println!("<Z> = {:.4?}", adjoint.values);
    println!("{:>5} {:>12} {:>12} {:>12}", "slot", "adjoint", "shift", "central FD");
    for (i, fd_i) in fd.iter().enumerate() {
        let label = if i < qc.num_params() { format!("p{i}") } else { format!("x{}", i - qc.num_params()) };
        println!("{label:>5} {:>12.8} {:>12.8} {:>12.8}", adjoint.gradient[i], shift.gradient[i], fd_i);
    }

    let ok = gradcheck(cfg, 1)?;
    println!("gradcheck: max deviation {:.2e}, passed {}", ok.max_deviation, ok.passed);
    let broken = gradcheck_with_shift(cfg, 1, 0.4)?;
    println!(
        "gradcheck with shift 0.4: max deviation {:.2e} at slot {}, passed {}",
        broken.max_deviation, broken.worst_index, broken.passed
    );
    Ok(())
}
