//! Prepares a Bell pair and a GHZ state gate by gate and reads out
//! Pauli-Z expectations and basis probabilities.

use qnet::sim::{GateOp, StateVector};

fn main() -> qnet::Result<()> {
    let mut bell = StateVector::zero(2)?;
    bell.apply(&GateOp::h(0))?;
    bell.apply(&GateOp::cnot(0, 1))?;
    println!("Bell pair probabilities |00>,|01>,|10>,|11>: {:.3?}", bell.probabilities());
    println!("Bell pair <Z>: {:.3?}", bell.z_expectations());

    let mut ghz = StateVector::zero(4)?;
    ghz.apply(&GateOp::h(0))?;
    for q in 1..4 {
        ghz.apply(&GateOp::cnot(0, q))?;
    }
    let probs = ghz.probabilities();
    let support: Vec<String> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-12)
        .map(|(i, p)| format!("|{i:04b}> {p:.3}"))
        .collect();
    println!("GHZ support: {}", support.join(", "));

    // A rotation sweep: <Z> of RY(θ)|0> is cos θ.
    for k in 0..=4 {
        let theta = k as f64 * std::f64::consts::FRAC_PI_4;
        let mut psi = StateVector::zero(1)?;
        psi.apply(&GateOp::ry(0, theta))?;
        println!("RY({theta:.3}) <Z> = {:+.4}  cos = {:+.4}", psi.z_expectations()[0], theta.cos());
    }
    Ok(())
}
