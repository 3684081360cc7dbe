//! Gradients of weighted Pauli-Z expectations `f(θ) = Σ_q c_q ⟨Z_q⟩`.
//!
//! Three routes are provided. The adjoint sweep is the training path: one
//! forward pass, then a reverse pass that un-applies every gate to both the
//! state and the co-state `(Σ c_q Z_q)|ψ⟩`, reading off `Im⟨λ|G|ψ⟩` for each
//! rotation generator `G`. The parameter-shift rule evaluates the circuit
//! at `θ ± π/2` per angle occurrence and works on trajectory-averaged noisy
//! expectations. Central finite differences back the `gradcheck` tooling.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{Angle, AngleShift, Circuit, Op};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qnet::{Ablation, QNetCircuit, QNetConfig};
use crate::sim::gate::{apply_raw, rz_matrix, ry_matrix};
use crate::sim::{GateKind, NoiseSpec, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub struct GradientResult {
    /// Forward Pauli-Z expectations, one per qubit.
    pub values: Vec<f64>,
    /// `∂f/∂params`, same length as the parameter vector.
    pub gradient: Vec<f64>,
}

/// How a circuit vector-Jacobian product is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMode {
    Adjoint,
    /// Shift rule over `trajectories`-averaged expectations when noisy.
    ParameterShift { trajectories: usize },
}

fn check_cotangent(circuit: &Circuit, cotangent: &[f64]) -> Result<()> {
    if cotangent.len() != circuit.num_qubits() {
        return Err(Error::argument(format!(
            "cotangent has {} entries, circuit measures {} qubits",
            cotangent.len(),
            circuit.num_qubits()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy)]
enum Pauli {
    X,
    Y,
    Z,
}

/// `⟨λ|P_q|ψ⟩`
fn pauli_overlap(lambda: &StateVector, psi: &StateVector, q: usize, pauli: Pauli) -> Complex64 {
    let bit = 1usize << q;
    let l = lambda.amplitudes();
    let p = psi.amplitudes();
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..l.len() {
        let set = k & bit != 0;
        let image = match pauli {
            Pauli::X => p[k ^ bit],
            Pauli::Y => {
                if set {
                    i * p[k ^ bit]
                } else {
                    -i * p[k ^ bit]
                }
            }
            Pauli::Z => {
                if set {
                    -p[k]
                } else {
                    p[k]
                }
            }
        };
        acc += l[k].conj() * image;
    }
    acc
}

/// `⟨λ|Π₁₁|ψ⟩` for the projector onto both bits set.
fn projector_overlap(lambda: &StateVector, psi: &StateVector, mask: usize) -> Complex64 {
    lambda
        .amplitudes()
        .iter()
        .zip(psi.amplitudes())
        .enumerate()
        .filter(|(k, _)| k & mask == mask)
        .map(|(_, (l, p))| l.conj() * p)
        .sum()
}

fn accumulate(grad: &mut [f64], angle: &Angle, value: f64) {
    if let Angle::Param(r) = angle {
        grad[r.index] += r.scale * value;
    }
}

fn unapply_1q(states: [&mut StateVector; 2], q: usize, m: &crate::sim::state::Matrix2) {
    for s in states {
        s.apply_matrix_1q(q, m);
    }
}

/// Reverse step through one op: adds its parameter contributions to `grad`
/// and un-applies it from both `psi` and `lambda`.
fn reverse_step(op: &Op, params: &[f64], psi: &mut StateVector, lambda: &mut StateVector, grad: &mut [f64]) {
    let bound: Vec<f64> = op
        .angles
        .iter()
        .map(|a| match *a {
            Angle::Const(v) => v,
            Angle::Param(r) => r.scale * params[r.index] + r.offset,
        })
        .collect();
    let q = op.targets[0];
    // d/dθ of exp(−iθP/2) contributes Im⟨λ|P|ψ⟩ with ψ taken after the gate.
    match op.kind {
        GateKind::Rx | GateKind::Ry | GateKind::Rz if op.is_parameterized() => {
            let pauli = match op.kind {
                GateKind::Rx => Pauli::X,
                GateKind::Ry => Pauli::Y,
                _ => Pauli::Z,
            };
            accumulate(grad, &op.angles[0], pauli_overlap(lambda, psi, q, pauli).im);
        }
        GateKind::Rot3 if op.is_parameterized() => {
            // RZ(γ)·RY(β)·RZ(α), peeled from the left
            accumulate(grad, &op.angles[2], pauli_overlap(lambda, psi, q, Pauli::Z).im);
            unapply_1q([psi, lambda], q, &rz_matrix(-bound[2]));
            accumulate(grad, &op.angles[1], pauli_overlap(lambda, psi, q, Pauli::Y).im);
            unapply_1q([psi, lambda], q, &ry_matrix(-bound[1]));
            accumulate(grad, &op.angles[0], pauli_overlap(lambda, psi, q, Pauli::Z).im);
            unapply_1q([psi, lambda], q, &rz_matrix(-bound[0]));
            return;
        }
        GateKind::CPhase if op.is_parameterized() => {
            // d/dθ diag(1,1,1,e^{iθ}) = iΠ₁₁·U, so ∂f = −2·Im⟨λ|Π₁₁|ψ⟩
            let mask = (1usize << q) | (1usize << op.controls[0]);
            accumulate(grad, &op.angles[0], -2.0 * projector_overlap(lambda, psi, mask).im);
        }
        _ => {}
    }
    let inverse: Vec<f64> = match op.kind {
        GateKind::Rot3 => vec![-bound[2], -bound[1], -bound[0]],
        _ => bound.iter().map(|a| -a).collect(),
    };
    apply_raw(psi, op.kind, &op.targets, &op.controls, &inverse);
    apply_raw(lambda, op.kind, &op.targets, &op.controls, &inverse);
}

/// Adjoint-mode gradient of `Σ_q cotangent[q]·⟨Z_q⟩`. Shared parameters
/// accumulate over every occurrence. Each gate is touched twice in the
/// reverse sweep.
pub fn adjoint_gradient(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
) -> Result<GradientResult> {
    check_cotangent(circuit, cotangent)?;
    let mut psi = circuit.execute(params, input.clone())?;
    let values = psi.z_expectations();
    let mut lambda = psi.weighted_z_image(cotangent);
    let mut gradient = vec![0.0; params.len()];
    for op in circuit.ops().iter().rev() {
        reverse_step(op, params, &mut psi, &mut lambda, &mut gradient);
    }
    Ok(GradientResult { values, gradient })
}

/// Every `(op, slot)` whose angle references a parameter.
fn occurrences(circuit: &Circuit) -> Vec<(usize, usize, Angle)> {
    circuit
        .ops()
        .iter()
        .enumerate()
        .flat_map(|(k, op)| {
            op.angles
                .iter()
                .enumerate()
                .filter(|(_, a)| matches!(a, Angle::Param(_)))
                .map(move |(s, a)| (k, s, *a))
        })
        .collect()
}

/// Amplitudes the shift rule may keep as prefix snapshots before it falls
/// back to rerunning every shifted circuit from the start.
const PREFIX_CACHE_AMPLITUDES: usize = 1 << 24;

/// Sorted distinct indices of ops carrying a parameter.
fn shifted_ops(occ: &[(usize, usize, Angle)]) -> Vec<usize> {
    let mut ops: Vec<usize> = occ.iter().map(|o| o.0).collect();
    ops.dedup();
    ops
}

/// `(f(θ+π/2) − f(θ−π/2))/2` per occurrence, each run from scratch.
#[allow(clippy::too_many_arguments)]
fn shift_terms(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    noise: Option<&NoiseSpec>,
    trajectories: usize,
    occ: &[(usize, usize, Angle)],
    delta: f64,
) -> Result<Vec<f64>> {
    occ.par_iter()
        .map(|&(op, slot, _)| {
            let eval = |delta| {
                circuit
                    .expectations_shifted(params, input, noise, trajectories, Some(AngleShift { op, slot, delta }))
                    .map(|z| dot(&z, cotangent))
            };
            Ok((eval(delta)? - eval(-delta)?) / 2.0)
        })
        .collect()
}

fn run_range(
    circuit: &Circuit,
    params: &[f64],
    state: &mut StateVector,
    noise: Option<(&NoiseSpec, &mut ChaCha8Rng)>,
    shift: Option<AngleShift>,
    range: std::ops::Range<usize>,
) -> Result<()> {
    circuit.run_op_range(params, state, noise, shift, range)
}

/// Same values as [`shift_terms`], but every trajectory is simulated once
/// up to each parameterized op and the shifted runs resume from that
/// snapshot (state and random stream), halving the work on average.
#[allow(clippy::too_many_arguments)]
fn shift_terms_cached(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    noise: Option<&NoiseSpec>,
    trajectories: usize,
    occ: &[(usize, usize, Angle)],
    starts: &[usize],
    delta: f64,
) -> Result<Vec<f64>> {
    let noise = noise.filter(|n| !n.is_noiseless());
    let runs = if noise.is_some() { trajectories.max(1) } else { 1 };
    let mut terms = vec![0.0; occ.len()];
    for t in 0..runs {
        let mut rng = noise.map(|n| n.trajectory_rng(t as u64));
        let mut state = input.clone();
        let mut snapshots = Vec::with_capacity(starts.len());
        let mut pos = 0;
        for &k in starts {
            let stream = noise.zip(rng.as_mut());
            run_range(circuit, params, &mut state, stream, None, pos..k)?;
            snapshots.push((state.clone(), rng.clone()));
            pos = k;
        }
        let part: Vec<f64> = occ
            .par_iter()
            .map(|&(op, slot, _)| {
                let (s0, r0) = &snapshots[starts.binary_search(&op).expect("op has a snapshot")];
                let eval = |delta| -> Result<f64> {
                    let (mut s, mut r) = (s0.clone(), r0.clone());
                    let shift = Some(AngleShift { op, slot, delta });
                    run_range(circuit, params, &mut s, noise.zip(r.as_mut()), shift, op..circuit.len())?;
                    Ok(dot(&s.z_expectations(), cotangent))
                };
                Ok((eval(delta)? - eval(-delta)?) / 2.0)
            })
            .collect::<Result<_>>()?;
        for (acc, v) in terms.iter_mut().zip(part) {
            *acc += v / runs as f64;
        }
    }
    Ok(terms)
}

/// Parameter-shift gradient `Σ_occ scale·(f(θ+π/2) − f(θ−π/2))/2`. With
/// noise, every evaluation averages the same `trajectories` seeded
/// trajectories.
pub fn parameter_shift_gradient(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    noise: Option<&NoiseSpec>,
    trajectories: usize,
) -> Result<GradientResult> {
    shift_rule_gradient(circuit, params, input, cotangent, noise, trajectories, FRAC_PI_2)
}

/// Shift-rule estimate `(f(θ+δ) − f(θ−δ))/2`, exact only at `δ = π/2`.
/// Other shifts exist to exercise the gradient checker.
pub(crate) fn shift_rule_gradient(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    noise: Option<&NoiseSpec>,
    trajectories: usize,
    delta: f64,
) -> Result<GradientResult> {
    check_cotangent(circuit, cotangent)?;
    let values = circuit.expectations(params, input, noise, trajectories)?;
    let occ = occurrences(circuit);
    let starts = shifted_ops(&occ);
    let terms = if starts.len() * input.len() <= PREFIX_CACHE_AMPLITUDES {
        shift_terms_cached(circuit, params, input, cotangent, noise, trajectories, &occ, &starts, delta)?
    } else {
        shift_terms(circuit, params, input, cotangent, noise, trajectories, &occ, delta)?
    };
    let mut gradient = vec![0.0; params.len()];
    for ((_, _, angle), term) in occ.iter().zip(terms) {
        accumulate(&mut gradient, angle, term);
    }
    Ok(GradientResult { values, gradient })
}

/// Central differences of `Σ_q cotangent[q]·⟨Z_q⟩`, noiseless.
pub fn finite_difference_gradient(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    check_cotangent(circuit, cotangent)?;
    let f = |p: &[f64]| -> Result<f64> {
        Ok(dot(&circuit.expectations(p, input, None, 1)?, cotangent))
    };
    (0..params.len())
        .map(|i| {
            let mut p = params.to_vec();
            p[i] = params[i] + step;
            let plus = f(&p)?;
            p[i] = params[i] - step;
            let minus = f(&p)?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Vector-Jacobian product through `circuit` using `mode`. The adjoint
/// route refuses noisy execution.
pub fn vjp(
    circuit: &Circuit,
    params: &[f64],
    input: &StateVector,
    cotangent: &[f64],
    mode: GradientMode,
    noise: Option<&NoiseSpec>,
) -> Result<GradientResult> {
    let noisy = noise.is_some_and(|n| !n.is_noiseless());
    match mode {
        GradientMode::Adjoint if noisy => Err(Error::Unsupported(
            "adjoint differentiation needs unitary evolution; use parameter-shift for noisy circuits".into(),
        )),
        GradientMode::Adjoint => adjoint_gradient(circuit, params, input, cotangent),
        GradientMode::ParameterShift { trajectories } => {
            parameter_shift_gradient(circuit, params, input, cotangent, noise, trajectories)
        }
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-6;
/// Largest `n·d` the gradient checker accepts.
pub const GRADCHECK_MAX_QUBITS: usize = 8;
const GRADCHECK_FD_STEP: f64 = 1e-5;

/// Agreement of the three gradient routes on one random QNet instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub config: QNetConfig,
    pub seed: u64,
    /// Circuit parameters plus inputs plus one unreferenced probe slot.
    pub num_values: usize,
    pub adjoint_vs_shift: f64,
    pub adjoint_vs_fd: f64,
    pub shift_vs_fd: f64,
    pub max_deviation: f64,
    /// Index in the bound vector where `max_deviation` occurs.
    pub worst_index: usize,
    /// Gradient of the unreferenced slot from adjoint, shift and FD.
    pub unused_probe: [f64; 3],
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares adjoint, parameter-shift and finite-difference gradients of a
/// random weighted readout of a random QNet instance.
pub fn gradcheck(config: QNetConfig, seed: u64) -> Result<GradcheckReport> {
    gradcheck_with_shift(config, seed, FRAC_PI_2)
}

/// [`gradcheck`] with the shift rule evaluated at `±shift`; anything but
/// `π/2` is a deliberately broken rule for negative controls.
pub fn gradcheck_with_shift(config: QNetConfig, seed: u64, shift: f64) -> Result<GradcheckReport> {
    config.validate()?;
    if config.num_qubits() > GRADCHECK_MAX_QUBITS {
        return Err(Error::argument(format!(
            "gradcheck needs n·d <= {GRADCHECK_MAX_QUBITS}, got {}",
            config.num_qubits()
        )));
    }
    let qc = QNetCircuit::new(config, Ablation::Full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |len: usize, r: f64| -> Vec<f64> { (0..len).map(|_| rng.random_range(-r..r)).collect() };
    let params = uniform(qc.num_params(), PI);
    let x = Matrix::new(config.n, config.d, uniform(config.num_qubits(), PI))?;
    let cotangent = uniform(config.num_qubits(), 1.0);
    let probe = uniform(1, PI);
    let mut bound = qc.bind_vector(&params, &x)?;
    bound.extend(probe);
    let zero = StateVector::zero(config.num_qubits())?;
    let circuit = qc.circuit();
    let adjoint = adjoint_gradient(circuit, &bound, &zero, &cotangent)?.gradient;
    let shifted = shift_rule_gradient(circuit, &bound, &zero, &cotangent, None, 1, shift)?.gradient;
    let fd = finite_difference_gradient(circuit, &bound, &zero, &cotangent, GRADCHECK_FD_STEP)?;
    let deviation = |a: &[f64], b: &[f64]| -> (f64, usize) {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .enumerate()
            .fold((0.0, 0), |best, (i, d)| if d > best.0 { (d, i) } else { best })
    };
    let pairs = [
        deviation(&adjoint, &shifted),
        deviation(&adjoint, &fd),
        deviation(&shifted, &fd),
    ];
    let (max_deviation, worst_index) = pairs
        .iter()
        .copied()
        .fold((0.0, 0), |best, p| if p.0 > best.0 { p } else { best });
    let last = bound.len() - 1;
    Ok(GradcheckReport {
        config,
        seed,
        num_values: bound.len(),
        adjoint_vs_shift: pairs[0].0,
        adjoint_vs_fd: pairs[1].0,
        shift_vs_fd: pairs[2].0,
        max_deviation,
        worst_index,
        unused_probe: [adjoint[last], shifted[last], fd[last]],
        tolerance: GRADCHECK_TOLERANCE,
        passed: max_deviation <= GRADCHECK_TOLERANCE,
    })
}
