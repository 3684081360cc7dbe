use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::{Matrix2, StateVector};
use crate::error::{Error, Result};

/// Gate vocabulary of the simulator.
///
/// Rotations are half-angle Pauli exponentials, `RX(θ) = exp(−iθX/2)`, and
/// `ROT3(α, β, γ) = RZ(γ)·RY(β)·RZ(α)`. `MCX` with no controls is a plain X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Rot3,
    H,
    Cnot,
    CPhase,
    Swap,
    Mcx,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Rot3,
        GateKind::H,
        GateKind::Cnot,
        GateKind::CPhase,
        GateKind::Swap,
        GateKind::Mcx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Rot3 => "ROT3",
            GateKind::H => "H",
            GateKind::Cnot => "CNOT",
            GateKind::CPhase => "CPHASE",
            GateKind::Swap => "SWAP",
            GateKind::Mcx => "MCX",
        }
    }

    pub fn num_angles(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::CPhase => 1,
            GateKind::Rot3 => 3,
            GateKind::H | GateKind::Cnot | GateKind::Swap | GateKind::Mcx => 0,
        }
    }

    fn num_targets(self) -> usize {
        match self {
            GateKind::Swap => 2,
            _ => 1,
        }
    }

    /// `None` means "any number" (MCX).
    fn num_controls(self) -> Option<usize> {
        match self {
            GateKind::Cnot | GateKind::CPhase => Some(1),
            GateKind::Mcx => None,
            _ => Some(0),
        }
    }

    pub fn is_single_qubit(self) -> bool {
        matches!(
            self,
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Rot3 | GateKind::H
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown gate kind `{s}`")))
    }
}

/// A gate with concrete angles.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
    pub angles: Vec<f64>,
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<usize>, controls: Vec<usize>, angles: Vec<f64>) -> Self {
        Self {
            kind,
            targets,
            controls,
            angles,
        }
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Rx, vec![q], vec![], vec![theta])
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Ry, vec![q], vec![], vec![theta])
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Rz, vec![q], vec![], vec![theta])
    }

    pub fn rot3(q: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::new(GateKind::Rot3, vec![q], vec![], vec![alpha, beta, gamma])
    }

    pub fn h(q: usize) -> Self {
        Self::new(GateKind::H, vec![q], vec![], vec![])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(GateKind::Cnot, vec![target], vec![control], vec![])
    }

    pub fn cphase(control: usize, target: usize, theta: f64) -> Self {
        Self::new(GateKind::CPhase, vec![target], vec![control], vec![theta])
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Self::new(GateKind::Swap, vec![a, b], vec![], vec![])
    }

    pub fn mcx(controls: Vec<usize>, target: usize) -> Self {
        Self::new(GateKind::Mcx, vec![target], controls, vec![])
    }

    /// Every qubit the gate touches, targets first.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets.iter().chain(&self.controls).copied()
    }

    /// Checks arity, angle count and index ranges.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        validate_shape(self.kind, &self.targets, &self.controls, self.angles.len(), num_qubits)
    }

    /// The inverse gate.
    pub fn adjoint(&self) -> GateOp {
        let angles = match self.kind {
            GateKind::Rot3 => vec![-self.angles[2], -self.angles[1], -self.angles[0]],
            _ => self.angles.iter().map(|a| -a).collect(),
        };
        GateOp {
            angles,
            ..self.clone()
        }
    }
}

pub(crate) fn validate_shape(
    kind: GateKind,
    targets: &[usize],
    controls: &[usize],
    num_angles: usize,
    num_qubits: usize,
) -> Result<()> {
    if targets.len() != kind.num_targets() {
        return Err(Error::argument(format!(
            "{kind} takes {} target(s), got {}",
            kind.num_targets(),
            targets.len()
        )));
    }
    if let Some(expected) = kind.num_controls() {
        if controls.len() != expected {
            return Err(Error::argument(format!(
                "{kind} takes {expected} control(s), got {}",
                controls.len()
            )));
        }
    }
    if num_angles != kind.num_angles() {
        return Err(Error::argument(format!(
            "{kind} takes {} angle(s), got {num_angles}",
            kind.num_angles()
        )));
    }
    let mut seen = 0u64;
    for &q in targets.iter().chain(controls) {
        if q >= num_qubits {
            return Err(Error::Index {
                index: q,
                num_qubits,
            });
        }
        if seen & (1 << q) != 0 {
            return Err(Error::argument(format!("{kind} repeats qubit {q}")));
        }
        seen |= 1 << q;
    }
    Ok(())
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn rx_matrix(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let mis = Complex64::new(0.0, -s);
    [[Complex64::new(c, 0.0), mis], [mis, Complex64::new(c, 0.0)]]
}

pub fn ry_matrix(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn rz_matrix(theta: f64) -> Matrix2 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

/// `RZ(γ)·RY(β)·RZ(α)` in closed form.
pub fn rot3_matrix(alpha: f64, beta: f64, gamma: f64) -> Matrix2 {
    let (s, c) = (beta / 2.0).sin_cos();
    [
        [
            Complex64::from_polar(c, -(alpha + gamma) / 2.0),
            Complex64::from_polar(-s, (alpha - gamma) / 2.0),
        ],
        [
            Complex64::from_polar(s, (gamma - alpha) / 2.0),
            Complex64::from_polar(c, (alpha + gamma) / 2.0),
        ],
    ]
}

pub fn hadamard_matrix() -> Matrix2 {
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[r, r], [r, -r]]
}

/// 2×2 matrix of a single-qubit kind, `None` for multi-qubit kinds.
pub fn single_qubit_matrix(kind: GateKind, angles: &[f64]) -> Option<Matrix2> {
    Some(match kind {
        GateKind::Rx => rx_matrix(angles[0]),
        GateKind::Ry => ry_matrix(angles[0]),
        GateKind::Rz => rz_matrix(angles[0]),
        GateKind::Rot3 => rot3_matrix(angles[0], angles[1], angles[2]),
        GateKind::H => hadamard_matrix(),
        _ => return None,
    })
}

/// Applies a gate whose shape has already been validated.
pub(crate) fn apply_raw(
    state: &mut StateVector,
    kind: GateKind,
    targets: &[usize],
    controls: &[usize],
    angles: &[f64],
) {
    match kind {
        GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Rot3 | GateKind::H => {
            let m = single_qubit_matrix(kind, angles).expect("single-qubit kind");
            state.apply_matrix_1q(targets[0], &m);
        }
        GateKind::Cnot | GateKind::Mcx => {
            let mask = controls.iter().fold(0usize, |m, &c| m | (1 << c));
            state.apply_mcx(mask, targets[0]);
        }
        GateKind::CPhase => {
            let mask = (1usize << targets[0]) | (1usize << controls[0]);
            state.apply_phase_on_mask(mask, Complex64::from_polar(1.0, angles[0]));
        }
        GateKind::Swap => state.apply_swap(targets[0], targets[1]),
    }
}

impl StateVector {
    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.num_qubits())?;
        apply_raw(self, gate.kind, &gate.targets, &gate.controls, &gate.angles);
        Ok(())
    }
}

/// Consuming form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &GateOp) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rx_pi_flips_with_phase() {
        let s = apply_gate(StateVector::zero(1).unwrap(), &GateOp::rx(0, PI)).unwrap();
        let a = s.amplitudes();
        assert!((a[0] - c(0.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((s.z_expectations()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rz_is_phase_only_on_zero() {
        let s = apply_gate(StateVector::zero(1).unwrap(), &GateOp::rz(0, FRAC_PI_2)).unwrap();
        assert!((s.z_expectations()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hadamard_gives_zero_expectation() {
        let s = apply_gate(StateVector::zero(1).unwrap(), &GateOp::h(0)).unwrap();
        assert!(s.z_expectations()[0].abs() < 1e-15);
        // |+⟩⊗|0⟩ written with qubit 0 in |+⟩
        let s = apply_gate(StateVector::zero(2).unwrap(), &GateOp::h(0)).unwrap();
        let z = s.z_expectations();
        assert!(z[0].abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toffoli_truth_table() {
        // |110⟩ means qubits 0 and 1 set
        let s = StateVector::basis(3, 0b011).unwrap();
        let s = apply_gate(s, &GateOp::mcx(vec![0, 1], 2)).unwrap();
        assert_eq!(s.amplitudes()[0b111], c(1.0, 0.0));
    }

    #[test]
    fn index_and_shape_errors() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(s.apply(&GateOp::h(2)), Err(Error::Index { index: 2, .. })));
        assert!(s.apply(&GateOp::cnot(1, 1)).is_err());
        let bad = GateOp::new(GateKind::Rot3, vec![0], vec![], vec![0.1]);
        assert!(s.apply(&bad).is_err());
        let bad = GateOp::new(GateKind::H, vec![0], vec![], vec![0.1]);
        assert!(s.apply(&bad).is_err());
    }

    #[test]
    fn rot3_closed_form_matches_product() {
        let (a, b, g) = (0.3, -1.1, 2.2);
        let m = rot3_matrix(a, b, g);
        let prod = mat_mul(&rz_matrix(g), &mat_mul(&ry_matrix(b), &rz_matrix(a)));
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - prod[i][j]).norm() < 1e-14);
            }
        }
    }

    fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    /// Dense oracle: full 2^n × 2^n matrix of a validated gate built from
    /// basis-state permutations and the 2×2 blocks.
    fn dense_apply(gate: &GateOp, input: &StateVector) -> Vec<Complex64> {
        let n = input.num_qubits();
        let dim = 1usize << n;
        let mut out = vec![c(0.0, 0.0); dim];
        for (col, amp) in input.amplitudes().iter().enumerate() {
            for row in 0..dim {
                let entry = dense_entry(gate, row, col);
                out[row] += entry * amp;
            }
        }
        out
    }

    fn dense_entry(gate: &GateOp, row: usize, col: usize) -> Complex64 {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let bit = |x: usize, q: usize| (x >> q) & 1;
        match gate.kind {
            k if k.is_single_qubit() => {
                let q = gate.targets[0];
                let m = single_qubit_matrix(k, &gate.angles).unwrap();
                if (row ^ col) & !(1 << q) != 0 {
                    zero
                } else {
                    m[bit(row, q)][bit(col, q)]
                }
            }
            GateKind::Cnot | GateKind::Mcx => {
                let t = gate.targets[0];
                let fire = gate.controls.iter().all(|&q| bit(col, q) == 1);
                let image = if fire { col ^ (1 << t) } else { col };
                if row == image { one } else { zero }
            }
            GateKind::CPhase => {
                if row != col {
                    zero
                } else if bit(col, gate.targets[0]) == 1 && bit(col, gate.controls[0]) == 1 {
                    Complex64::from_polar(1.0, gate.angles[0])
                } else {
                    one
                }
            }
            GateKind::Swap => {
                let (a, b) = (gate.targets[0], gate.targets[1]);
                let mut image = col & !(1 << a) & !(1 << b);
                image |= bit(col, a) << b;
                image |= bit(col, b) << a;
                if row == image { one } else { zero }
            }
            _ => unreachable!(),
        }
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = GateOp> {
        let angle = -4.0f64..4.0;
        (0usize..8, proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n.min(4)), angle.clone(), angle.clone(), angle)
            .prop_map(move |(kind, qs, a, b, g)| {
                let t = qs[0];
                match kind {
                    0 => GateOp::rx(t, a),
                    1 => GateOp::ry(t, a),
                    2 => GateOp::rz(t, a),
                    3 => GateOp::rot3(t, a, b, g),
                    4 => GateOp::h(t),
                    5 if qs.len() >= 2 => GateOp::cphase(qs[1], t, a),
                    6 if qs.len() >= 2 => GateOp::swap(qs[1], t),
                    _ => GateOp::mcx(qs[1..].to_vec(), t),
                }
            })
    }

    proptest! {
        #[test]
        fn gates_preserve_norm_and_invert(seed in 0u64..1000, gates in proptest::collection::vec(arb_gate(4), 1..20)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = StateVector::random(4, &mut rng).unwrap();
            let mut s = start.clone();
            for g in &gates {
                s.apply(g).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() <= 1e-10);
            }
            for g in gates.iter().rev() {
                s.apply(&g.adjoint()).unwrap();
            }
            prop_assert!(s.max_abs_diff(&start) <= 1e-10);
        }

        #[test]
        fn kernels_match_dense_oracle(seed in 0u64..1000, gate in arb_gate(5)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = StateVector::random(5, &mut rng).unwrap();
            let expected = dense_apply(&gate, &input);
            let got = apply_gate(input, &gate).unwrap();
            for (a, b) in got.amplitudes().iter().zip(&expected) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mcx_is_controlled_permutation_exhaustive() {
        for n in 1..=5usize {
            for target in 0..n {
                let others: Vec<usize> = (0..n).filter(|&q| q != target).collect();
                // every control subset
                for subset in 0u32..(1 << others.len()) {
                    let controls: Vec<usize> = others
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| subset & (1 << i) != 0)
                        .map(|(_, &q)| q)
                        .collect();
                    let gate = GateOp::mcx(controls.clone(), target);
                    for basis in 0..1usize << n {
                        let s = apply_gate(StateVector::basis(n, basis).unwrap(), &gate).unwrap();
                        let fire = controls.iter().all(|&q| (basis >> q) & 1 == 1);
                        let image = if fire { basis ^ (1 << target) } else { basis };
                        assert_eq!(s.amplitudes()[image], c(1.0, 0.0));
                    }
                }
            }
        }
    }
}
