//! The QNet encoder circuit.
//!
//! Qubit `(i, j)` (token `i`, embedding dimension `j`, both zero-based) lives
//! at index `i·d + j`. A QNet over `blocks` blocks is
//!
//! 1. word embedding encoding: `RX(x[i][j])` then `RZ(i·π/n)` on every qubit,
//! 2. `blocks` repetitions of mixture learning followed by positional
//!    feedforward,
//! 3. one Pauli-Z measurement pass over all qubits.
//!
//! Mixture learning runs, per dimension `j`, a QFT over the `n` token qubits
//! of that dimension, one shared `ROT3(α_j, β_j, γ_j)` on each of them, and
//! the inverse QFT. The bit-reversal swaps of the two transforms cancel
//! because the rotation layer is the same on every qubit, so the layer is
//! emitted without them.
//!
//! Positional feedforward runs, per token, `ROT3` layer 1, `G`, `ROT3` layer
//! 2, `G`, where `G = H^{⊗d} · MCX · H^{⊗d}` with the token's last dimension
//! as the MCX target. Both rotation layers are indexed by dimension and
//! shared across tokens.
//!
//! Parameter table layout per block `b` (offset `9·d·b`): `d` mixture
//! triples, then `d` layer-1 triples, then `d` layer-2 triples.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{Angle, Circuit};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sim::qft::qft_ladder;
use crate::sim::{GateKind, GateOp, NoiseSpec, StateVector, MAX_QUBITS};

/// Input token matrix, `n × d` rotation angles in radians.
pub type TokenMatrix = Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub n: usize,
    pub d: usize,
    pub blocks: usize,
}

impl QNetConfig {
    pub fn new(n: usize, d: usize, blocks: usize) -> Result<Self> {
        let config = Self { n, d, blocks };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.blocks == 0 {
            return Err(Error::argument(format!(
                "n, d and blocks must all be >= 1 (got n={}, d={}, blocks={})",
                self.n, self.d, self.blocks
            )));
        }
        if self.n * self.d > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: self.n * self.d,
                limit: MAX_QUBITS,
            });
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.n * self.d
    }

    pub fn layout(&self) -> QubitLayout {
        QubitLayout {
            n: self.n,
            d: self.d,
        }
    }

    pub fn num_params(&self) -> usize {
        count_parameters(self)
    }
}

/// `9·d·blocks`: three ROT3 triples per dimension per block. Independent of
/// the sequence length.
pub fn count_parameters(config: &QNetConfig) -> usize {
    9 * config.d * config.blocks
}

/// Bijection between `(token, dim)` and qubit index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QubitLayout {
    pub n: usize,
    pub d: usize,
}

impl QubitLayout {
    #[inline]
    pub fn qubit(&self, token: usize, dim: usize) -> usize {
        debug_assert!(token < self.n && dim < self.d);
        token * self.d + dim
    }

    #[inline]
    pub fn token_dim(&self, qubit: usize) -> (usize, usize) {
        (qubit / self.d, qubit % self.d)
    }

    /// The `n` qubits of dimension `dim`, token 0 first.
    pub fn dim_qubits(&self, dim: usize) -> Vec<usize> {
        (0..self.n).map(|i| self.qubit(i, dim)).collect()
    }

    /// The `d` qubits of token `token`.
    pub fn token_qubits(&self, token: usize) -> Vec<usize> {
        (0..self.d).map(|j| self.qubit(token, j)).collect()
    }
}

/// Which of the repeated segments a circuit contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    MixtureOnly,
    FeedforwardOnly,
}

impl Ablation {
    fn mixture(self) -> bool {
        self != Ablation::FeedforwardOnly
    }

    fn feedforward(self) -> bool {
        self != Ablation::MixtureOnly
    }
}

/// Flat parameter slots of one block.
#[derive(Clone, Copy, Debug)]
pub struct BlockSlots {
    base: usize,
    d: usize,
}

impl BlockSlots {
    pub fn new(config: &QNetConfig, block: usize) -> Self {
        Self {
            base: 9 * config.d * block,
            d: config.d,
        }
    }

    pub fn mixture(&self, dim: usize) -> usize {
        self.base + 3 * dim
    }

    pub fn ff1(&self, dim: usize) -> usize {
        self.base + 3 * self.d + 3 * dim
    }

    pub fn ff2(&self, dim: usize) -> usize {
        self.base + 6 * self.d + 3 * dim
    }
}

fn rot3_refs(slot: usize) -> Vec<Angle> {
    vec![Angle::param(slot), Angle::param(slot + 1), Angle::param(slot + 2)]
}

pub fn positional_angle(token: usize, n: usize) -> f64 {
    token as f64 * PI / n as f64
}

pub(crate) fn append_encoding_with(
    circuit: &mut Circuit,
    config: &QNetConfig,
    x_angle: impl Fn(usize, usize) -> Angle,
    pos_angle: impl Fn(usize) -> f64,
) -> Result<()> {
    let layout = config.layout();
    circuit.set_tag(Some("enc"));
    for i in 0..config.n {
        for j in 0..config.d {
            let q = layout.qubit(i, j);
            circuit.push(GateKind::Rx, vec![q], vec![], vec![x_angle(i, j)])?;
            circuit.push_gate(GateOp::rz(q, pos_angle(i)))?;
        }
    }
    circuit.set_tag(None);
    Ok(())
}

fn append_encoding(
    circuit: &mut Circuit,
    config: &QNetConfig,
    x_angle: impl Fn(usize, usize) -> Angle,
) -> Result<()> {
    append_encoding_with(circuit, config, x_angle, |i| positional_angle(i, config.n))
}

fn check_block(config: &QNetConfig, block: usize) -> Result<()> {
    if block >= config.blocks {
        return Err(Error::argument(format!(
            "block {block} out of range for {} block(s)",
            config.blocks
        )));
    }
    Ok(())
}

fn append_mixture(circuit: &mut Circuit, config: &QNetConfig, block: usize) -> Result<()> {
    check_block(config, block)?;
    let layout = config.layout();
    let slots = BlockSlots::new(config, block);
    circuit.set_tag(Some(&format!("mix[{block}]")));
    for j in 0..config.d {
        let qubits = layout.dim_qubits(j);
        let ladder = qft_ladder(&qubits);
        circuit.extend_gates(ladder.iter().cloned())?;
        for &q in &qubits {
            circuit.push(GateKind::Rot3, vec![q], vec![], rot3_refs(slots.mixture(j)))?;
        }
        circuit.extend_gates(ladder.iter().rev().map(GateOp::adjoint))?;
    }
    circuit.set_tag(None);
    Ok(())
}

fn append_g(circuit: &mut Circuit, token_qubits: &[usize]) -> Result<()> {
    let (target, controls) = token_qubits.split_last().expect("d >= 1");
    circuit.extend_gates(token_qubits.iter().map(|&q| GateOp::h(q)))?;
    circuit.push_gate(GateOp::mcx(controls.to_vec(), *target))?;
    circuit.extend_gates(token_qubits.iter().map(|&q| GateOp::h(q)))
}

fn append_feedforward(circuit: &mut Circuit, config: &QNetConfig, block: usize) -> Result<()> {
    check_block(config, block)?;
    let layout = config.layout();
    let slots = BlockSlots::new(config, block);
    circuit.set_tag(Some(&format!("ff[{block}]")));
    for i in 0..config.n {
        let qubits = layout.token_qubits(i);
        for (j, &q) in qubits.iter().enumerate() {
            circuit.push(GateKind::Rot3, vec![q], vec![], rot3_refs(slots.ff1(j)))?;
        }
        append_g(circuit, &qubits)?;
        for (j, &q) in qubits.iter().enumerate() {
            circuit.push(GateKind::Rot3, vec![q], vec![], rot3_refs(slots.ff2(j)))?;
        }
        append_g(circuit, &qubits)?;
    }
    circuit.set_tag(None);
    Ok(())
}

fn check_input(config: &QNetConfig, x: &TokenMatrix) -> Result<()> {
    if x.shape() != (config.n, config.d) {
        return Err(Error::argument(format!(
            "token matrix is {}×{}, config expects {}×{}",
            x.rows(),
            x.cols(),
            config.n,
            config.d
        )));
    }
    Ok(())
}

/// Encoding segment with `x` baked in as constants.
pub fn build_encoding(config: &QNetConfig, x: &TokenMatrix) -> Result<Circuit> {
    config.validate()?;
    check_input(config, x)?;
    let mut c = Circuit::new(config.num_qubits())?;
    append_encoding(&mut c, config, |i, j| Angle::Const(x.get(i, j)))?;
    Ok(c)
}

/// Mixture segment of `block`, referencing the parameter table.
pub fn build_mixture_layer(config: &QNetConfig, block: usize) -> Result<Circuit> {
    config.validate()?;
    let mut c = Circuit::new(config.num_qubits())?;
    append_mixture(&mut c, config, block)?;
    Ok(c)
}

/// Feedforward segment of `block`, referencing the parameter table.
pub fn build_feedforward_layer(config: &QNetConfig, block: usize) -> Result<Circuit> {
    config.validate()?;
    let mut c = Circuit::new(config.num_qubits())?;
    append_feedforward(&mut c, config, block)?;
    Ok(c)
}

fn build_with(
    config: &QNetConfig,
    ablation: Ablation,
    x_angle: impl Fn(usize, usize) -> Angle,
) -> Result<Circuit> {
    config.validate()?;
    let mut c = Circuit::new(config.num_qubits())?;
    append_encoding(&mut c, config, x_angle)?;
    for b in 0..config.blocks {
        if ablation.mixture() {
            append_mixture(&mut c, config, b)?;
        }
        if ablation.feedforward() {
            append_feedforward(&mut c, config, b)?;
        }
    }
    Ok(c)
}

/// Full pre-measurement QNet circuit with `x` baked in.
pub fn build_qnet(config: &QNetConfig, x: &TokenMatrix) -> Result<Circuit> {
    build_qnet_ablated(config, x, Ablation::Full)
}

pub fn build_qnet_ablated(config: &QNetConfig, x: &TokenMatrix, ablation: Ablation) -> Result<Circuit> {
    check_input(config, x)?;
    build_with(config, ablation, |i, j| Angle::Const(x.get(i, j)))
}

/// A QNet circuit whose inputs are parameter slots too.
///
/// The bound vector is the parameter table followed by the row-major token
/// matrix, so one circuit serves every input and the gradient with respect
/// to the inputs comes out of the same differentiation pass.
#[derive(Clone, Debug)]
pub struct QNetCircuit {
    config: QNetConfig,
    ablation: Ablation,
    circuit: Circuit,
}

impl QNetCircuit {
    pub fn new(config: QNetConfig, ablation: Ablation) -> Result<Self> {
        let offset = config.num_params();
        let d = config.d;
        let circuit = build_with(&config, ablation, |i, j| Angle::param(offset + i * d + j))?;
        Ok(Self {
            config,
            ablation,
            circuit,
        })
    }

    pub fn config(&self) -> &QNetConfig {
        &self.config
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    /// Parameter table followed by the flattened inputs.
    pub fn bind_vector(&self, params: &[f64], x: &TokenMatrix) -> Result<Vec<f64>> {
        if params.len() != self.num_params() {
            return Err(Error::argument(format!(
                "parameter table has {} entries, expected {}",
                params.len(),
                self.num_params()
            )));
        }
        check_input(&self.config, x)?;
        let mut v = Vec::with_capacity(params.len() + x.as_slice().len());
        v.extend_from_slice(params);
        v.extend_from_slice(x.as_slice());
        Ok(v)
    }

    /// Measured `n × d` output.
    pub fn forward(
        &self,
        params: &[f64],
        x: &TokenMatrix,
        noise: Option<&NoiseSpec>,
        trajectories: usize,
    ) -> Result<Matrix> {
        let bound = self.bind_vector(params, x)?;
        let input = StateVector::zero(self.config.num_qubits())?;
        let z = self.circuit.expectations(&bound, &input, noise, trajectories)?;
        Matrix::new(self.config.n, self.config.d, z)
    }
}

/// Pauli-Z expectation of qubit `(i, j)` at entry `(i, j)`. With noise a
/// single trajectory is drawn; use [`QNetCircuit::forward`] to average.
pub fn qnet_forward(
    config: &QNetConfig,
    x: &TokenMatrix,
    params: &[f64],
    noise: Option<&NoiseSpec>,
) -> Result<Matrix> {
    QNetCircuit::new(*config, Ablation::Full)?.forward(params, x, noise, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::count_gates;
    use crate::sim::qft::bit_reversal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-PI..PI)).collect()
    }

    fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TokenMatrix {
        Matrix::new(n, d, random_params(rng, n * d)).unwrap()
    }

    #[test]
    fn encoding_positional_angles() {
        let cfg = QNetConfig::new(2, 2, 1).unwrap();
        let c = build_encoding(&cfg, &Matrix::zeros(2, 2)).unwrap();
        let rz: Vec<f64> = c
            .bind(&[])
            .unwrap()
            .into_iter()
            .filter(|g| g.kind == GateKind::Rz)
            .map(|g| g.angles[0])
            .collect();
        assert_eq!(rz, vec![0.0, 0.0, PI / 2.0, PI / 2.0]);

        let cfg = QNetConfig::new(4, 1, 1).unwrap();
        assert_eq!(positional_angle(2, cfg.n), PI / 2.0);
    }

    #[test]
    fn encoding_gate_counts_and_zero_input() {
        let cfg = QNetConfig::new(2, 2, 1).unwrap();
        let c = build_encoding(&cfg, &Matrix::zeros(2, 2)).unwrap();
        let counts = count_gates(&c);
        assert_eq!(counts.get(&GateKind::Rx), Some(&4));
        assert_eq!(counts.get(&GateKind::Rz), Some(&4));
        assert_eq!(counts.len(), 2);
        let s = c.execute(&[], StateVector::zero(4).unwrap()).unwrap();
        for z in s.z_expectations() {
            assert!((z - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_and_block_errors() {
        let cfg = QNetConfig::new(2, 2, 1).unwrap();
        assert!(build_encoding(&cfg, &Matrix::zeros(2, 3)).is_err());
        assert!(build_mixture_layer(&cfg, 1).is_err());
        assert!(build_feedforward_layer(&cfg, 5).is_err());
        assert!(QNetConfig::new(0, 2, 1).is_err());
        assert!(QNetConfig::new(9, 3, 1).is_err());
    }

    #[test]
    fn parameter_counts() {
        for (n, d, b, expected) in [(2, 2, 1, 18), (2, 2, 2, 36), (2, 3, 1, 27), (8, 2, 1, 18), (1, 1, 1, 9)] {
            let cfg = QNetConfig::new(n, d, b).unwrap();
            assert_eq!(count_parameters(&cfg), expected);
            let qc = QNetCircuit::new(cfg, Ablation::Full).unwrap();
            assert_eq!(qc.circuit().required_params(), expected + n * d);
        }
        assert_eq!(count_parameters(&QNetConfig { n: 8, d: 128, blocks: 2 }), 2304);
        // mixture alone uses 3 scalars per dimension
        let cfg = QNetConfig::new(4, 3, 1).unwrap();
        assert_eq!(build_mixture_layer(&cfg, 0).unwrap().required_params(), 9);
        // feedforward reaches the last slot of the block: 6d scalars after the mixture
        assert_eq!(build_feedforward_layer(&cfg, 0).unwrap().required_params(), 27);
    }

    #[test]
    fn mixture_with_zero_angles_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, d) in [(1, 3), (2, 2), (4, 2), (8, 1), (2, 4)] {
            let cfg = QNetConfig::new(n, d, 1).unwrap();
            let c = build_mixture_layer(&cfg, 0).unwrap();
            let params = vec![0.0; cfg.num_params()];
            for _ in 0..5 {
                let s = StateVector::random(n * d, &mut rng).unwrap();
                let out = c.execute(&params, s.clone()).unwrap();
                assert!(out.max_abs_diff(&s) <= 1e-10);
            }
        }
    }

    #[test]
    fn single_token_mixture_is_h_rot_h() {
        let cfg = QNetConfig::new(1, 1, 1).unwrap();
        let c = build_mixture_layer(&cfg, 0).unwrap();
        let kinds: Vec<GateKind> = c.ops().iter().map(|o| o.kind).collect();
        assert_eq!(kinds, vec![GateKind::H, GateKind::Rot3, GateKind::H]);
    }

    #[test]
    fn swap_elision_matches_full_qft_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, d) in [(2, 2), (3, 2), (4, 1), (5, 1)] {
            let cfg = QNetConfig::new(n, d, 1).unwrap();
            let params = random_params(&mut rng, cfg.num_params());
            let layout = cfg.layout();
            // explicit QFT† · ROT3^{⊗n} · QFT with bit-reversal swaps
            let mut explicit = Circuit::new(n * d).unwrap();
            for j in 0..d {
                let qs = layout.dim_qubits(j);
                let fwd = crate::sim::qft_ops(&qs, false).unwrap();
                explicit.extend_gates(fwd).unwrap();
                let s = BlockSlots::new(&cfg, 0).mixture(j);
                for &q in &qs {
                    explicit.push(GateKind::Rot3, vec![q], vec![], rot3_refs(s)).unwrap();
                }
                explicit.extend_gates(crate::sim::qft_ops(&qs, true).unwrap()).unwrap();
                assert_eq!(bit_reversal(&qs).len(), n / 2);
            }
            let elided = build_mixture_layer(&cfg, 0).unwrap();
            let s = StateVector::random(n * d, &mut rng).unwrap();
            let a = explicit.execute(&params, s.clone()).unwrap();
            let b = elided.execute(&params, s).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-10);
        }
    }

    /// Dense oracle for G on one token: H^{⊗d}, the permutation flipping the
    /// last qubit iff all others are 1, H^{⊗d}, built as explicit matrices.
    fn dense_g(d: usize) -> Vec<Vec<f64>> {
        let dim = 1usize << d;
        let h = |r: usize, c: usize| {
            let sign = if (r & c).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            sign / (dim as f64).sqrt()
        };
        let ctrl = (1usize << (d - 1)) - 1;
        let perm = |c: usize| if c & ctrl == ctrl { c ^ (1 << (d - 1)) } else { c };
        let mut g = vec![vec![0.0; dim]; dim];
        for r in 0..dim {
            for c in 0..dim {
                g[r][c] = (0..dim).map(|k| h(r, perm(k)) * h(k, c)).sum();
            }
        }
        g
    }

    #[test]
    fn g_fixes_all_zero_and_is_involution() {
        for d in 1..=4 {
            let g = dense_g(d);
            // column 0 of G is e_0
            for (r, row) in g.iter().enumerate() {
                let e = if r == 0 { 1.0 } else { 0.0 };
                assert!((row[0] - e).abs() < 1e-12, "d={d}");
            }
            let mut c = Circuit::new(d).unwrap();
            append_g(&mut c, &(0..d).collect::<Vec<_>>()).unwrap();
            let s = c.execute(&[], StateVector::zero(d).unwrap()).unwrap();
            assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let r = StateVector::random(d, &mut rng).unwrap();
            let twice = c.execute(&[], c.execute(&[], r.clone()).unwrap()).unwrap();
            assert!(twice.max_abs_diff(&r) < 1e-10);
            // simulator agrees with the dense matrix
            let out = c.execute(&[], r.clone()).unwrap();
            for (row, amp) in out.amplitudes().iter().enumerate() {
                let expected: num_complex::Complex64 =
                    g[row].iter().zip(r.amplitudes()).map(|(m, a)| a * *m).sum();
                assert!((amp - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn d_equal_one_g_is_pauli_z() {
        let mut c = Circuit::new(1).unwrap();
        append_g(&mut c, &[0]).unwrap();
        let s = c.execute(&[], StateVector::basis(1, 1).unwrap()).unwrap();
        assert!((s.amplitudes()[1].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_circuit_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, d, b) in [(2, 2, 1), (4, 2, 2), (2, 3, 1), (2, 4, 2), (8, 1, 1)] {
            let cfg = QNetConfig::new(n, d, b).unwrap();
            let c = build_qnet(&cfg, &random_x(&mut rng, n, d)).unwrap();
            let params = random_params(&mut rng, cfg.num_params());
            let s = StateVector::random(n * d, &mut rng).unwrap();
            let out = c.execute(&params, s.clone()).unwrap();
            let back = c.inverse().execute(&params, out).unwrap();
            assert!(back.max_abs_diff(&s) < 1e-9);
        }
    }

    #[test]
    fn zero_input_zero_params_measures_plus_one() {
        for (n, d, b) in [(2, 2, 1), (4, 2, 2), (2, 3, 1)] {
            let cfg = QNetConfig::new(n, d, b).unwrap();
            let out = qnet_forward(&cfg, &Matrix::zeros(n, d), &vec![0.0; cfg.num_params()], None).unwrap();
            for z in out.as_slice() {
                assert!((z - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outputs_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = QNetConfig::new(3, 2, 2).unwrap();
        for _ in 0..10 {
            let out = qnet_forward(
                &cfg,
                &random_x(&mut rng, 3, 2),
                &random_params(&mut rng, cfg.num_params()),
                None,
            )
            .unwrap();
            assert!(out.as_slice().iter().all(|z| (-1.0..=1.0).contains(z)));
        }
    }

    #[test]
    fn mixture_only_with_zero_params_equals_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = QNetConfig::new(3, 2, 2).unwrap();
        let x = random_x(&mut rng, 3, 2);
        let qc = QNetCircuit::new(cfg, Ablation::MixtureOnly).unwrap();
        let out = qc.forward(&vec![0.0; cfg.num_params()], &x, None, 1).unwrap();
        let enc = build_encoding(&cfg, &x).unwrap();
        let s = enc.execute(&[], StateVector::zero(6).unwrap()).unwrap();
        for (a, b) in out.as_slice().iter().zip(s.z_expectations()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(!qc.circuit().dump().contains("[ff["));
    }

    #[test]
    fn template_matches_constant_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = QNetConfig::new(3, 2, 1).unwrap();
        let x = random_x(&mut rng, 3, 2);
        let params = random_params(&mut rng, cfg.num_params());
        let qc = QNetCircuit::new(cfg, Ablation::Full).unwrap();
        let a = qc.forward(&params, &x, None, 1).unwrap();
        let c = build_qnet(&cfg, &x).unwrap();
        let s = c.execute(&params, StateVector::zero(6).unwrap()).unwrap();
        for (u, v) in a.as_slice().iter().zip(s.z_expectations()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_tokens_and_positions_permutes_qubits() {
        let cfg = QNetConfig::new(2, 1, 1).unwrap();
        let x = [0.7, -1.3];
        let pos = [0.0, PI / 2.0];
        let mut a = Circuit::new(2).unwrap();
        append_encoding_with(&mut a, &cfg, |i, _| Angle::Const(x[i]), |i| pos[i]).unwrap();
        let mut b = Circuit::new(2).unwrap();
        append_encoding_with(&mut b, &cfg, |i, _| Angle::Const(x[1 - i]), |i| pos[1 - i]).unwrap();
        let sa = a.execute(&[], StateVector::zero(2).unwrap()).unwrap();
        let sb = b.execute(&[], StateVector::zero(2).unwrap()).unwrap();
        for k in 0..4usize {
            let swapped = ((k & 1) << 1) | ((k >> 1) & 1);
            assert!((sa.amplitudes()[k] - sb.amplitudes()[swapped]).norm() < 1e-12);
        }
    }

    #[test]
    fn layout_is_bijective_and_reshape_round_trips() {
        let layout = QNetConfig::new(3, 4, 1).unwrap().layout();
        let mut seen = vec![false; 12];
        for i in 0..3 {
            for j in 0..4 {
                let q = layout.qubit(i, j);
                assert!(!seen[q]);
                seen[q] = true;
                assert_eq!(layout.token_dim(q), (i, j));
            }
        }
        assert!(seen.iter().all(|&s| s));
        let m = Matrix::new(3, 4, (0..12).map(f64::from).collect()).unwrap();
        let flat = m.as_slice().to_vec();
        for q in 0..12 {
            let (i, j) = layout.token_dim(q);
            assert_eq!(m.get(i, j), flat[q]);
        }
    }
}
