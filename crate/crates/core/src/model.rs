//! Hybrid models around QNet circuits.
//!
//! Two architectures share one parameter layout:
//!
//! * `qnet`: embeddings → one QNet circuit of `blocks` blocks → head.
//! * `resqnet`: embeddings → `blocks` residual blocks → head, where a block
//!   maps `h` to `normalize(h + qnet(h ⊙ w))` with a depth-1 QNet and a
//!   per-block scale vector `w` of length `d`.
//!
//! `normalize` is parameter-free per-token standardization over the `d`
//! axis. Heads either flatten the `n × d` encoder output (sentence-level)
//! or project every position with a shared `d × C` matrix (token-level).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{vjp, GradientMode};
use crate::data::{LabelSpace, Target, TokenizedExample, Vocab};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qnet::{count_parameters, Ablation, QNetCircuit, QNetConfig};
use crate::sim::{derive_seed, NoiseSpec, StateVector};

pub const NORM_EPS: f64 = 1e-5;
pub const CHECKPOINT_FORMAT: u32 = 1;
/// Tag id reserved for "outside any entity".
pub const O_TAG_ID: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Qnet,
    Resqnet,
}

/// Output layer. A sentence classifier with one class is a binary
/// classifier trained on a single logit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    SentenceClassify { classes: usize },
    Regress,
    TokenClassify { classes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Cce,
    Mse,
    TokenCce,
}

impl HeadKind {
    pub fn outputs(&self) -> usize {
        match *self {
            HeadKind::SentenceClassify { classes } | HeadKind::TokenClassify { classes } => classes,
            HeadKind::Regress => 1,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match *self {
            HeadKind::SentenceClassify { classes: 1 } => LossKind::Bce,
            HeadKind::SentenceClassify { .. } => LossKind::Cce,
            HeadKind::Regress => LossKind::Mse,
            HeadKind::TokenClassify { .. } => LossKind::TokenCce,
        }
    }

    pub fn is_token_level(&self) -> bool {
        matches!(self, HeadKind::TokenClassify { .. })
    }

    /// Rows of the head weight matrix.
    pub fn input_width(&self, n: usize, d: usize) -> usize {
        if self.is_token_level() {
            d
        } else {
            n * d
        }
    }

    /// Head suited to a label space: binary classes collapse to one logit.
    pub fn for_labels(labels: &LabelSpace) -> Self {
        match labels {
            LabelSpace::Real => HeadKind::Regress,
            LabelSpace::Tags(t) => HeadKind::TokenClassify { classes: t.len() },
            LabelSpace::Classes(c) if c.len() <= 2 => HeadKind::SentenceClassify { classes: 1 },
            LabelSpace::Classes(c) => HeadKind::SentenceClassify { classes: c.len() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub n: usize,
    pub d: usize,
    pub blocks: usize,
    pub head: HeadKind,
    #[serde(default)]
    pub ablation: Ablation,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.qnet_config().validate()?;
        if self.vocab_size < 2 {
            return Err(Error::argument("vocabulary must hold at least PAD and UNK"));
        }
        match self.head {
            HeadKind::SentenceClassify { classes: 0 } => {
                Err(Error::argument("sentence classifier needs at least one class"))
            }
            HeadKind::TokenClassify { classes } if classes < 2 => {
                Err(Error::argument("token classifier needs at least two tags"))
            }
            _ => Ok(()),
        }
    }

    /// Shape of each QNet circuit in the model.
    pub fn qnet_config(&self) -> QNetConfig {
        let blocks = match self.model {
            ModelKind::Qnet => self.blocks,
            ModelKind::Resqnet => 1,
        };
        QNetConfig {
            n: self.n,
            d: self.d,
            blocks,
        }
    }

    pub fn num_circuits(&self) -> usize {
        match self.model {
            ModelKind::Qnet => 1,
            ModelKind::Resqnet => self.blocks,
        }
    }

    pub fn num_scale_vectors(&self) -> usize {
        match self.model {
            ModelKind::Qnet => 0,
            ModelKind::Resqnet => self.blocks,
        }
    }

    /// Encoder parameters: circuit angles plus scale vectors. Embeddings and
    /// the head are not counted.
    pub fn encoder_parameter_count(&self) -> usize {
        self.num_circuits() * count_parameters(&self.qnet_config()) + self.num_scale_vectors() * self.d
    }
}

/// Standardizes one row; returns the output and `1/σ`.
fn normalize_row(x: &[f64]) -> (Vec<f64>, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    (x.iter().map(|v| (v - mean) * inv).collect(), inv)
}

/// Per-row zero mean, unit (population) variance with `ε = 1e-5`.
pub fn normalize(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(&normalize_row(x.row(r)).0);
    }
    out
}

/// Vector-Jacobian product of [`normalize`] given its output `y`.
pub fn normalize_backward(x: &Matrix, y: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    let d = x.cols() as f64;
    for r in 0..x.rows() {
        let inv = normalize_row(x.row(r)).1;
        let (yr, gr) = (y.row(r), dy.row(r));
        let mean_g = gr.iter().sum::<f64>() / d;
        let mean_gy = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / d;
        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = inv * (gr[c] - mean_g - yr[c] * mean_gy);
        }
    }
    dx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    /// `input_width × outputs`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Raw head output: logits (or the regression value) per sentence, or a
/// `n × C` logit matrix for token heads.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadOutput {
    Sentence(Vec<f64>),
    Tokens(Matrix),
}

impl TaskHead {
    pub fn zeros(kind: HeadKind, n: usize, d: usize) -> Self {
        Self {
            weight: Matrix::zeros(kind.input_width(n, d), kind.outputs()),
            bias: vec![0.0; kind.outputs()],
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (k, xk) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.weight.row(k)) {
                *o += xk * w;
            }
        }
        out
    }

    pub fn apply(&self, kind: HeadKind, h: &Matrix) -> HeadOutput {
        if kind.is_token_level() {
            let rows: Vec<f64> = (0..h.rows()).flat_map(|i| self.project(h.row(i))).collect();
            HeadOutput::Tokens(Matrix::new(h.rows(), kind.outputs(), rows).expect("shape"))
        } else {
            HeadOutput::Sentence(self.project(h.as_slice()))
        }
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grad`; returns `∂L/∂h`.
    fn backward(&self, kind: HeadKind, h: &Matrix, dout: &HeadOutput, grad: &mut TaskHead) -> Matrix {
        let mut dh = Matrix::zeros(h.rows(), h.cols());
        let mut step = |x: &[f64], dz: &[f64], dx: &mut [f64]| {
            for (k, xk) in x.iter().enumerate() {
                let wrow = self.weight.row(k);
                let grow = grad.weight.row_mut(k);
                for c in 0..dz.len() {
                    grow[c] += xk * dz[c];
                    dx[k] += wrow[c] * dz[c];
                }
            }
            for (b, g) in grad.bias.iter_mut().zip(dz) {
                *b += g;
            }
        };
        match dout {
            HeadOutput::Sentence(dz) => step(h.as_slice(), dz, dh.as_mut_slice()),
            HeadOutput::Tokens(dz) => {
                debug_assert!(kind.is_token_level());
                for i in 0..h.rows() {
                    step(h.row(i), dz.row(i), dh.row_mut(i));
                }
            }
        }
        dh
    }
}

/// All trainable values, grouped. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `vocab_size × d`; row 0 is the (trainable) PAD embedding.
    pub embeddings: Matrix,
    /// One row of length `d` per residual block (zero rows for `qnet`).
    pub scales: Matrix,
    /// One parameter table per circuit.
    pub qnet: Matrix,
    pub head: TaskHead,
}

pub const PARAM_GROUPS: [&str; 5] = ["embeddings", "scales", "qnet", "head.weight", "head.bias"];

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            embeddings: Matrix::zeros(config.vocab_size, config.d),
            scales: Matrix::zeros(config.num_scale_vectors(), config.d),
            qnet: Matrix::zeros(config.num_circuits(), config.qnet_config().num_params()),
            head: TaskHead::zeros(config.head, config.n, config.d),
        }
    }

    /// Seeded initialization: angles uniform in `[−0.1, 0.1]`, embeddings
    /// `N(0, 0.5)`, head weights `N(0, d^{-1/2})` with zero bias, scales 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        let emb = Normal::new(0.0, 0.5).expect("valid std");
        p.embeddings.as_mut_slice().iter_mut().for_each(|v| *v = rng.sample(emb));
        p.scales.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
        p.qnet
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.1..=0.1));
        let head = Normal::new(0.0, (config.d as f64).powf(-0.5)).expect("valid std");
        p.head.weight.as_mut_slice().iter_mut().for_each(|v| *v = rng.sample(head));
        p
    }

    /// `(name, values)` for every group, in [`PARAM_GROUPS`] order.
    pub fn groups(&self) -> [(&'static str, &[f64]); 5] {
        [
            (PARAM_GROUPS[0], self.embeddings.as_slice()),
            (PARAM_GROUPS[1], self.scales.as_slice()),
            (PARAM_GROUPS[2], self.qnet.as_slice()),
            (PARAM_GROUPS[3], self.head.weight.as_slice()),
            (PARAM_GROUPS[4], &self.head.bias),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut [f64]); 5] {
        [
            (PARAM_GROUPS[0], self.embeddings.as_mut_slice()),
            (PARAM_GROUPS[1], self.scales.as_mut_slice()),
            (PARAM_GROUPS[2], self.qnet.as_mut_slice()),
            (PARAM_GROUPS[3], self.head.weight.as_mut_slice()),
            (PARAM_GROUPS[4], &mut self.head.bias),
        ]
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, a) in self.groups_mut() {
            a.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let want = Self::zeros(config);
        for ((name, a), (_, b)) in self.groups().into_iter().zip(want.groups()) {
            if a.len() != b.len() {
                return Err(Error::argument(format!(
                    "parameter group `{name}` has {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        let shapes = [
            (self.embeddings.shape(), want.embeddings.shape(), "embeddings"),
            (self.scales.shape(), want.scales.shape(), "scales"),
            (self.qnet.shape(), want.qnet.shape(), "qnet"),
            (self.head.weight.shape(), want.head.weight.shape(), "head.weight"),
        ];
        for (got, expected, name) in shapes {
            if got != expected {
                return Err(Error::argument(format!(
                    "parameter group `{name}` has shape {got:?}, expected {expected:?}"
                )));
            }
        }
        Ok(())
    }
}

/// How circuits are executed and differentiated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecOptions {
    pub mode: GradientMode,
    pub noise: Option<NoiseSpec>,
    /// Trajectories averaged per noisy expectation.
    pub trajectories: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            mode: GradientMode::Adjoint,
            noise: None,
            trajectories: 1,
        }
    }
}

impl ExecOptions {
    /// Parameter-shift gradients over `trajectories`-averaged noisy
    /// expectations.
    pub fn noisy(noise: NoiseSpec, trajectories: usize) -> Self {
        Self {
            mode: GradientMode::ParameterShift { trajectories },
            noise: Some(noise),
            trajectories,
        }
    }

    /// Same options with the noise seed replaced by one derived from `salt`.
    pub fn salted(&self, salt: u64) -> Self {
        Self {
            noise: self.noise.map(|n| n.reseeded(derive_seed(n.seed, salt))),
            ..*self
        }
    }
}

/// Intermediate values kept for the backward pass.
struct Trace {
    h0: Matrix,
    /// Per residual block: input `h`, scaled input `u`, pre-norm sum, output.
    blocks: Vec<(Matrix, Matrix, Matrix, Matrix)>,
    features: Matrix,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    circuit: QNetCircuit,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        let circuit = QNetCircuit::new(config.qnet_config(), config.ablation)?;
        Ok(Self {
            config,
            circuit,
            params,
        })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Self::new(config, ModelParams::init(&config, seed))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn circuit(&self) -> &QNetCircuit {
        &self.circuit
    }

    fn embed(&self, ids: &[usize]) -> Result<Matrix> {
        if ids.len() != self.config.n {
            return Err(Error::argument(format!(
                "expected {} token ids, got {}",
                self.config.n,
                ids.len()
            )));
        }
        let d = self.config.d;
        let mut h = Matrix::zeros(self.config.n, d);
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.config.vocab_size {
                return Err(Error::argument(format!(
                    "token id {id} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            h.row_mut(i).copy_from_slice(self.params.embeddings.row(id));
        }
        Ok(h)
    }

    /// Checks ids and target against the model shape without running it.
    pub fn check_example(&self, example: &TokenizedExample) -> Result<()> {
        let cfg = &self.config;
        if example.ids.len() != cfg.n {
            return Err(Error::data(format!(
                "example has {} token ids, model expects {}",
                example.ids.len(),
                cfg.n
            )));
        }
        if let Some(id) = example.ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(Error::data(format!("token id {id} outside vocabulary of {}", cfg.vocab_size)));
        }
        let classes = cfg.head.outputs().max(2);
        match (cfg.head, &example.target) {
            (HeadKind::SentenceClassify { .. }, Target::Class(c)) if *c < classes => Ok(()),
            (HeadKind::Regress, Target::Value(v)) if v.is_finite() => Ok(()),
            (HeadKind::TokenClassify { .. }, Target::Tags { tags, mask })
                if tags.len() == cfg.n && mask.len() == cfg.n && tags.iter().all(|t| *t < classes) =>
            {
                Ok(())
            }
            (_, target) => Err(Error::data(format!("target {target:?} does not fit head {:?}", cfg.head))),
        }
    }

    fn run_circuit(&self, index: usize, x: &Matrix, opts: &ExecOptions) -> Result<Matrix> {
        let noise = opts.salted(index as u64).noise;
        self.circuit
            .forward(self.params.qnet.row(index), x, noise.as_ref(), opts.trajectories.max(1))
    }

    fn trace(&self, ids: &[usize], opts: &ExecOptions) -> Result<(Trace, HeadOutput)> {
        let h0 = self.embed(ids)?;
        let mut blocks = Vec::new();
        let features = match self.config.model {
            ModelKind::Qnet => self.run_circuit(0, &h0, opts)?,
            ModelKind::Resqnet => {
                let mut h = h0.clone();
                for b in 0..self.config.blocks {
                    let w = self.params.scales.row(b);
                    let mut u = h.clone();
                    for i in 0..u.rows() {
                        u.row_mut(i).iter_mut().zip(w).for_each(|(x, s)| *x *= s);
                    }
                    let y = self.run_circuit(b, &u, opts)?;
                    let mut sum = h.clone();
                    sum.as_mut_slice().iter_mut().zip(y.as_slice()).for_each(|(a, b)| *a += b);
                    let out = normalize(&sum);
                    blocks.push((h, u, sum, out.clone()));
                    h = out;
                }
                h
            }
        };
        let output = self.params.head.apply(self.config.head, &features);
        Ok((Trace { h0, blocks, features }, output))
    }

    /// Encoder output (`n × d`) before the head.
    pub fn encode(&self, ids: &[usize], opts: &ExecOptions) -> Result<Matrix> {
        Ok(self.trace(ids, opts)?.0.features)
    }

    pub fn forward(&self, ids: &[usize], opts: &ExecOptions) -> Result<HeadOutput> {
        Ok(self.trace(ids, opts)?.1)
    }

    pub fn loss(&self, example: &TokenizedExample, opts: &ExecOptions) -> Result<f64> {
        let out = self.forward(&example.ids, opts)?;
        Ok(loss_with_grad(&out, &example.target, self.config.head.loss_kind())?.0)
    }

    /// Loss and its gradient with respect to every parameter group.
    pub fn loss_and_grad(&self, example: &TokenizedExample, opts: &ExecOptions) -> Result<(f64, ModelParams)> {
        let (trace, out) = self.trace(&example.ids, opts)?;
        let (loss, dout) = loss_with_grad(&out, &example.target, self.config.head.loss_kind())?;
        let mut grad = ModelParams::zeros(&self.config);
        let mut dh = self
            .params
            .head
            .backward(self.config.head, &trace.features, &dout, &mut grad.head);
        match self.config.model {
            ModelKind::Qnet => {
                dh = self.circuit_vjp(0, &trace.h0, &dh, opts, &mut grad)?;
            }
            ModelKind::Resqnet => {
                for (b, (h, u, sum, out)) in trace.blocks.iter().enumerate().rev() {
                    let ds = normalize_backward(sum, out, &dh);
                    let du = self.circuit_vjp(b, u, &ds, opts, &mut grad)?;
                    let w = self.params.scales.row(b).to_vec();
                    let gw = grad.scales.row_mut(b);
                    dh = ds;
                    for i in 0..h.rows() {
                        for j in 0..h.cols() {
                            gw[j] += du.get(i, j) * h.get(i, j);
                            let v = dh.get(i, j) + du.get(i, j) * w[j];
                            dh.set(i, j, v);
                        }
                    }
                }
            }
        }
        for (i, &id) in example.ids.iter().enumerate() {
            let row = grad.embeddings.row_mut(id);
            row.iter_mut().zip(dh.row(i)).for_each(|(g, d)| *g += d);
        }
        Ok((loss, grad))
    }

    /// Accumulates circuit parameter gradients into `grad.qnet[index]` and
    /// returns the gradient with respect to the circuit input.
    fn circuit_vjp(
        &self,
        index: usize,
        x: &Matrix,
        dy: &Matrix,
        opts: &ExecOptions,
        grad: &mut ModelParams,
    ) -> Result<Matrix> {
        let bound = self.circuit.bind_vector(self.params.qnet.row(index), x)?;
        let zero = StateVector::zero(self.circuit.config().num_qubits())?;
        let salted = opts.salted(index as u64);
        let r = vjp(
            self.circuit.circuit(),
            &bound,
            &zero,
            dy.as_slice(),
            opts.mode,
            salted.noise.as_ref(),
        )?;
        let p = self.circuit.num_params();
        grad.qnet
            .row_mut(index)
            .iter_mut()
            .zip(&r.gradient[..p])
            .for_each(|(g, v)| *g += v);
        Matrix::new(x.rows(), x.cols(), r.gradient[p..].to_vec())
    }

    /// Mean loss and task metrics over `examples`, evaluated in parallel.
    pub fn evaluate(&self, examples: &[TokenizedExample], opts: &ExecOptions) -> Result<EvalMetrics> {
        let outputs: Vec<HeadOutput> = examples
            .par_iter()
            .enumerate()
            .map(|(k, ex)| self.forward(&ex.ids, &opts.salted(1 << 32 | k as u64)))
            .collect::<Result<_>>()?;
        evaluate_outputs(self.config.head, &outputs, examples)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, `softplus(z) − y·z`, and `∂/∂z`.
pub fn bce_with_logit(z: f64, y: f64) -> (f64, f64) {
    let loss = z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
    (loss, sigmoid(z) - y)
}

/// Categorical cross-entropy on logits and `∂/∂logits`.
pub fn cce_with_logits(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::data(format!(
            "label {label} outside {} classes",
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits);
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    grad[label] -= 1.0;
    Ok((lse - logits[label], grad))
}

/// Mean cross-entropy over unmasked positions.
pub fn token_cce(logits: &Matrix, tags: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    if tags.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::argument("tag and mask lengths must match the sequence"));
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::data("every position is padding; token loss is undefined"));
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for i in 0..logits.rows() {
        if mask[i] {
            let (l, g) = cce_with_logits(logits.row(i), tags[i])?;
            total += l;
            grad.row_mut(i)
                .iter_mut()
                .zip(g)
                .for_each(|(o, v)| *o = v / count as f64);
        }
    }
    Ok((total / count as f64, grad))
}

/// Loss of a head output against its target, with the output gradient.
pub fn loss_with_grad(output: &HeadOutput, target: &Target, kind: LossKind) -> Result<(f64, HeadOutput)> {
    match (kind, output, target) {
        (LossKind::Bce, HeadOutput::Sentence(z), Target::Class(c)) if z.len() == 1 => {
            if *c > 1 {
                return Err(Error::data(format!("binary label must be 0 or 1, got {c}")));
            }
            let (l, g) = bce_with_logit(z[0], *c as f64);
            Ok((l, HeadOutput::Sentence(vec![g])))
        }
        (LossKind::Cce, HeadOutput::Sentence(z), Target::Class(c)) => {
            let (l, g) = cce_with_logits(z, *c)?;
            Ok((l, HeadOutput::Sentence(g)))
        }
        (LossKind::Mse, HeadOutput::Sentence(z), Target::Value(t)) if z.len() == 1 => {
            let r = z[0] - t;
            Ok((r * r, HeadOutput::Sentence(vec![2.0 * r])))
        }
        (LossKind::TokenCce, HeadOutput::Tokens(z), Target::Tags { tags, mask }) => {
            let (l, g) = token_cce(z, tags, mask)?;
            Ok((l, HeadOutput::Tokens(g)))
        }
        _ => Err(Error::argument(format!(
            "{kind:?} loss does not fit this head output and target"
        ))),
    }
}

pub fn loss(output: &HeadOutput, target: &Target, kind: LossKind) -> Result<f64> {
    Ok(loss_with_grad(output, target, kind)?.0)
}

/// Class decision for a sentence logit vector: the sign for a single
/// logit, otherwise the argmax.
pub fn predicted_class(logits: &[f64]) -> usize {
    if logits.len() == 1 {
        return (logits[0] > 0.0) as usize;
    }
    argmax(logits)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

pub fn predicted_tags(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

/// Micro-averaged F1 over every tag except `o_tag`, skipping masked-out
/// positions. Zero when nothing non-O is predicted correctly.
pub fn metric_f1_non_o(pred: &[usize], gold: &[usize], o_tag: usize, mask: &[bool]) -> f64 {
    let (tp, fp, fn_) = f1_counts(pred, gold, o_tag, mask);
    f1_from_counts(tp, fp, fn_)
}

fn f1_counts(pred: &[usize], gold: &[usize], o_tag: usize, mask: &[bool]) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for ((&p, &g), &m) in pred.iter().zip(gold).zip(mask) {
        if !m {
            continue;
        }
        if p == g {
            if g != o_tag {
                counts.0 += 1;
            }
            continue;
        }
        if p != o_tag {
            counts.1 += 1;
        }
        if g != o_tag {
            counts.2 += 1;
        }
    }
    counts
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_non_o: Option<f64>,
    pub examples: usize,
}

/// Aggregates losses and metrics; token metrics are micro-averaged over
/// every unmasked position in the set.
pub fn evaluate_outputs(head: HeadKind, outputs: &[HeadOutput], examples: &[TokenizedExample]) -> Result<EvalMetrics> {
    if examples.is_empty() {
        return Err(Error::data("cannot evaluate an empty example set"));
    }
    let kind = head.loss_kind();
    let mut total = 0.0;
    let (mut correct, mut seen) = (0usize, 0usize);
    let mut counts = (0, 0, 0);
    for (out, ex) in outputs.iter().zip(examples) {
        total += loss(out, &ex.target, kind)?;
        match (out, &ex.target) {
            (HeadOutput::Sentence(z), Target::Class(c)) => {
                correct += (predicted_class(z) == *c) as usize;
                seen += 1;
            }
            (HeadOutput::Tokens(z), Target::Tags { tags, mask }) => {
                let pred = predicted_tags(z);
                for i in 0..tags.len() {
                    if mask[i] {
                        correct += (pred[i] == tags[i]) as usize;
                        seen += 1;
                    }
                }
                let c = f1_counts(&pred, tags, O_TAG_ID, mask);
                counts = (counts.0 + c.0, counts.1 + c.1, counts.2 + c.2);
            }
            _ => {}
        }
    }
    Ok(EvalMetrics {
        loss: total / examples.len() as f64,
        accuracy: (seen > 0).then(|| correct as f64 / seen as f64),
        f1_non_o: head
            .is_token_level()
            .then(|| f1_from_counts(counts.0, counts.1, counts.2)),
        examples: examples.len(),
    })
}

/// On-disk parameter layout; matrices are lists of rows, the head is the
/// row-major weight followed by the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParams {
    pub embeddings: Vec<Vec<f64>>,
    pub scales: Vec<Vec<f64>>,
    pub qnet: Vec<Vec<f64>>,
    pub head: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: ModelConfig,
    pub params: CheckpointParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelSpace>,
}

fn matrix_from_rows(rows: &[Vec<f64>], expected: (usize, usize), name: &str) -> Result<Matrix> {
    let bad = || {
        Error::data(format!(
            "checkpoint `{name}` must be {}×{}",
            expected.0, expected.1
        ))
    };
    if rows.len() != expected.0 || rows.iter().any(|r| r.len() != expected.1) {
        return Err(bad());
    }
    Matrix::new(expected.0, expected.1, rows.concat()).map_err(|_| bad())
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: Option<&Vocab>, labels: Option<&LabelSpace>) -> Self {
        let p = &model.params;
        let mut head = p.head.weight.as_slice().to_vec();
        head.extend_from_slice(&p.head.bias);
        Self {
            format: CHECKPOINT_FORMAT,
            config: model.config,
            params: CheckpointParams {
                embeddings: p.embeddings.to_rows(),
                scales: p.scales.to_rows(),
                qnet: p.qnet.to_rows(),
                head,
            },
            vocab: vocab.map(|v| v.tokens().to_vec()),
            labels: labels.cloned(),
        }
    }

    /// Rebuilds the model, validating the format and every shape.
    pub fn into_model(&self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!(
                "unsupported checkpoint format {}",
                self.format
            )));
        }
        let config = self.config;
        config.validate()?;
        let want = ModelParams::zeros(&config);
        let embeddings = matrix_from_rows(&self.params.embeddings, want.embeddings.shape(), "embeddings")?;
        let scales = matrix_from_rows(&self.params.scales, want.scales.shape(), "scales")?;
        let qnet = matrix_from_rows(&self.params.qnet, want.qnet.shape(), "qnet")?;
        let (rows, cols) = want.head.weight.shape();
        if self.params.head.len() != rows * cols + cols {
            return Err(Error::data(format!(
                "checkpoint `head` must hold {} values",
                rows * cols + cols
            )));
        }
        let (w, b) = self.params.head.split_at(rows * cols);
        let head = TaskHead {
            weight: Matrix::new(rows, cols, w.to_vec())?,
            bias: b.to_vec(),
        };
        if let Some(v) = &self.vocab {
            if v.len() != config.vocab_size {
                return Err(Error::data("checkpoint vocabulary size does not match its config"));
            }
        }
        Model::new(
            config,
            ModelParams {
                embeddings,
                scales,
                qnet,
                head,
            },
        )
    }

    pub fn vocab(&self) -> Option<Vocab> {
        self.vocab.clone().map(Vocab::from_tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::data_at(e.line(), e.to_string()))
    }
}
