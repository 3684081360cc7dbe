//! Adam with cosine learning-rate decay, seeded batch sampling and the
//! metrics stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TokenizedExample;
use crate::error::{Error, Result};
use crate::model::{EvalMetrics, ExecOptions, Model, ModelParams};
use crate::sim::{derive_seed, NoiseSpec};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.98;
pub const ADAM_EPS: f64 = 1e-7;
pub const INITIAL_LR: f64 = 3e-4;
pub const COSINE_ALPHA: f64 = 1e-2;

/// `initial_lr × batch_size × num_nodes`
pub fn global_lr(initial_lr: f64, batch_size: usize, num_nodes: usize) -> f64 {
    initial_lr * batch_size as f64 * num_nodes as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub batch_size: usize,
    pub num_nodes: usize,
    pub total_steps: usize,
    pub alpha: f64,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, batch_size: usize, total_steps: usize) -> Result<Self> {
        let s = Self {
            initial_lr,
            batch_size,
            num_nodes: 1,
            total_steps,
            alpha: COSINE_ALPHA,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.batch_size == 0 || self.num_nodes == 0 {
            return Err(Error::argument("total_steps, batch_size and num_nodes must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::argument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(Error::argument(format!("initial lr {} must be positive", self.initial_lr)));
        }
        Ok(())
    }

    pub fn global_lr(&self) -> f64 {
        global_lr(self.initial_lr, self.batch_size, self.num_nodes)
    }

    /// Cosine decay from `global_lr` at step 0 to `alpha·global_lr` at
    /// `total_steps`.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::argument(format!(
                "step {step} beyond schedule of {} steps",
                self.total_steps
            )));
        }
        let progress = step as f64 / self.total_steps as f64;
        let cosine = 0.5 * (1.0 + (progress * std::f64::consts::PI).cos());
        Ok(self.global_lr() * (cosine * (1.0 - self.alpha) + self.alpha))
    }
}

/// Bias-corrected Adam moments, one vector pair per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(group_sizes: &[usize]) -> Self {
        Self {
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_params(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.groups().iter().map(|(_, g)| g.len()).collect();
        Self::new(&sizes)
    }

    /// One update over named groups `(name, params, grads)`. Every gradient
    /// is checked for finiteness before anything moves.
    pub fn step(&mut self, groups: &mut [(&str, &mut [f64], &[f64])], lr: f64) -> Result<()> {
        if groups.len() != self.m.len() {
            return Err(Error::argument(format!(
                "optimizer tracks {} groups, got {}",
                self.m.len(),
                groups.len()
            )));
        }
        for (k, (name, params, grads)) in groups.iter().enumerate() {
            if params.len() != self.m[k].len() || grads.len() != params.len() {
                return Err(Error::argument(format!("group `{name}` changed shape")));
            }
            if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::Training {
                    group: name.to_string(),
                    msg: format!("non-finite gradient {} at index {i}", grads[i]),
                });
            }
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for (k, (_, params, grads)) in groups.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to every model parameter group.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
    let grad_groups = grads.groups();
    let mut groups: Vec<(&str, &mut [f64], &[f64])> = params
        .groups_mut()
        .into_iter()
        .zip(grad_groups)
        .map(|((name, p), (_, g))| (name, p, g))
        .collect();
    state.step(&mut groups, lr)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub initial_lr: f64,
    pub num_nodes: usize,
    pub alpha: f64,
    /// Depolarizing probability; `None` or `0` trains noise-free with
    /// adjoint gradients.
    pub noise: Option<f64>,
    pub trajectories: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            steps_per_epoch: 100,
            batch_size: 128,
            seed: 0,
            initial_lr: INITIAL_LR,
            num_nodes: 1,
            alpha: COSINE_ALPHA,
            noise: None,
            trajectories: 8,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        let s = LrSchedule {
            initial_lr: self.initial_lr,
            batch_size: self.batch_size,
            num_nodes: self.num_nodes,
            total_steps: self.total_steps(),
            alpha: self.alpha,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn exec_options(&self) -> Result<ExecOptions> {
        match self.noise {
            Some(p) if p != 0.0 => {
                if self.trajectories == 0 {
                    return Err(Error::argument("trajectories must be >= 1"));
                }
                Ok(ExecOptions::noisy(NoiseSpec::new(p, self.seed)?, self.trajectories))
            }
            _ => Ok(ExecOptions::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::argument("epochs, steps_per_epoch and batch_size must be >= 1"));
        }
        self.schedule()?;
        self.exec_options()?;
        Ok(())
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalMetrics>,
}

/// Indices of the batch drawn (with replacement) for `step`.
pub fn sample_batch(seed: u64, step: usize, batch_size: usize, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, step as u64));
    (0..batch_size).map(|_| rng.random_range(0..len)).collect()
}

/// Mean loss and mean gradient over a batch. Examples run in parallel;
/// the reduction runs in batch order so results do not depend on the
/// worker count.
pub fn batch_gradient(
    model: &Model,
    examples: &[&TokenizedExample],
    opts: &ExecOptions,
    salt: u64,
) -> Result<(f64, ModelParams)> {
    let parts: Vec<(f64, ModelParams)> = examples
        .par_iter()
        .enumerate()
        .map(|(k, ex)| model.loss_and_grad(ex, &opts.salted(derive_seed(salt, k as u64))))
        .collect::<Result<_>>()?;
    let mut grad = ModelParams::zeros(model.config());
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grad.add_assign(g);
    }
    let scale = 1.0 / examples.len() as f64;
    grad.scale(scale);
    Ok((loss * scale, grad))
}

/// Runs `epochs × steps_per_epoch` Adam steps, handing every metrics record
/// to `on_record` as it is produced. The last step of each epoch carries
/// evaluation metrics on `eval` when given.
pub fn train_with(
    model: &mut Model,
    data: &[TokenizedExample],
    eval: Option<&[TokenizedExample]>,
    config: &TrainConfig,
    mut on_record: impl FnMut(&MetricRecord) -> Result<()>,
) -> Result<Vec<MetricRecord>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    for ex in data.iter().chain(eval.unwrap_or(&[])) {
        model.check_example(ex)?;
    }
    let schedule = config.schedule()?;
    let opts = config.exec_options()?;
    let mut adam = AdamState::for_params(&model.params);
    let mut records = Vec::with_capacity(config.total_steps());
    for step in 0..config.total_steps() {
        let batch: Vec<&TokenizedExample> = sample_batch(config.seed, step, config.batch_size, data.len())
            .into_iter()
            .map(|i| &data[i])
            .collect();
        let lr = schedule.lr_at(step)?;
        let (loss, grad) = batch_gradient(model, &batch, &opts, derive_seed(config.seed ^ 0x5EED, step as u64))?;
        adam_step(&mut adam, &mut model.params, &grad, lr)?;
        let epoch_end = (step + 1) % config.steps_per_epoch == 0;
        let eval_metrics = match (epoch_end, eval) {
            (true, Some(set)) if !set.is_empty() => Some(model.evaluate(set, &ExecOptions::default())?),
            _ => None,
        };
        let record = MetricRecord {
            step: step + 1,
            epoch: step / config.steps_per_epoch + 1,
            lr,
            loss,
            eval: eval_metrics,
        };
        on_record(&record)?;
        records.push(record);
    }
    Ok(records)
}

pub fn train(
    model: &mut Model,
    data: &[TokenizedExample],
    eval: Option<&[TokenizedExample]>,
    config: &TrainConfig,
) -> Result<Vec<MetricRecord>> {
    train_with(model, data, eval, config, |_| Ok(()))
}

/// Sample standard deviation of a loss curve, the jitter summary reported
/// by noise sweeps.
pub fn loss_jitter(losses: &[f64]) -> f64 {
    if losses.len() < 2 {
        return 0.0;
    }
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (losses.len() - 1) as f64).sqrt()
}

/// Mean loss over the first and the last quarter of a curve.
pub fn loss_endpoints(losses: &[f64]) -> (f64, f64) {
    if losses.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let w = (losses.len() / 4).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&losses[..w]), mean(&losses[losses.len() - w..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synthetic_corpora, LabelKind, SyntheticKind};
    use crate::model::{HeadKind, ModelConfig, ModelKind};
    use crate::qnet::Ablation;
    use proptest::prelude::*;

    #[test]
    fn global_lr_values() {
        assert_eq!(global_lr(3e-4, 128, 1), 0.0384);
        assert_eq!(global_lr(3e-4, 1, 1), 3e-4);
        assert!((global_lr(3e-4, 8, 1) - 2.4e-3).abs() < 1e-18);
    }

    #[test]
    fn cosine_landmarks() {
        let s = LrSchedule::new(3e-4, 128, 500).unwrap();
        let g = s.global_lr();
        assert!((s.lr_at(0).unwrap() - g).abs() < 1e-18);
        assert!((s.lr_at(250).unwrap() - 0.505 * g).abs() < 1e-15);
        assert!((s.lr_at(500).unwrap() - 0.01 * g).abs() < 1e-15);
        assert!(s.lr_at(501).is_err());
        assert!(LrSchedule::new(3e-4, 128, 0).is_err());
    }

    #[test]
    fn adam_hand_computed_steps() {
        let mut st = AdamState::new(&[1]);
        let mut p = [0.0];
        st.step(&mut [("w", &mut p, &[1.0])], 0.1).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-7)).abs() < 1e-15);
        let before = p[0];
        st.step(&mut [("w", &mut p, &[1.0])], 0.1).unwrap();
        // constant gradient: m̂ = v̂ = 1 again
        let m_hat: f64 = (0.9 * 0.1 + 0.1) / (1.0 - 0.81);
        assert!((m_hat - 1.0).abs() < 1e-12);
        assert!(p[0] < before);

        let mut st = AdamState::new(&[3]);
        let mut p = [1.0, 2.0, 3.0];
        st.step(&mut [("w", &mut p, &[0.0; 3])], 0.5).unwrap();
        assert_eq!(p, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn adam_names_bad_group() {
        let mut st = AdamState::new(&[1, 2]);
        let (mut a, mut b) = ([0.0], [0.0, 0.0]);
        let err = st
            .step(&mut [("embeddings", &mut a, &[1.0]), ("qnet", &mut b, &[0.0, f64::NAN])], 0.1)
            .unwrap_err();
        match err {
            Error::Training { group, .. } => assert_eq!(group, "qnet"),
            e => panic!("{e}"),
        }
        assert_eq!(a, [0.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn jitter_and_endpoints() {
        assert!(loss_jitter(&[0.7; 10]) < 1e-15);
        assert_eq!(loss_jitter(&[1.0]), 0.0);
        // sample std of {1, 3} is √2
        assert!((loss_jitter(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(loss_endpoints(&[4.0, 3.0, 2.0, 1.0]), (4.0, 1.0));
    }

    fn keyword_setup(seed: u64) -> (Model, Vec<TokenizedExample>) {
        let raw = synthetic_corpora(SyntheticKind::KeywordPresence, 200, seed).unwrap();
        let data = prepare(&raw, LabelKind::Class, 4, 0.27, seed).unwrap();
        let cfg = ModelConfig {
            model: ModelKind::Qnet,
            n: 4,
            d: 2,
            blocks: 1,
            head: HeadKind::SentenceClassify { classes: 1 },
            ablation: Ablation::Full,
            vocab_size: data.vocab.len(),
        };
        (Model::init(cfg, seed).unwrap(), data.train)
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 2,
            steps_per_epoch: 3,
            batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let (mut a, data) = keyword_setup(1);
        let (mut b, _) = keyword_setup(1);
        let ra = train(&mut a, &data, Some(&data[..10]), &cfg).unwrap();
        let rb = train(&mut b, &data, Some(&data[..10]), &cfg).unwrap();
        assert_eq!(ra.len(), 6);
        assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
        assert_eq!(a.params, b.params);
        assert!(ra[2].eval.is_some() && ra[1].eval.is_none());
        assert_eq!((ra[3].step, ra[3].epoch), (4, 2));
    }

    #[test]
    fn training_rejects_bad_inputs_up_front() {
        let (mut m, mut data) = keyword_setup(2);
        let cfg = TrainConfig {
            epochs: 1,
            steps_per_epoch: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut m, &[], None, &cfg), Err(Error::Data { .. })));
        data[3].ids.pop();
        assert!(matches!(train(&mut m, &data, None, &cfg), Err(Error::Data { .. })));
    }

    proptest! {
        #[test]
        fn lr_monotone_and_bounded(total in 1usize..400, a in 0usize..400, b in 0usize..400) {
            let s = LrSchedule::new(3e-4, 16, total).unwrap();
            let (a, b) = (a.min(total), b.min(total));
            let (lo, hi) = (a.min(b), a.max(b));
            let (x, y) = (s.lr_at(lo).unwrap(), s.lr_at(hi).unwrap());
            prop_assert!(y <= x + 1e-18);
            let g = s.global_lr();
            prop_assert!(x <= g * (1.0 + 1e-12) && y >= g * s.alpha * (1.0 - 1e-12));
        }

        #[test]
        fn adam_scale_equivariant(g in proptest::collection::vec(-5.0f64..5.0, 1..6), lr in 1e-4f64..1.0) {
            let n = g.len();
            let run = |lr: f64| {
                let mut st = AdamState::new(&[n]);
                st.m[0].iter_mut().for_each(|m| *m = 0.3);
                st.v[0].iter_mut().for_each(|v| *v = 0.7);
                st.t = 3;
                let mut p = vec![0.0; n];
                st.step(&mut [("w", &mut p, &g)], lr).unwrap();
                p
            };
            let (one, two) = (run(lr), run(2.0 * lr));
            for (a, b) in one.iter().zip(&two) {
                prop_assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
