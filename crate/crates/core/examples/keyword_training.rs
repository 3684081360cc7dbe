//! Trains a one-block QNet classifier on the synthetic keyword-presence
//! corpus, evaluates it and round-trips a checkpoint.

use qnet::data::{prepare, synthetic_corpora, LabelKind, SyntheticKind};
use qnet::model::{Checkpoint, ExecOptions, HeadKind, Model, ModelConfig, ModelKind};
use qnet::qnet::Ablation;
use qnet::train::{train_with, TrainConfig};

fn main() -> qnet::Result<()> {
    let seed = 0;
    let raw = synthetic_corpora(SyntheticKind::KeywordPresence, 1000, seed)?;
    let data = prepare(&raw, LabelKind::Class, 4, 0.27, seed)?;
    let config = ModelConfig {
        model: ModelKind::Qnet,
        n: 4,
        d: 2,
        blocks: 1,
        head: HeadKind::for_labels(&data.labels),
        ablation: Ablation::Full,
        vocab_size: data.vocab.len(),
    };
    let mut model = Model::init(config, seed)?;
    let tc = TrainConfig {
        epochs: 2,
        steps_per_epoch: 100,
        batch_size: 128,
        seed,
        ..Default::default()
    };
    train_with(&mut model, &data.train, Some(&data.test), &tc, |r| {
        if r.step % 25 == 0 {
            print!("step {:>3} lr {:.5} loss {:.4}", r.step, r.lr, r.loss);
            if let Some(eval) = &r.eval {
                print!("  test accuracy {:.3}", eval.accuracy.unwrap_or(f64::NAN));
            }
            println!();
        }
        Ok(())
    })?;
    let opts = ExecOptions::default();
    let test = model.evaluate(&data.test, &opts)?;
    println!("held-out: loss {:.4} accuracy {:.3} on {} sentences", test.loss, test.accuracy.unwrap(), test.examples);

    let path = std::env::temp_dir().join("qnet-keyword-checkpoint.json");
    Checkpoint::from_model(&model, Some(&data.vocab), Some(&data.labels)).save(&path)?;
    let restored = Checkpoint::load(&path)?.into_model()?;
    let again = restored.evaluate(&data.test, &opts)?;
    println!("restored from {}: accuracy {:.3}", path.display(), again.accuracy.unwrap());
    Ok(())
}
