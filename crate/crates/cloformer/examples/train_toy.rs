//! Short training run of the XXS-64 variant on the synthetic shape dataset,
//! followed by a checkpoint save/load and an exact logit comparison. A full
//! overfit run (2000 steps to >= 95% accuracy) lives in the acceptance tests.
//!
//!     cargo run --release --example train_toy

use cloformer::checkpoint::{load_checkpoint, save_checkpoint};
use cloformer::data::gen_synth_dataset;
use cloformer::model::{build_model, model_forward, VariantSpec};
use cloformer::train::{evaluate, train_loop, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cloformer::error::Result<()> {
    let spec = VariantSpec::preset("xxs64")?;
    let ds = gen_synth_dataset::<f32>(64, spec.num_classes, 64, 0)?;
    let mut m = build_model(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;

    let cfg = TrainConfig {
        steps: 120,
        batch_size: 16,
        base_lr: 1e-3,
        weight_decay: 0.05,
        warmup_steps: None,
        seed: 0,
    };
    let history = train_loop(&mut m, &ds, &cfg)?;
    for rec in &history {
        println!(
            "epoch {:>3}: loss {:.4}  accuracy {:5.1}%",
            rec.epoch,
            rec.mean_loss,
            100.0 * rec.accuracy
        );
    }
    let acc = evaluate(&m, &ds, 16)?;
    println!("final train-set accuracy: {:.1}%", 100.0 * acc);

    let dir = std::env::temp_dir().join("cloformer_train_toy.ck");
    save_checkpoint(&m, &dir)?;
    let reloaded = load_checkpoint::<f32>(&dir)?;
    let (x, _) = ds.batch(&[0, 1, 2]);
    let (a, _) = model_forward(&x, &m, false)?;
    let (b, _) = model_forward(&x, &reloaded, false)?;
    assert_eq!(a, b, "logits must survive a checkpoint round trip exactly");
    println!("checkpoint round trip preserved logits bit-exactly");
    Ok(())
}
