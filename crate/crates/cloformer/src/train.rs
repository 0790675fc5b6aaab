//! Training loop: shuffled mini-batches, taped forward, cross-entropy,
//! backward, AdamW. Deterministic for a fixed (seed, spec, dataset, cfg).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SynthDataset;
use crate::error::{arg_err, Error, Result};
use crate::loss::{argmax_classes, softmax_cross_entropy_t};
use crate::model::{model_forward, model_forward_t, Model};
use crate::optim::{adamw_update_one, begin_step, OptimState};
use crate::param::Registry;
use crate::tape::Tape;
use crate::tensor::Elem;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Linear warmup length; `None` = 5% of `steps`.
    pub warmup_steps: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    /// The toy-overfit recipe: 2000 steps, lr 1e-3, wd 0.05, batch 32.
    pub fn toy(seed: u64) -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 32,
            base_lr: 1e-3,
            weight_decay: 0.05,
            warmup_steps: None,
            seed,
        }
    }
}

/// Per-epoch training metrics (one epoch = one pass over the dataset).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of the pre-update logits over the epoch's batches.
    pub accuracy: f64,
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Run `cfg.steps` optimization steps over shuffled mini-batches of `ds`,
/// mutating `m` in place. Returns per-epoch loss/accuracy history.
pub fn train_loop<E: Elem>(
    m: &mut Model<E>,
    ds: &SynthDataset<E>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    if ds.num_classes != m.spec.num_classes {
        return Err(arg_err!(
            "dataset has {} classes but the model expects {}",
            ds.num_classes,
            m.spec.num_classes
        ));
    }
    if cfg.batch_size == 0 || cfg.batch_size > ds.len() {
        return Err(arg_err!(
            "batch size {} invalid for a dataset of {}",
            cfg.batch_size,
            ds.len()
        ));
    }
    let warmup = cfg.warmup_steps.unwrap_or(cfg.steps / 20);
    let mut opt = OptimState::<E>::new(cfg.base_lr, cfg.weight_decay, cfg.steps, warmup)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let batches_per_epoch = ds.len() / cfg.batch_size;
    let mut history = Vec::new();
    let mut order = Vec::new();
    let mut epoch_loss = 0.0;
    let mut epoch_hits = 0usize;
    let mut epoch_seen = 0usize;

    for step in 0..cfg.steps {
        let batch_in_epoch = step % batches_per_epoch;
        if batch_in_epoch == 0 {
            order = shuffled(ds.len(), &mut shuffle_rng);
        }
        let indices = &order[batch_in_epoch * cfg.batch_size..(batch_in_epoch + 1) * cfg.batch_size];
        let (images, labels) = ds.batch(indices);

        let mut tape = Tape::new();
        let mut reg = Registry::new();
        let vals = m.record(&mut tape, &mut reg);
        let x = tape.leaf(images);
        let logits = model_forward_t(&mut tape, x, m, &vals, &mut drop_rng, true, None)?;
        let loss_val = softmax_cross_entropy_t(&mut tape, logits, &labels)?;
        let loss = tape.value(loss_val).data()[0].to_f64_();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged (non-finite) at step {step}"
            )));
        }
        let hits = argmax_classes(tape.value(logits))
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        let mut grads = tape.backward(loss_val)?;
        let entries: Vec<(String, crate::tape::Val)> = reg
            .entries()
            .iter()
            .map(|(n, v)| (n.clone(), *v))
            .collect();
        let grad_list: Vec<_> = entries
            .iter()
            .map(|(name, v)| {
                grads
                    .take(*v)
                    .ok_or_else(|| Error::Numeric(format!("no gradient for '{name}'")))
            })
            .collect::<Result<_>>()?;
        drop(tape);

        let lr = begin_step(&mut opt);
        let mut i = 0;
        let mut failure = None;
        m.visit_mut(&mut |name, p| {
            if failure.is_some() {
                return;
            }
            debug_assert_eq!(entries[i].0, name);
            if let Err(e) = adamw_update_one(&mut opt, lr, name, p, &grad_list[i]) {
                failure = Some(e);
            }
            i += 1;
        });
        if let Some(e) = failure {
            return Err(e);
        }

        epoch_loss += loss;
        epoch_hits += hits;
        epoch_seen += cfg.batch_size;
        let epoch_done = batch_in_epoch + 1 == batches_per_epoch || step + 1 == cfg.steps;
        if epoch_done {
            history.push(EpochRecord {
                epoch: history.len(),
                mean_loss: epoch_loss / (batch_in_epoch + 1) as f64,
                accuracy: epoch_hits as f64 / epoch_seen as f64,
            });
            epoch_loss = 0.0;
            epoch_hits = 0;
            epoch_seen = 0;
        }
    }
    Ok(history)
}

/// Classification accuracy of a frozen model over the whole dataset.
pub fn evaluate<E: Elem>(m: &Model<E>, ds: &SynthDataset<E>, batch_size: usize) -> Result<f64> {
    let mut hits = 0usize;
    let n = ds.len();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (images, labels) = ds.batch(&indices);
        let (logits, _) = model_forward(&images, m, false)?;
        hits += argmax_classes(&logits)
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        start = end;
    }
    Ok(hits as f64 / n as f64)
}
