//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TrainConfig};
use super::data::{class_weights, move_counts, rebalance, Dataset, TrainingExample};
use super::loss::{blade_loss, blade_loss_grad, combined_loss, move_loss, move_loss_grad};
use super::model::{backward, forward, forward_train, ModelWeights, Prediction};
use super::optim::{check_finite, clip_global_norm, AdamW, LrSchedule};
use crate::error::{Error, Result};
use crate::types::NUM_MOVES;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training-mode loss per epoch (with augmentation and dropout).
    pub epoch_losses: Vec<f64>,
    /// Combined loss on the unaugmented training examples before the first step.
    pub initial_loss: f64,
    /// Same measure after the last step.
    pub final_loss: f64,
    pub steps: usize,
    pub examples_per_epoch: usize,
    pub class_weights: [f64; NUM_MOVES],
    pub data_hash: String,
}

/// Per-example loss and the gradient with respect to the 17 logits.
pub fn example_loss(pred: &Prediction, ex: &TrainingExample, weights: &[f64; NUM_MOVES], blade_weight: f64) -> (f64, Vec<f64>) {
    let y = ex.move_targets();
    let c = ex.blade.index();
    let lm = move_loss(&pred.move_logits, &y, weights);
    let lb = blade_loss(&pred.blade_logits, c);
    let mut g = move_loss_grad(&pred.move_logits, &y, weights);
    g.extend(blade_loss_grad(&pred.blade_logits, c).into_iter().map(|v| v * blade_weight));
    (combined_loss(lm, lb, blade_weight), g)
}

/// Mean combined loss in inference mode without augmentation.
pub fn evaluate_loss(
    w: &ModelWeights,
    data: &Dataset,
    examples: &[TrainingExample],
    weights: &[f64; NUM_MOVES],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        let (x, mask) = data.materialize::<ChaCha8Rng>(ex, cfg.feature_subset, None);
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let pred = forward(w, x.view(), &mask)?;
        total += example_loss(&pred, ex, weights, cfg.effective_blade_weight()).0;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("no usable training examples".into()));
    }
    Ok(total / n as f64)
}

/// Trains a freshly initialised model on the examples at `train_idx` for
/// `cfg.total_epochs` epochs. Everything random comes from one generator
/// seeded with `cfg.seed`.
pub fn train(
    data: &Dataset,
    train_idx: &[usize],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(ModelWeights, TrainReport)> {
    cfg.validate()?;
    let mut model_cfg = model_cfg.clone();
    model_cfg.input_dim = cfg.feature_subset.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = ModelWeights::init(&model_cfg, &mut rng)?;

    let base: Vec<TrainingExample> = train_idx.iter().map(|&i| data.examples[i]).collect();
    let usable: Vec<TrainingExample> = base
        .into_iter()
        .filter(|ex| data.tracks[ex.track].skeletons[ex.start..=ex.end].iter().any(|s| s.is_some()))
        .collect();
    if usable.is_empty() {
        return Err(Error::Invalid("no usable training examples".into()));
    }
    let examples = if cfg.rebalance {
        rebalance(&usable, cfg.oversample_target, cfg.blade_six_ratio, &mut rng)
    } else {
        usable.clone()
    };
    let cw = if cfg.class_weighting {
        class_weights(&move_counts(&examples))
    } else {
        [1.0; NUM_MOVES]
    };
    let blade_weight = cfg.effective_blade_weight();
    let schedule = LrSchedule::from_config(cfg);
    let mut opt = AdamW::new(&weights, cfg);
    let mut grads = weights.zeros_like();
    let steps_per_epoch = examples.len().div_ceil(cfg.batch);
    let initial_loss = evaluate_loss(&weights, data, &usable, &cw, cfg)?;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.total_epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.total_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch) {
            grads.fill_zero();
            let mut items = Vec::with_capacity(batch.len());
            for &i in batch {
                let ex = &examples[i];
                let (x, mask) = data.materialize(ex, cfg.feature_subset, Some((&cfg.augment, &mut rng)));
                if mask.iter().any(|&m| m) {
                    items.push((ex, x, mask));
                }
            }
            if items.is_empty() {
                step += 1;
                continue;
            }
            let scale = 1.0 / items.len() as f64;
            for (ex, x, mask) in &items {
                let (pred, cache) = forward_train(&weights, x.view(), mask, Some(&mut rng))?;
                let (loss, mut dlogits) = example_loss(&pred, ex, &cw, blade_weight);
                dlogits.iter_mut().for_each(|g| *g *= scale);
                backward(&weights, &cache, &dlogits, &mut grads)?;
                epoch_loss += loss;
                seen += 1;
            }
            check_finite(&grads)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            let lr = schedule.lr_at((step + 1) as f64 / steps_per_epoch as f64);
            opt.step(&mut weights, &grads, lr)?;
            step += 1;
        }
        let mean = epoch_loss / seen.max(1) as f64;
        epoch_losses.push(mean);
        progress(epoch, mean);
    }
    let final_loss = evaluate_loss(&weights, data, &usable, &cw, cfg)?;
    Ok((
        weights,
        TrainReport {
            epoch_losses,
            initial_loss,
            final_loss,
            steps: step,
            examples_per_epoch: examples.len(),
            class_weights: cw,
            data_hash: data.content_hash(train_idx),
        },
    ))
}
