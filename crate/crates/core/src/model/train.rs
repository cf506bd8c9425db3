use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{accumulate, Scratch};
use super::{AdamState, EmbeddingTable, Gradient, NegativeSampler, TrainConfig};
use crate::data::Triple;
use crate::error::{Error, Result};

/// Identifies a client's local training for diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchContext {
    pub round: usize,
    pub client: usize,
}

/// Runs `epochs` passes of mini-batch Adam over `train` and returns the
/// mean batch loss. Triples are reshuffled every epoch.
pub fn train_epochs(
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    train: &[Triple],
    sampler: &NegativeSampler,
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut impl Rng,
    ctx: BatchContext,
) -> Result<f64> {
    if train.is_empty() || epochs == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<Triple> = train.to_vec();
    let mut grad = Gradient::for_table(table);
    let mut scratch = Scratch::default();
    let mut negatives = Vec::with_capacity(cfg.num_negatives);
    let mut total = 0.0;
    let mut batches = 0usize;

    for _ in 0..epochs {
        order.shuffle(rng);
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.clear();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for pos in batch {
                if cfg.num_negatives == 0 {
                    continue;
                }
                sampler.sample_into(pos, cfg.num_negatives, rng, &mut negatives);
                batch_loss += accumulate(table, pos, &negatives, cfg, scale, Some(&mut grad), &mut scratch);
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    round: ctx.round,
                    client: ctx.client,
                    batch: batch_idx,
                });
            }
            adam.step(table, &grad, cfg.learning_rate)?;
            total += batch_loss;
            batches += 1;
        }
    }
    Ok(total / batches as f64)
}
