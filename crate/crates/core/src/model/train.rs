//! Mini-batch training on the CTC objective.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{clip_global_norm, ModelDims, ModelParams, Optimizer, OptimizerKind};
use crate::ctc::{ctc_loss_and_grad, required_frames, TargetSequence};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, seeded_rng, Rng};
use crate::par;
use crate::text::CorpusPair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            clip_norm: 5.0,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            d_emb: 32,
            d_hidden: 64,
            layers: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} must be positive")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.d_emb == 0 || self.d_hidden == 0 || self.layers == 0 {
            return bad("model dimensions");
        }
        Ok(())
    }

    pub fn dims(&self, vocab_in: usize, labels: usize) -> ModelDims {
        ModelDims {
            vocab_in,
            labels,
            d_emb: self.d_emb,
            d_hidden: self.d_hidden,
            layers: self.layers,
        }
    }
}

/// Per-epoch summary. `wall_seconds` is not serialized so logs of identical
/// runs compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub step: u64,
    pub mean_loss: f64,
    pub trained: usize,
    pub skipped_infeasible: usize,
    #[serde(skip)]
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub reports: Vec<EpochReport>,
}

/// Whether a pair can be scored under the CTC length constraint.
pub fn is_feasible(pair: &CorpusPair) -> bool {
    !pair.document.is_empty() && required_frames(&pair.headline) <= pair.document.len()
}

/// Loss and parameter gradient for one pair; `None` if it is infeasible.
pub fn example_gradient(params: &ModelParams, pair: &CorpusPair) -> Result<Option<(f64, ModelParams)>> {
    if !is_feasible(pair) {
        return Ok(None);
    }
    let target = TargetSequence::new(pair.headline.clone())?;
    let fwd = params.forward(&pair.document)?;
    let ctc = match ctc_loss_and_grad(&fwd.logits, &target) {
        Ok(r) => r,
        Err(Error::Infeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let grads = params.backward(&fwd.cache, &ctc.grad_logits)?;
    Ok(Some((ctc.loss, grads)))
}

/// Stateful trainer: parameters, optimizer moments and the shuffle stream.
pub struct Trainer {
    params: ModelParams,
    optimizer: Optimizer,
    cfg: TrainConfig,
    shuffle: Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
        let shuffle = seeded_rng(derive_seed(cfg.seed, "shuffle"));
        Ok(Trainer {
            params,
            optimizer,
            cfg,
            shuffle,
            epoch: 0,
        })
    }

    /// Fresh parameters initialized from the config seed.
    pub fn from_config(vocab_in: usize, labels: usize, cfg: TrainConfig) -> Result<Self> {
        let params = ModelParams::init(cfg.dims(vocab_in, labels), derive_seed(cfg.seed, "init"))?;
        Trainer::new(params, cfg)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.steps()
    }

    /// One pass over `corpus` in shuffled mini-batches.
    pub fn run_epoch(&mut self, corpus: &[CorpusPair]) -> Result<EpochReport> {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.shuffle);

        let mut loss_sum = 0.0;
        let mut trained = 0;
        let mut skipped = 0;
        for batch in order.chunks(self.cfg.batch_size) {
            let params = &self.params;
            let results = par::map_ordered(batch, |&i| example_gradient(params, &corpus[i]));
            let mut total: Option<ModelParams> = None;
            let mut count = 0usize;
            let mut batch_loss = 0.0;
            for r in results {
                match r? {
                    None => skipped += 1,
                    Some((loss, grads)) => {
                        batch_loss += loss;
                        count += 1;
                        match total.as_mut() {
                            None => total = Some(grads),
                            Some(acc) => acc.add_assign(&grads)?,
                        }
                    }
                }
            }
            let Some(mut grads) = total else { continue };
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    step: self.optimizer.steps() + 1,
                });
            }
            grads.scale(1.0 / count as f64);
            clip_global_norm(&mut grads, self.cfg.clip_norm);
            self.optimizer.apply(&mut self.params, &grads);
            if !self.params.is_finite() {
                return Err(Error::Divergence {
                    step: self.optimizer.steps(),
                });
            }
            loss_sum += batch_loss;
            trained += count;
        }
        self.epoch += 1;
        Ok(EpochReport {
            epoch: self.epoch,
            step: self.optimizer.steps(),
            mean_loss: if trained > 0 { loss_sum / trained as f64 } else { f64::NAN },
            trained,
            skipped_infeasible: skipped,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// Trains a fresh model for `cfg.epochs` epochs.
pub fn train(corpus: &[CorpusPair], vocab_in: usize, labels: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    if !corpus.iter().any(is_feasible) {
        return Err(Error::NoFeasiblePairs);
    }
    let mut trainer = Trainer::from_config(vocab_in, labels, cfg.clone())?;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        reports.push(trainer.run_epoch(corpus)?);
    }
    Ok(TrainOutcome {
        params: trainer.into_params(),
        reports,
    })
}
