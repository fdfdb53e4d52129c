//! Mini-batch Adam training with best-checkpoint selection on validation
//! Top-4 accuracy.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::ctc::{beam_search_log, BeamConfig, Candidate, LabelSequence};
use crate::error::{Error, Result};
use crate::lattice::PROB_FLOOR;
use crate::lexicon::LexiconTrie;
use crate::synthgen::sample_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip per batch; 0 disables.
    pub clip_norm: f64,
    /// Beam used for validation decoding.
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            weight_decay: 1e-5,
            epochs: 30,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 0.0,
            beam_width: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.clip_norm >= 0.0
            && self.beam_width >= 4;
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// One preprocessed training sample.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: Vec<f64>,
    pub frames: usize,
    pub target: LabelSequence,
    pub word: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample CTC loss over the epoch's batches (dropout active).
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    pub val_top4: f64,
    pub best_top4: f64,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation Top-4 (ties: better Top-1, then
    /// lower validation loss, then earlier epoch).
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub log: Vec<EpochMetrics>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalSummary {
    pub loss: f64,
    pub top1: f64,
    pub top4: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

fn is_feasible(ex: &Example) -> bool {
    ex.target.min_frames() <= ex.frames
}

/// Decodes every example and reports loss and Top-1/Top-4 accuracy.
pub fn evaluate_examples(
    params: &ModelParams,
    examples: &[Example],
    lexicon: &Arc<LexiconTrie>,
    beam_width: usize,
) -> Result<(EvalSummary, Vec<Vec<Candidate>>)> {
    let beam = BeamConfig {
        beam_width,
        k: 4,
        lexicon: Some(lexicon.clone()),
    };
    let mut loss = 0.0;
    let mut counted = 0usize;
    let mut top1 = 0usize;
    let mut top4 = 0usize;
    let mut all = Vec::with_capacity(examples.len());
    for ex in examples {
        let cache = params.forward_cached(&ex.input, ex.frames, None)?;
        let log_probs: Vec<f64> = cache.probs().iter().map(|&p| p.max(PROB_FLOOR).ln()).collect();
        if is_feasible(ex) {
            loss += crate::ctc::ctc_loss_from_log_probs(&log_probs, ex.frames, &ex.target)?;
            counted += 1;
        }
        let cands = beam_search_log(&log_probs, ex.frames, &beam);
        if cands.first().is_some_and(|c| c.word == ex.word) {
            top1 += 1;
        }
        if cands.iter().any(|c| c.word == ex.word) {
            top4 += 1;
        }
        all.push(cands);
    }
    let n = examples.len().max(1) as f64;
    Ok((
        EvalSummary {
            loss: if counted > 0 { loss / counted as f64 } else { 0.0 },
            top1: top1 as f64 / n,
            top4: top4 as f64 / n,
        },
        all,
    ))
}

fn better(a: &EvalSummary, b: &EvalSummary) -> bool {
    if a.top4 != b.top4 {
        return a.top4 > b.top4;
    }
    if a.top1 != b.top1 {
        return a.top1 > b.top1;
    }
    a.loss < b.loss
}

/// Trains `initial` on `train_set`, validating on `val_set` after every epoch.
///
/// Samples whose target cannot be aligned to their frame count are skipped
/// and counted in the log. With `epochs == 0` the initial parameters are
/// returned untouched.
pub fn train(
    initial: ModelParams,
    train_set: &[Example],
    val_set: &[Example],
    lexicon: &Arc<LexiconTrie>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let input_dim = initial.config().input_dim;
    if let Some(ex) = train_set.iter().chain(val_set).find(|e| e.input.len() != e.frames * input_dim) {
        return Err(Error::ShapeMismatch {
            what: format!("example {:?}", ex.word),
            expected: format!("{} x {input_dim}", ex.frames),
            actual: format!("{} values", ex.input.len()),
        });
    }

    let usable: Vec<usize> = (0..train_set.len()).filter(|&i| is_feasible(&train_set[i])).collect();
    let skipped = train_set.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::Empty("training set after feasibility filtering".into()));
    }

    let mut params = initial.clone();
    let mut best = initial;
    let mut best_epoch = 0;
    let mut best_eval: Option<EvalSummary> = None;
    let mut adam = Adam::new(params.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut grad = params.zeros_like();

    for epoch in 1..=cfg.epochs {
        let mut order = usable.clone();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, "shuffle", epoch));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train_set[i];
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed ^ epoch as u64, "dropout", i));
                let cache = params
                    .forward_cached(&ex.input, ex.frames, Some(&mut rng))
                    .map_err(|e| match e {
                        Error::NonFinite { .. } => Error::Diverged { epoch, batch: batch_idx },
                        other => other,
                    })?;
                batch_loss += params.accumulate_gradient(&ex.input, &cache, &ex.target, &mut grad)?;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            epoch_loss += batch_loss;
            if cfg.weight_decay > 0.0 {
                for (g, &p) in grad.iter_mut().zip(params.as_slice()) {
                    *g += cfg.weight_decay * p;
                }
            }
            if cfg.clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.clip_norm {
                    let s = cfg.clip_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.update(params.as_mut_slice(), &grad, cfg);
        }

        let eval_set = if val_set.is_empty() { train_set } else { val_set };
        let (eval, _) = evaluate_examples(&params, eval_set, lexicon, cfg.beam_width)?;
        if best_eval.as_ref().is_none_or(|b| better(&eval, b)) {
            best = params.clone();
            best_epoch = epoch;
            best_eval = Some(eval);
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: epoch_loss / usable.len() as f64,
            val_loss: eval.loss,
            val_top1: eval.top1,
            val_top4: eval.top4,
            best_top4: best_eval.map(|b| b.top4).unwrap_or(0.0),
            skipped,
        };
        on_epoch(&metrics);
        log.push(metrics);
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        last: params,
        log,
    })
}
