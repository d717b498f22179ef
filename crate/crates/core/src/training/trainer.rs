use log::{debug, info};
use rand::seq::SliceRandom;
use thiserror::Error;

use super::adam::{adam_step, AdamState};
use super::checkpoint::{Checkpoint, LogRow};
use super::loss::{LossBreakdown, Objective};
use super::{EarlyStop, TrainConfig};
use crate::data::{DatasetBundle, LabeledExample, SemanticTensor};
use crate::error::{Error, ErrorClass};
use crate::eval::{default_multiplicative_grid, CalibrationMode, Evaluator};
use crate::linalg::seeded_rng;
use crate::model::PpnParams;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(#[from] Error),

    /// Loss or gradient went non-finite; `last_good` holds the parameters
    /// after the last completed epoch.
    #[error("training aborted in epoch {epoch}: {source}")]
    NonFinite {
        epoch: usize,
        last_good: Box<Checkpoint>,
        #[source]
        source: Error,
    },
}

impl TrainError {
    pub fn class(&self) -> ErrorClass {
        match self {
            TrainError::Setup(e) => e.class(),
            TrainError::NonFinite { .. } => ErrorClass::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// State after the final epoch run.
    pub last: Checkpoint,
    /// Epoch with the best validation metric, or `last` without early stopping.
    pub best: Checkpoint,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct ValMetrics {
    t1: Option<f64>,
    u: Option<f64>,
    s: Option<f64>,
    h: Option<f64>,
}

/// Validation T1 over unseen val examples and the best H over the default
/// multiplicative grid.
fn validate(params: &PpnParams, tensor: &SemanticTensor, bundle: &DatasetBundle) -> Result<ValMetrics, Error> {
    if bundle.splits().val.is_empty() {
        return Ok(ValMetrics::default());
    }
    let ev = Evaluator::validation(params, tensor, bundle)?;
    let mut m = ValMetrics::default();
    let mask = bundle.splits().seen_mask(bundle.dims().classes);
    let labels = &ev.scored().labels;
    let has_unseen = labels.iter().any(|&y| !mask[y]);
    let has_seen = labels.iter().any(|&y| mask[y]);
    if has_unseen {
        m.t1 = Some(ev.zsl()?.mean);
    }
    if has_unseen && has_seen {
        let rows = ev.sweep(CalibrationMode::Multiplicative, &default_multiplicative_grid())?;
        let mut best = rows[0];
        for r in &rows[1..] {
            if r.h > best.h {
                best = *r;
            }
        }
        m.u = Some(best.u);
        m.s = Some(best.s);
        m.h = Some(best.h);
    }
    Ok(m)
}

/// Mini-batch Adam over the train split with seeded shuffling, one log row
/// per epoch and optional early stopping on a validation metric.
pub fn train(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let splits = bundle.splits();
    if splits.train.is_empty() {
        return Err(Error::Split("train split is empty".into()).into());
    }
    let tensor = bundle.semantic_tensor(cfg.attribute_norm)?;
    let penalty = bundle.unseen_penalty()?;
    let objective = Objective::new(
        &tensor,
        &penalty,
        bundle.embeddings(),
        &splits.seen_classes,
        cfg.lambda1,
        cfg.lambda2,
    )?;

    let mut rng = seeded_rng(cfg.seed);
    let mut params = PpnParams::init(&bundle.dims(), &mut rng);
    let mut adam = AdamState::new(&params);
    let mut current = Checkpoint {
        params: params.clone(),
        config: *cfg,
        epoch: 0,
        rng_word_pos: rng.get_word_pos(),
        log: Vec::new(),
    };

    if cfg.early_stop != EarlyStop::None && cfg.epochs > 0 {
        let probe = validate(&params, &tensor, bundle)?;
        let available = match cfg.early_stop {
            EarlyStop::ValH => probe.h.is_some(),
            EarlyStop::ValT1 => probe.t1.is_some(),
            EarlyStop::None => true,
        };
        if !available {
            return Err(Error::Contract(format!(
                "early stopping on {} needs a validation split with the matching classes",
                cfg.early_stop.as_str()
            ))
            .into());
        }
    }

    let mut best = current.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut order = splits.train.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| bundle.example(i)).collect();
            let abort = |source: Error| TrainError::NonFinite {
                epoch,
                last_good: Box::new(current.clone()),
                source,
            };
            let (loss, grads) = objective.gradients(&params, &batch).map_err(|e| match e {
                Error::NonFinite(_) | Error::NonFiniteGradient(_) => abort(e),
                other => TrainError::Setup(other),
            })?;
            if !loss.is_finite() {
                return Err(abort(Error::NonFinite(format!("loss in epoch {epoch}"))));
            }
            adam_step(&mut adam, &mut params, &grads, cfg.learning_rate).map_err(abort)?;
            if !params.is_finite() {
                return Err(abort(Error::NonFinite(format!("parameters after epoch {epoch} update"))));
            }
            sum += loss.scaled(chunk.len() as f64);
        }
        let loss = sum.scaled(1.0 / order.len() as f64);
        let val = validate(&params, &tensor, bundle)?;
        let row = LogRow {
            epoch,
            loss,
            val_t1: val.t1,
            val_u: val.u,
            val_s: val.s,
            val_h: val.h,
        };
        debug!("{}", row.to_tsv());
        current.params = params.clone();
        current.epoch = epoch;
        current.rng_word_pos = rng.get_word_pos();
        current.log.push(row);

        let metric = match cfg.early_stop {
            EarlyStop::ValH => val.h,
            EarlyStop::ValT1 => val.t1,
            EarlyStop::None => None,
        };
        match metric {
            Some(m) if m > best_metric => {
                best_metric = m;
                best = current.clone();
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= cfg.patience {
                    info!("early stop after epoch {epoch}; best epoch {}", best.epoch);
                    stopped_early = true;
                    break;
                }
            }
            None => best = current.clone(),
        }
    }
    Ok(TrainOutcome {
        last: current,
        best,
        stopped_early,
    })
}

fn selection_score(outcome: &TrainOutcome, metric: EarlyStop) -> Option<f64> {
    let row = outcome.best.log.last()?;
    match metric {
        EarlyStop::ValT1 => row.val_t1,
        _ => row.val_h.or(row.val_t1),
    }
}

/// Runs [`train`] from `restarts` initializations (seeds `cfg.seed`,
/// `cfg.seed + 1`, ...) and keeps the run whose selected checkpoint scores
/// best on validation; ties go to the earlier seed. Selection uses the
/// early-stop metric, or validation H when early stopping is off.
pub fn train_with_restarts(bundle: &DatasetBundle, cfg: &TrainConfig, restarts: usize) -> Result<TrainOutcome, TrainError> {
    if restarts == 0 {
        return Err(Error::Contract("restarts must be positive".into()).into());
    }
    let mut chosen: Option<(f64, TrainOutcome)> = None;
    for i in 0..restarts as u64 {
        let run_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(i),
            ..*cfg
        };
        let outcome = train(bundle, &run_cfg)?;
        let score = selection_score(&outcome, cfg.early_stop).unwrap_or(f64::NEG_INFINITY);
        info!("restart {i} (seed {}): validation score {score}", run_cfg.seed);
        if chosen.as_ref().is_none_or(|(s, _)| score > *s) {
            chosen = Some((score, outcome));
        }
    }
    Ok(chosen.expect("at least one restart").1)
}
