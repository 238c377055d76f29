//! Full-batch training with early stopping on the validation metric.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, SplitMask};
use crate::metrics::Metric;
use crate::model::{CdeModel, ModelConfig};
use crate::optim::{adam_step, AdamConfig, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub metric: Metric,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub wall_clock_s: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    /// Copy with every timing field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_s = 0.0;
        for e in &mut r.epochs {
            e.wall_clock_s = 0.0;
        }
        r
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Model holding the best-validation parameters.
    pub model: CdeModel,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct Evaluation {
    logits: Tensor,
    val_loss: f64,
}

fn evaluate(model: &CdeModel, g: &Graph, features: &Tensor, targets: &Arc<[usize]>, val: &Arc<[usize]>) -> Result<Evaluation> {
    let mut tape = Tape::with_precision(model.config().precision());
    tape.set_grad_enabled(false);
    let raw = tape.constant(features.clone());
    let logits = model.forward(&mut tape, g, raw, false, 0)?;
    let val_loss = tape.cross_entropy_with_logits(logits, targets, val)?;
    Ok(Evaluation {
        val_loss: tape.value(val_loss).data()[0],
        logits: tape.value(logits).clone(),
    })
}

/// Trains a fresh model on `split.train`, selecting parameters by the
/// validation metric (ties broken by lower validation loss).
///
/// Training stops once more than `patience` consecutive epochs pass without
/// improvement, or after `max_epochs`.
pub fn train(g: &Graph, features: &Tensor, labels: &LabelSet, split: &SplitMask, cfg: &ModelConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.ensure_nonempty()?;
    if features.rows() != g.num_nodes() || labels.len() != g.num_nodes() {
        return Err(Error::dim(
            "train",
            format!(
                "{} nodes, {} feature rows, {} labels",
                g.num_nodes(),
                features.rows(),
                labels.len()
            ),
        ));
    }
    if cfg.metric == Metric::RocAuc && labels.num_classes() != 2 {
        return Err(Error::Config(format!(
            "auc metric needs a binary task, dataset has {} classes",
            labels.num_classes()
        )));
    }
    let g = g.with_self_loops();
    let mut model = CdeModel::new(cfg.clone(), features.cols(), labels.num_classes())?;
    let targets: Arc<[usize]> = labels.labels().into();
    let train_mask: Arc<[usize]> = split.train.as_slice().into();
    let val_mask: Arc<[usize]> = split.val.as_slice().into();

    let adam = AdamConfig::new(cfg.learning_rate, cfg.weight_decay);
    let mut state = AdamState::new(model.params());
    let mut best: Option<(f64, f64, usize, ParamSet)> = None;
    let mut stale = 0usize;
    let mut epochs = Vec::new();
    let started = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        let mut tape = Tape::with_precision(cfg.precision());
        let raw = tape.constant(features.clone());
        let logits = model.forward(&mut tape, &g, raw, true, epoch_seed(cfg.seed, epoch))?;
        let loss = tape.cross_entropy_with_logits(logits, &targets, &train_mask)?;
        let train_loss = tape.value(loss).data()[0];
        if !train_loss.is_finite() {
            return Err(Error::TrainingDivergence {
                epoch,
                detail: format!("train loss {train_loss}"),
            });
        }
        tape.backward(loss)?;
        let grads = tape.param_grads();
        drop(tape);
        adam_step(model.params_mut(), &grads, &mut state, &adam).map_err(|e| match e {
            Error::NonFiniteGradient(name) => Error::TrainingDivergence {
                epoch,
                detail: format!("non-finite gradient for `{name}`"),
            },
            other => other,
        })?;

        let eval = evaluate(&model, &g, features, &targets, &val_mask).map_err(|e| match e {
            Error::Divergence { step } => Error::TrainingDivergence {
                epoch,
                detail: format!("solver diverged at step {step}"),
            },
            other => other,
        })?;
        let train_metric = cfg.metric.evaluate(&eval.logits, labels.labels(), &split.train)?;
        let val_metric = cfg.metric.evaluate(&eval.logits, labels.labels(), &split.val)?;
        if !eval.val_loss.is_finite() {
            return Err(Error::TrainingDivergence {
                epoch,
                detail: format!("validation loss {}", eval.val_loss),
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.val_loss,
            train_metric,
            val_metric,
            wall_clock_s: t0.elapsed().as_secs_f64(),
        });

        let improved = match &best {
            None => true,
            Some((bm, bl, _, _)) => val_metric > *bm || (val_metric == *bm && eval.val_loss < *bl),
        };
        if improved {
            best = Some((val_metric, eval.val_loss, epoch, model.params().clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }

    let (val_metric, _, best_epoch, params) = best.ok_or_else(|| Error::Config("max_epochs must be at least 1".into()))?;
    model.set_params(params)?;
    let logits = model.predict(&g, features)?;
    let report = TrainReport {
        seed: cfg.seed,
        metric: cfg.metric,
        best_epoch,
        train_metric: cfg.metric.evaluate(&logits, labels.labels(), &split.train)?,
        val_metric,
        test_metric: cfg.metric.evaluate(&logits, labels.labels(), &split.test)?,
        epochs,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, model })
}
