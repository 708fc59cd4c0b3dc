use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam::Adam, annealed_lr, clip_gradients, weighted_ce};
use crate::data::{compute_class_weights, Corpus, LabelScheme};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::HiGru;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::tensor::Mode;

/// Validation quantity used for model selection and early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMetric {
    Wa,
    Uwa,
}

impl fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectMetric::Wa => "wa",
            SelectMetric::Uwa => "uwa",
        })
    }
}

impl FromStr for SelectMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wa" => Ok(SelectMetric::Wa),
            "uwa" => Ok(SelectMetric::Uwa),
            other => Err(Error::Config(format!(
                "unknown selection metric {other:?} (expected wa or uwa)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub anneal_every: usize,
    pub anneal_factor: f64,
    pub patience: usize,
    pub clip_norm: f64,
    pub alpha: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub select_metric: SelectMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            anneal_every: 20,
            anneal_factor: 0.5,
            patience: 10,
            clip_norm: 5.0,
            alpha: 0.0,
            max_epochs: 200,
            seed: 0,
            select_metric: SelectMetric::Wa,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.lr, "learning rate")?;
        positive(self.clip_norm, "clip norm")?;
        positive(self.anneal_factor, "anneal factor")?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.anneal_every == 0 {
            return Err(Error::Config("anneal interval must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        annealed_lr(self.lr, epoch, self.anneal_every, self.anneal_factor)
    }
}

/// One row of the training history. `epoch` counts from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_wa: f64,
    pub val_uwa: f64,
    pub lr: f64,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const HEADER: &'static str = "epoch,train_loss,val_WA,val_UWA,lr,clipped_fraction";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_wa, r.val_uwa, r.lr, r.clipped_fraction
            ));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: HiGru<T>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub history: History,
    pub weights: Vec<f64>,
}

/// Confusion matrix of eval-mode predictions over the labeled utterances
/// of `corpus`. Dialogues are scored in parallel.
pub fn evaluate<T: Scalar>(
    model: &HiGru<T>,
    corpus: &Corpus,
    scheme: &LabelScheme,
) -> Result<ConfusionMatrix> {
    let mask = scheme.evaluated_mask();
    let parts: Vec<ConfusionMatrix> = corpus
        .dialogues
        .par_iter()
        .map(|d| {
            let preds = model.predict(d, mask)?;
            let mut cm = ConfusionMatrix::new(mask);
            for (u, p) in d.utterances.iter().zip(preds) {
                if let Some(truth) = u.label {
                    cm.update(truth, p)?;
                }
            }
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(mask);
    for cm in &parts {
        total.merge(cm)?;
    }
    Ok(total)
}

fn score(cm: &ConfusionMatrix, metric: SelectMetric) -> Result<(f64, f64, f64)> {
    let wa = cm.wa()?;
    let uwa = match (cm.uwa(), metric) {
        (Ok(u), _) => u,
        (Err(_), SelectMetric::Wa) => f64::NAN,
        (Err(e), SelectMetric::Uwa) => return Err(e),
    };
    let sel = match metric {
        SelectMetric::Wa => wa,
        SelectMetric::Uwa => uwa,
    };
    Ok((wa, uwa, sel))
}

/// Trains `model` one dialogue per step and returns the parameters of the
/// epoch with the best validation score. `on_epoch` sees each history row
/// as soon as it is produced.
pub fn train_loop<T: Scalar>(
    mut model: HiGru<T>,
    train: &Corpus,
    val: &Corpus,
    scheme: &LabelScheme,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.dialogues.is_empty() || val.dialogues.is_empty() {
        return Err(Error::Training(
            "train and validation corpora must be nonempty".into(),
        ));
    }
    if model.config().num_classes != scheme.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, label scheme has {}",
            model.config().num_classes,
            scheme.num_classes()
        )));
    }
    let weights = compute_class_weights(
        &scheme.class_counts(train),
        cfg.alpha,
        scheme.evaluated_mask(),
    )?;
    let mut adam = Adam::new(model.params());
    let mut shuffle_rng = stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
    let clip = T::lit(cfg.clip_norm);

    let mut order: Vec<usize> = (0..train.dialogues.len()).collect();
    let mut history = History::default();
    let mut best: Option<(HiGru<T>, usize, f64)> = None;
    let mut since_improvement = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut clipped = 0usize;
        for &di in &order {
            let dialogue = &train.dialogues[di];
            let labels: Vec<Option<usize>> = dialogue.utterances.iter().map(|u| u.label).collect();
            let grads = {
                let mut g = model.graph();
                let mut mode = Mode::Train(&mut dropout_rng);
                let out = model.forward(&mut g, dialogue, &mut mode)?;
                let loss = weighted_ce(&mut g, out.probs, &labels, &weights)?;
                let value = g.value(loss)[0].as_f64();
                if !value.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {} on dialogue {:?}",
                        epoch + 1,
                        dialogue.id
                    )));
                }
                loss_sum += value;
                g.backward(loss)?;
                g.into_param_grads()
            };
            let params = model.params_mut();
            params.reset_grads();
            params.accumulate_grads(grads);
            let factor = clip_gradients(params, clip).map_err(|e| {
                Error::Training(format!(
                    "epoch {} dialogue {:?}: {e}",
                    epoch + 1,
                    dialogue.id
                ))
            })?;
            if factor < T::one() {
                clipped += 1;
            }
            adam.step(params, lr)?;
        }

        let cm = evaluate(&model, val, scheme)?;
        let (val_wa, val_uwa, sel) = score(&cm, cfg.select_metric)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / order.len() as f64,
            val_wa,
            val_uwa,
            lr,
            clipped_fraction: clipped as f64 / order.len() as f64,
        };
        history.records.push(record);
        on_epoch(&record);

        if best.as_ref().is_none_or(|(_, _, s)| sel > *s) {
            best = Some((model.clone(), epoch + 1, sel));
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                break;
            }
        }
    }

    let (mut model, best_epoch, best_score) = best.expect("at least one epoch runs");
    model.params_mut().reset_grads();
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_score,
        history,
        weights,
    })
}
