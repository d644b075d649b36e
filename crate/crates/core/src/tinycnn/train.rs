use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, preprocess};
use super::net::{softmax2, ConvNet, Tensor};
use super::CnnError;
use crate::evalmetrics::{macro_f1, ConfusionMatrix};
use crate::imgdata::GrayImage;
use crate::patchgen::Patch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub augmentation_probability: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            augmentation_probability: 0.0,
            max_epochs: 50,
            early_stop_patience: 5,
            batch_size: 8,
            seed: 0,
        }
    }
}

pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 1e-3);
pub const MAX_EPOCHS_LIMIT: usize = 50;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: String| Err(CnnError::Config(m));
        let (lo, hi) = LEARNING_RATE_RANGE;
        if !(lo..=hi).contains(&self.learning_rate) {
            return bad(format!(
                "learning rate {} outside [{lo}, {hi}]",
                self.learning_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.augmentation_probability) {
            return bad("augmentation probability must lie in [0, 1]".into());
        }
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS_LIMIT {
            return bad(format!("max_epochs must be in 1..={MAX_EPOCHS_LIMIT}"));
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent when training without a validation set.
    pub val_macro_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: ConvNet<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

/// A patch with its label, borrowed from wherever the patches live.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub pixels: &'a GrayImage,
    pub label: bool,
}

impl<'a> From<&'a Patch> for Example<'a> {
    fn from(p: &'a Patch) -> Self {
        Self {
            pixels: &p.pixels,
            label: p.label,
        }
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Optimizer {
    const BETA1: f32 = 0.9;
    const BETA2: f32 = 0.999;
    const EPS: f32 = 1e-8;
    const MOMENTUM: f32 = 0.9;

    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Self {
            kind,
            lr: lr as f32,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Updates `params[from..]` only; earlier entries are left untouched.
    fn step(&mut self, params: &mut [f32], grad: &[f32], from: usize) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for i in from..params.len() {
                    let g = grad[i];
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
                }
            }
            OptimizerKind::Sgd => {
                for i in from..params.len() {
                    self.m[i] = Self::MOMENTUM * self.m[i] + grad[i];
                    params[i] -= self.lr * self.m[i];
                }
            }
        }
    }
}

fn sample_seed(epoch_seed: u64, index: usize) -> u64 {
    epoch_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Probability of the Markush class and the raw logits.
pub fn predict_patch(
    model: &ConvNet<f32>,
    pixels: &GrayImage,
) -> Result<(f64, [f64; 2]), CnnError> {
    let x = preprocess(pixels, model.config().input_size)?;
    let l = model.forward(&x)?;
    let logits = [f64::from(l[0]), f64::from(l[1])];
    Ok((softmax2(logits)[1], logits))
}

/// Class-1 probabilities for many patches, in input order.
pub fn predict_many(model: &ConvNet<f32>, pixels: &[&GrayImage]) -> Result<Vec<f64>, CnnError> {
    pixels
        .par_iter()
        .map(|p| predict_patch(model, p).map(|r| r.0))
        .collect()
}

fn macro_f1_of(model: &ConvNet<f32>, data: &[Example<'_>]) -> Result<f64, CnnError> {
    let pixels: Vec<&GrayImage> = data.iter().map(|e| e.pixels).collect();
    let probs = predict_many(model, &pixels)?;
    let truth: Vec<bool> = data.iter().map(|e| e.label).collect();
    let pred: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
    let cm =
        ConfusionMatrix::from_labels(&truth, &pred).map_err(|e| CnnError::Config(e.to_string()))?;
    macro_f1(&cm).map_err(|e| CnnError::Config(e.to_string()))
}

/// One pass over `data` in a seeded order; returns the mean sample loss.
fn run_epoch(
    model: &mut ConvNet<f32>,
    opt: &mut Optimizer,
    data: &[Example<'_>],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CnnError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let epoch_seed = rng.next_u64();
    let size = model.config().input_size;
    let from = if model.frozen_feature_layers {
        model.head_offset()
    } else {
        0
    };
    let n_params = model.params().len();
    let mut total_loss = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let scale = 1.0 / batch.len() as f32;
        let net = &*model;
        // per-sample gradients in parallel, summed in batch order
        let parts: Vec<(Vec<f32>, f32)> = batch
            .par_iter()
            .map(|&i| -> Result<(Vec<f32>, f32), CnnError> {
                let x = preprocess(data[i].pixels, size)?;
                let x = if cfg.augmentation_probability > 0.0 {
                    let mut r = ChaCha8Rng::seed_from_u64(sample_seed(epoch_seed, i));
                    augment(&x, cfg.augmentation_probability, &mut r)
                } else {
                    x
                };
                let mut g = vec![0.0f32; n_params];
                let (loss, _) = net.loss_and_grad(&x, data[i].label, &mut g, scale)?;
                Ok((g, loss))
            })
            .collect::<Result<_, _>>()?;
        let mut grad = vec![0.0f32; n_params];
        for (g, loss) in &parts {
            for (a, b) in grad[from..].iter_mut().zip(&g[from..]) {
                *a += b;
            }
            total_loss += f64::from(*loss);
        }
        opt.step(model.params_mut(), &grad, from);
    }
    Ok(total_loss / data.len() as f64)
}

/// Verdict after observing one epoch's validation score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    NewBest,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly better score.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.since_best = 0;
            StopDecision::NewBest
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

fn check_classes(data: &[Example<'_>]) -> Result<(), CnnError> {
    let pos = data.iter().filter(|e| e.label).count();
    if pos == 0 || pos == data.len() {
        return Err(CnnError::SingleClass);
    }
    Ok(())
}

/// Mini-batch training with early stopping on validation macro F1. Returns
/// the snapshot from the best validation epoch.
pub fn train(
    model: ConvNet<f32>,
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CnnError> {
    cfg.validate()?;
    check_classes(train_set)?;
    if val_set.is_empty() {
        return Err(CnnError::Config("validation set is empty".into()));
    }
    let mut model = model;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ConvNet<f32>)> = None;
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    for epoch in 1..=cfg.max_epochs {
        let loss = run_epoch(&mut model, &mut opt, train_set, cfg, &mut rng)?;
        let f1 = macro_f1_of(&model, val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_macro_f1: Some(f1),
        });
        log::debug!("epoch {epoch}: loss {loss:.5} val macro F1 {f1:.4}");
        match stopper.observe(f1) {
            StopDecision::NewBest => best = Some((f1, epoch, model.clone())),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_val_macro_f1, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_macro_f1,
    })
}

/// Trains for exactly `epochs` epochs without validation.
pub fn train_fixed(
    model: ConvNet<f32>,
    train_set: &[Example<'_>],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<(ConvNet<f32>, Vec<EpochRecord>), CnnError> {
    cfg.validate()?;
    check_classes(train_set)?;
    let mut model = model;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let loss = run_epoch(&mut model, &mut opt, train_set, cfg, &mut rng)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_macro_f1: None,
        });
    }
    Ok((model, history))
}

/// Mean cross-entropy over a set without augmentation.
pub fn mean_loss(model: &ConvNet<f32>, data: &[Example<'_>]) -> Result<f64, CnnError> {
    let size = model.config().input_size;
    let losses: Vec<f64> = data
        .par_iter()
        .map(|e| -> Result<f64, CnnError> {
            let x: Tensor<f32> = preprocess(e.pixels, size)?;
            let l = model.forward(&x)?;
            let p = softmax2([f64::from(l[0]), f64::from(l[1])]);
            Ok(-p[usize::from(e.label)].max(f64::MIN_POSITIVE).ln())
        })
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Sampling ranges for the random hyperparameter search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Log-uniform learning-rate bounds.
    pub learning_rate: (f64, f64),
    pub optimizers: Vec<OptimizerKind>,
    pub augmentation_probability: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: LEARNING_RATE_RANGE,
            optimizers: vec![OptimizerKind::Adam, OptimizerKind::Sgd],
            augmentation_probability: (0.0, 1.0),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), CnnError> {
        let (lo, hi) = self.learning_rate;
        let (rlo, rhi) = LEARNING_RATE_RANGE;
        let (alo, ahi) = self.augmentation_probability;
        if !(rlo <= lo && lo <= hi && hi <= rhi) {
            return Err(CnnError::Config(format!(
                "learning-rate range must lie within [{rlo}, {rhi}]"
            )));
        }
        if !(0.0 <= alo && alo <= ahi && ahi <= 1.0) {
            return Err(CnnError::Config(
                "augmentation range must lie within [0, 1]".into(),
            ));
        }
        if self.optimizers.is_empty() {
            return Err(CnnError::Config("no optimizers to sample".into()));
        }
        Ok(())
    }

    fn sample(&self, base: &TrainConfig, rng: &mut ChaCha8Rng) -> TrainConfig {
        let (lo, hi) = self.learning_rate;
        let learning_rate = if lo == hi {
            lo
        } else {
            rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
        };
        let optimizer = *self.optimizers.choose(rng).expect("validated non-empty");
        let (alo, ahi) = self.augmentation_probability;
        let augmentation_probability = if alo == ahi {
            alo
        } else {
            rng.random_range(alo..=ahi)
        };
        TrainConfig {
            learning_rate,
            optimizer,
            augmentation_probability,
            seed: rng.next_u64(),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub config: TrainConfig,
    pub best_val_macro_f1: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_config: TrainConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
    /// Refit on train ∪ validation with the best configuration.
    pub model: ConvNet<f32>,
    pub refit_history: Vec<EpochRecord>,
}

/// Random search over `space`; each trial trains a fresh model from
/// `factory(trial_seed)`. The winner is refit on train ∪ validation for its
/// best epoch count.
pub fn hyper_search(
    factory: &(dyn Fn(u64) -> Result<ConvNet<f32>, CnnError> + Sync),
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    n_trials: usize,
    base: &TrainConfig,
    space: &SearchSpace,
) -> Result<SearchOutcome, CnnError> {
    if n_trials == 0 {
        return Err(CnnError::Config("n_trials must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<usize> = None;
    for trial_index in 0..n_trials {
        let cfg = space.sample(base, &mut rng);
        let outcome = train(factory(cfg.seed)?, train_set, val_set, &cfg)?;
        log::info!(
            "trial {trial_index}: lr {:.2e} {} aug {:.2} -> val macro F1 {:.4} at epoch {}",
            cfg.learning_rate,
            cfg.optimizer,
            cfg.augmentation_probability,
            outcome.best_val_macro_f1,
            outcome.best_epoch
        );
        trials.push(TrialRecord {
            trial_index,
            config: cfg,
            best_val_macro_f1: outcome.best_val_macro_f1,
            best_epoch: outcome.best_epoch,
        });
        if best.is_none_or(|b| outcome.best_val_macro_f1 > trials[b].best_val_macro_f1) {
            best = Some(trial_index);
        }
    }
    let best_trial = best.expect("n_trials >= 1");
    let winner = trials[best_trial].clone();
    let combined: Vec<Example<'_>> = train_set.iter().chain(val_set).copied().collect();
    let (model, refit_history) = train_fixed(
        factory(winner.config.seed)?,
        &combined,
        winner.best_epoch,
        &winner.config,
    )?;
    Ok(SearchOutcome {
        best_config: winner.config,
        best_trial,
        trials,
        model,
        refit_history,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CnnError + '_ {
    move |source| CnnError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `epoch,train_loss,val_macro_f1`; the last column is empty when
/// there was no validation set.
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<(), CnnError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CnnError::Config(e.to_string()))?;
    w.write_record(["epoch", "train_loss", "val_macro_f1"])
        .map_err(|e| CnnError::Config(e.to_string()))?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_macro_f1.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| CnnError::Config(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_trials_csv(trials: &[TrialRecord], path: &Path) -> Result<(), CnnError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CnnError::Config(e.to_string()))?;
    w.write_record([
        "trial_index",
        "learning_rate",
        "optimizer",
        "augmentation_probability",
        "best_val_macro_f1",
        "best_epoch",
    ])
    .map_err(|e| CnnError::Config(e.to_string()))?;
    for t in trials {
        w.write_record([
            t.trial_index.to_string(),
            t.config.learning_rate.to_string(),
            t.config.optimizer.to_string(),
            t.config.augmentation_probability.to_string(),
            t.best_val_macro_f1.to_string(),
            t.best_epoch.to_string(),
        ])
        .map_err(|e| CnnError::Config(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}
