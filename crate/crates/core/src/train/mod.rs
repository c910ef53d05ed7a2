//! SGD training with global-norm clipping and dev-set early stopping, plus
//! the ablation harness.

mod ablate;

pub use ablate::{
    ablate, build_extractor, fit, preset, render_table, render_tsv, AblationRow, Fitted, Layout, Preset,
    Resources, RunSpec, DEFAULT_EMBEDDING_DIM, PRESETS,
};

use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{repair_iob, Sentence};
use crate::eval::{self, ScoreReport};
use crate::features::{FeatureError, FeatureExtractor};
use crate::model::{Mode, ModelError, Params, Tagger};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Global L2 norm the gradient is clipped to.
    pub clip: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop as soon as dev F1 reaches this value.
    pub target_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            clip: 5.0,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            shuffle: true,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(self.clip > 0.0) {
            return bad("clip norm must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum TrainError {
    EmptyCorpus,
    EmptyDev,
    /// 1-based epoch, 0-based index into the training set as given.
    NonFiniteLoss { epoch: usize, sentence: usize },
    UnknownLabel { sentence: usize, label: String },
    InvalidConfig(String),
    Model(ModelError),
    Feature(FeatureError),
    Eval(eval::EvalError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyCorpus => write!(f, "training set is empty"),
            TrainError::EmptyDev => write!(f, "dev set is empty"),
            TrainError::NonFiniteLoss { epoch, sentence } => {
                write!(f, "non-finite loss at epoch {}, training sentence {}", epoch, sentence + 1)
            }
            TrainError::UnknownLabel { sentence, label } => {
                write!(f, "training sentence {}: label '{}' is not in the label set", sentence + 1, label)
            }
            TrainError::InvalidConfig(m) => write!(f, "invalid training configuration: {}", m),
            TrainError::Model(e) => write!(f, "{}", e),
            TrainError::Feature(e) => write!(f, "{}", e),
            TrainError::Eval(e) => write!(f, "{}", e),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<FeatureError> for TrainError {
    fn from(e: FeatureError) -> Self {
        TrainError::Feature(e)
    }
}

impl From<eval::EvalError> for TrainError {
    fn from(e: eval::EvalError) -> Self {
        TrainError::Eval(e)
    }
}

/// Rescale `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut Params, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

/// Patience counter over a score that should increase.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        match self.best {
            Some((_, b)) if score <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Stale
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                Verdict::Improved
            }
        }
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over sentences of the per-token cross-entropy.
    pub loss: f64,
    pub dev_f1: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    TargetReached,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::TargetReached => "target_reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub stop_reason: StopReason,
}

impl TrainLog {
    /// `epoch<TAB>loss<TAB>dev_f1<TAB>seconds` lines followed by a summary.
    pub fn render(&self) -> String {
        let mut out = String::from("epoch\tloss\tdev_f1\tseconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{:.6}\t{:.2}\t{:.3}", e.epoch, e.loss, e.dev_f1, e.seconds);
        }
        let _ = writeln!(out, "\nbest_epoch\t{}", self.best_epoch);
        let _ = writeln!(out, "best_dev_f1\t{:.2}", self.best_dev_f1);
        let _ = writeln!(out, "epochs_run\t{}", self.epochs.len());
        let _ = writeln!(out, "stop_reason\t{}", self.stop_reason);
        out
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

/// Assemble every sentence once; features are frozen during training.
pub fn prepare_inputs(extractor: &FeatureExtractor, sentences: &[Sentence]) -> Vec<Vec<Vec<f64>>> {
    sentences.iter().map(|s| extractor.assemble(s)).collect()
}

fn gold_indices(tagger: &Tagger, sentences: &[Sentence]) -> Result<Vec<Vec<usize>>, TrainError> {
    sentences
        .iter()
        .enumerate()
        .map(|(si, s)| {
            s.tokens
                .iter()
                .map(|t| {
                    tagger.config.label_index(&t.gold_label).ok_or_else(|| TrainError::UnknownLabel {
                        sentence: si,
                        label: t.gold_label.clone(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Label every sentence (argmax, then IOB repair). Empty sentences stay empty.
pub fn tag_sentences(
    tagger: &Tagger,
    extractor: &FeatureExtractor,
    sentences: &[Sentence],
) -> Result<Vec<Sentence>, ModelError> {
    sentences
        .iter()
        .map(|s| {
            let mut out = s.clone();
            if s.is_empty() {
                return Ok(out);
            }
            let labels = repair_iob(&tagger.predict_labels(&extractor.assemble(s))?);
            for (tok, label) in out.tokens.iter_mut().zip(labels) {
                tok.predicted_label = Some(label);
            }
            Ok(out)
        })
        .collect()
}

fn predict_prepared(tagger: &Tagger, sentences: &[Sentence], inputs: &[Vec<Vec<f64>>]) -> Result<Vec<Sentence>, ModelError> {
    sentences
        .iter()
        .zip(inputs)
        .map(|(s, x)| {
            let mut out = s.clone();
            let labels = repair_iob(&tagger.predict_labels(x)?);
            for (tok, label) in out.tokens.iter_mut().zip(labels) {
                tok.predicted_label = Some(label);
            }
            Ok(out)
        })
        .collect()
}

/// Tag and score in one go.
pub fn evaluate(
    tagger: &Tagger,
    extractor: &FeatureExtractor,
    sentences: &[Sentence],
    types: Option<&[String]>,
) -> Result<ScoreReport, TrainError> {
    let tagged = tag_sentences(tagger, extractor, sentences)?;
    Ok(eval::score(&tagged, types)?)
}

/// Train `tagger` and return the checkpoint with the best dev F1.
///
/// `progress` sees every finished epoch.
pub fn train(
    tagger: Tagger,
    extractor: &FeatureExtractor,
    train_set: &[Sentence],
    dev_set: &[Sentence],
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Tagger, TrainLog), TrainError> {
    config.validate()?;
    let train_set: Vec<(usize, &Sentence)> = train_set.iter().enumerate().filter(|(_, s)| !s.is_empty()).collect();
    let dev_set: Vec<Sentence> = dev_set.iter().filter(|s| !s.is_empty()).cloned().collect();
    if train_set.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let sentences: Vec<Sentence> = train_set.iter().map(|(_, s)| (*s).clone()).collect();
    let inputs = prepare_inputs(extractor, &sentences);
    let gold = gold_indices(&tagger, &sentences).map_err(|e| match e {
        TrainError::UnknownLabel { sentence, label } => TrainError::UnknownLabel {
            sentence: train_set[sentence].0,
            label,
        },
        other => other,
    })?;
    let dev_inputs = prepare_inputs(extractor, &dev_set);

    let mut shuffle_rng = Rng::derived(config.seed, b"shuffle");
    let mut dropout_rng = Rng::derived(config.seed, b"dropout");
    let mut model = tagger;
    let mut best = model.clone();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        if config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for &i in &order {
            let (loss, mut grads) = model.loss_and_gradients(&inputs[i], &gold[i], Mode::Train(&mut dropout_rng))?;
            let norm = clip_gradients(&mut grads, config.clip);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    sentence: train_set[i].0,
                });
            }
            model.params.add_scaled(&grads, -config.learning_rate);
            total += loss;
        }
        let dev_report = eval::score(&predict_prepared(&model, &dev_set, &dev_inputs)?, None)?;
        let record = EpochRecord {
            epoch,
            loss: total / sentences.len() as f64,
            dev_f1: dev_report.overall.f1(),
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&record);
        let verdict = stopper.observe(epoch, record.dev_f1);
        let reached = config.target_f1.map_or(false, |t| record.dev_f1 >= t);
        epochs.push(record);
        match verdict {
            Verdict::Improved => best = model.clone(),
            Verdict::Stale => {}
            Verdict::Stop => {
                stop_reason = StopReason::Patience;
                break;
            }
        }
        if reached {
            stop_reason = StopReason::TargetReached;
            break;
        }
    }
    let (best_epoch, best_dev_f1) = stopper.best().expect("at least one epoch ran");
    Ok((
        best,
        TrainLog {
            epochs,
            best_epoch,
            best_dev_f1,
            stop_reason,
        },
    ))
}
