//! Mini-batch SGD with backpropagation through time.
//!
//! Each epoch keeps every positive, draws `floor(neg_ratio * positives)`
//! negatives without replacement (capped at what exists), shuffles the lot and
//! walks it in batches. Batch gradients are averaged and applied as a plain
//! SGD step with learning rate `lr0 * decay^epoch`.
//!
//! Per-sample gradients are reduced in fixed chunks of [`REDUCE_CHUNK`]
//! samples, chunk sums then added in order, so results do not depend on the
//! thread count or the [`Exec`] mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::nnet::{classify, Checkpoint, Model, Variant};
use crate::par::Exec;
use crate::rng::SplitMix64;

pub const REDUCE_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub neg_ratio: f64,
    pub seed: u64,
    pub variant: Variant,
    pub hidden: usize,
    /// Train on the last `k` glimpses only (the smallest windows).
    pub sequence_length: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.0004,
            decay: 0.97,
            epochs: 50,
            batch_size: 32,
            neg_ratio: 3.0,
            seed: 0,
            variant: Variant::Fusion,
            hidden: 256,
            sequence_length: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("train.lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("train.decay must be in (0, 1], got {}", self.decay)));
        }
        if !(self.neg_ratio > 0.0) {
            return Err(Error::Config(format!("train.neg_ratio must be positive, got {}", self.neg_ratio)));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config("train.batch_size and train.hidden must be positive".into()));
        }
        if self.sequence_length == Some(0) {
            return Err(Error::Config("train.sequence_length must be positive".into()));
        }
        Ok(())
    }
}

/// Labeled sequences split by class, all sharing one shape.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub positives: Vec<FeatureSequence>,
    pub negatives: Vec<FeatureSequence>,
}

impl Dataset {
    /// Split labeled records by class; unlabeled records are an error.
    pub fn from_labeled(records: Vec<FeatureSequence>) -> Result<Self> {
        let mut ds = Dataset::default();
        for r in records {
            match r.label {
                Some(true) => ds.positives.push(r),
                Some(false) => ds.negatives.push(r),
                None => return Err(Error::Config(format!("record {}/{} has no label", r.id.image, r.id.proposal))),
            }
        }
        ds.shape()?;
        Ok(ds)
    }

    /// Common `(T, D)`, or `None` when empty.
    pub fn shape(&self) -> Result<Option<(usize, usize)>> {
        let mut all = self.positives.iter().chain(&self.negatives);
        let Some(first) = all.next() else {
            return Ok(None);
        };
        let shape = (first.steps(), first.dim());
        if let Some(bad) = all.find(|s| (s.steps(), s.dim()) != shape) {
            return Err(Error::Shape(format!(
                "sequence {}x{} in a {}x{} dataset",
                bad.steps(),
                bad.dim(),
                shape.0,
                shape.1
            )));
        }
        Ok(Some(shape))
    }

    /// Keep only the last `k` glimpses of every sequence.
    pub fn tail(&self, k: usize) -> Result<Self> {
        let cut = |v: &[FeatureSequence]| v.iter().map(|s| s.tail(k)).collect::<Result<Vec<_>>>();
        Ok(Self { positives: cut(&self.positives)?, negatives: cut(&self.negatives)? })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub seq: &'a FeatureSequence,
    pub label: bool,
}

/// One epoch's training list: all positives plus a fresh negative draw,
/// shuffled.
pub fn resample_epoch<'a>(dataset: &'a Dataset, neg_ratio: f64, rng: &mut SplitMix64) -> Result<Vec<Sample<'a>>> {
    if dataset.positives.is_empty() {
        return Err(Error::Config("training needs at least one positive sample".into()));
    }
    let want = (neg_ratio * dataset.positives.len() as f64).floor() as usize;
    let picks = rng.sample_indices(dataset.negatives.len(), want);
    let mut out: Vec<Sample<'a>> = dataset
        .positives
        .iter()
        .map(|seq| Sample { seq, label: true })
        .chain(picks.into_iter().map(|i| Sample { seq: &dataset.negatives[i], label: false }))
        .collect();
    rng.shuffle(&mut out);
    Ok(out)
}

pub fn learning_rate(lr0: f64, decay: f64, epoch: usize) -> f64 {
    lr0 * decay.powi(epoch as i32)
}

/// Summed gradient, summed loss and number of correct predictions.
pub struct BatchStats {
    pub grad: Model,
    pub loss: f64,
    pub correct: usize,
}

pub fn batch_gradient(model: &Model, samples: &[Sample<'_>], exec: Exec) -> Result<BatchStats> {
    let chunks: Vec<&[Sample<'_>]> = samples.chunks(REDUCE_CHUNK).collect();
    let partials = exec.map(&chunks, |chunk| -> Result<BatchStats> {
        let mut acc = BatchStats { grad: model.zeros_like(), loss: 0.0, correct: 0 };
        for s in chunk.iter() {
            let (loss, p, g) = model.loss_and_grad(s.seq, s.label)?;
            acc.grad.add_scaled(&g, 1.0);
            acc.loss += loss;
            acc.correct += usize::from(classify(p) == s.label);
        }
        Ok(acc)
    });
    let mut total = BatchStats { grad: model.zeros_like(), loss: 0.0, correct: 0 };
    for part in partials {
        let part = part?;
        total.grad.add_scaled(&part.grad, 1.0);
        total.loss += part.loss;
        total.correct += part.correct;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the end of the epoch with the lowest mean loss
    /// (the initialization when no epoch ran).
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn train(dataset: &Dataset, config: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    config.validate()?;
    let truncated;
    let dataset = match config.sequence_length {
        Some(k) => {
            truncated = dataset.tail(k)?;
            &truncated
        }
        None => dataset,
    };
    let (steps, dim) = dataset.shape()?.ok_or_else(|| Error::Config("training needs a non-empty dataset".into()))?;
    if dataset.positives.is_empty() {
        return Err(Error::Config("training needs at least one positive sample".into()));
    }

    let mut rng = SplitMix64::new(config.seed);
    let mut model = Model::init(config.variant, dim, config.hidden, &mut rng.fork());
    let mut best = Checkpoint { model: model.clone(), steps };
    let mut best_loss = f64::INFINITY;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = learning_rate(config.lr0, config.decay, epoch);
        let samples = resample_epoch(dataset, config.neg_ratio, &mut rng)?;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in samples.chunks(config.batch_size).enumerate() {
            let stats = batch_gradient(&model, batch, exec)?;
            if !stats.loss.is_finite() || !stats.grad.is_finite() {
                return Err(Error::NonFinite { epoch, batch: b });
            }
            loss_sum += stats.loss;
            correct += stats.correct;
            model.add_scaled(&stats.grad, -lr / batch.len() as f64);
            if !model.is_finite() {
                return Err(Error::NonFinite { epoch, batch: b });
            }
        }
        let n = samples.len();
        let positives = samples.iter().filter(|s| s.label).count();
        let entry = EpochLog {
            epoch,
            lr,
            mean_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            positives,
            negatives: n - positives,
        };
        if entry.mean_loss < best_loss {
            best_loss = entry.mean_loss;
            best = Checkpoint { model: model.clone(), steps };
        }
        log.push(entry);
    }
    Ok(TrainOutcome { best, last: Checkpoint { model, steps }, log })
}

/// Training log as CSV with columns `epoch,lr,mean_loss,train_accuracy`.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,mean_loss,train_accuracy\n");
    for e in log {
        out.push_str(&format!("{},{:e},{:.17e},{:.17e}\n", e.epoch, e.lr, e.mean_loss, e.train_accuracy));
    }
    out
}

/// Probabilities for many sequences.
pub fn predict_batch(model: &Model, seqs: &[FeatureSequence], exec: Exec) -> Result<Vec<f64>> {
    exec.map(seqs, |s| model.predict(s)).into_iter().collect()
}
