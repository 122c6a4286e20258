//! Training loops for PAT and the full-text baseline.

use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CommunityDataset, Label};
use crate::encoder::{self, WordTokenizer};
use crate::hashing;
use crate::partition::{sample_partition, Partition};

use super::{softmax2, EncoderProfile, ModelKind, PatError, PatModel, TrainConfig};

/// Linear warmup followed by linear decay to zero.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    base: f64,
    warmup_steps: usize,
    total_steps: usize,
}

impl LrSchedule {
    pub fn linear_warmup(cfg: &TrainConfig, total_steps: usize) -> Self {
        let warmup_steps = ((total_steps as f64 * cfg.warmup_ratio).ceil() as usize).min(total_steps);
        LrSchedule { base: cfg.learning_rate, warmup_steps, total_steps: total_steps.max(1) }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let denom = (self.total_steps - self.warmup_steps) as f64;
        if denom <= 0.0 {
            return self.base;
        }
        (self.base * (self.total_steps - step) as f64 / denom).max(0.0)
    }
}

/// Per-step training record, also written to `train_log.tsv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f32,
}

/// Loss and per-example class probabilities from one batch pass.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss: f32,
    pub probabilities: Vec<[f64; 2]>,
}

/// Drives optimization of one model. Owns the optimizer state, the
/// learning-rate schedule position, and the partition-sampling RNG.
pub struct PatTrainer {
    model: PatModel,
    opt: AdamW,
    schedule: LrSchedule,
    rng: ChaCha8Rng,
    step: usize,
}

impl PatTrainer {
    pub fn new(model: PatModel, total_steps: usize) -> Result<Self, PatError> {
        let cfg = &model.meta().train;
        let schedule = LrSchedule::linear_warmup(cfg, total_steps);
        let params = ParamsAdamW {
            lr: schedule.at(0),
            weight_decay: cfg.weight_decay,
            ..Default::default()
        };
        let opt = AdamW::new(model.varmap().all_vars(), params)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(PatTrainer { model, opt, schedule, rng, step: 0 })
    }

    pub fn model(&self) -> &PatModel {
        &self.model
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        self.schedule.at(self.step)
    }

    pub fn into_model(self) -> PatModel {
        self.model
    }

    /// Sample one fresh partition per example from the trainer's RNG.
    pub fn partition_batch(&mut self, batch: &[(&str, Label)]) -> Vec<(Partition<u32>, Label)> {
        let mask = self.model.mask_id();
        batch
            .iter()
            .map(|(text, label)| {
                let ids = self.model.tokenize(text);
                let p = sample_partition(&ids, mask, &mut self.rng)
                    .expect("dataset invariants guarantee non-empty token sequences");
                (p, *label)
            })
            .collect()
    }

    fn logits_row(&self, ids: &[u32]) -> candle_core::Result<Tensor> {
        let cfg = self.model.meta();
        let input = encoder::input_tensor(
            ids,
            cfg.train.max_tokens,
            &cfg.encoder,
            self.model.varmap().all_vars()[0].device(),
        )?;
        self.model.logits_tensor(&input)
    }

    fn batch_loss(&self, rows: Vec<Tensor>, labels: &[Label]) -> Result<(Tensor, StepReport), PatError> {
        let logits = Tensor::cat(&rows, 0)?;
        let host: Vec<Vec<f32>> = logits.to_vec2()?;
        let probabilities: Vec<[f64; 2]> = host.iter().map(|r| softmax2([r[0], r[1]])).collect();
        let targets: Vec<u32> = labels.iter().map(|l| l.class_index() as u32).collect();
        let n = targets.len();
        let target_t = Tensor::from_vec(targets, (n,), logits.device())?;
        let loss = candle_nn::loss::cross_entropy(&logits, &target_t)?;
        let loss_val: f32 = loss.to_scalar()?;
        if !loss_val.is_finite() {
            return Err(PatError::NonFiniteLoss { step: self.step, epoch: 0 });
        }
        Ok((loss, StepReport { loss: loss_val, probabilities }))
    }

    /// The bipartite training forward pass, without an optimizer update:
    /// each part is encoded independently and the two logit vectors are
    /// summed before softmax.
    pub fn forward_partitioned(
        &self,
        parts: &[(Partition<u32>, Label)],
    ) -> Result<(Tensor, StepReport), PatError> {
        if parts.is_empty() {
            return Err(PatError::EmptyDataset);
        }
        let mut rows = Vec::with_capacity(parts.len());
        let mut labels = Vec::with_capacity(parts.len());
        for (p, label) in parts {
            let span_logits = self.logits_row(&p.span)?;
            let context_logits = self.logits_row(&p.context)?;
            rows.push((span_logits + context_logits)?);
            labels.push(*label);
        }
        self.batch_loss(rows, &labels)
    }

    /// Single-pass forward for the full-text baseline.
    pub fn forward_fulltext(&self, batch: &[(&str, Label)]) -> Result<(Tensor, StepReport), PatError> {
        if batch.is_empty() {
            return Err(PatError::EmptyDataset);
        }
        let mut rows = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for (text, label) in batch {
            rows.push(self.logits_row(&self.model.tokenize(text))?);
            labels.push(*label);
        }
        self.batch_loss(rows, &labels)
    }

    fn apply(&mut self, loss: &Tensor) -> Result<(), PatError> {
        self.opt.set_learning_rate(self.schedule.at(self.step));
        self.opt.backward_step(loss)?;
        self.step += 1;
        Ok(())
    }

    /// One optimizer step on pre-sampled partitions.
    pub fn step_partitioned(
        &mut self,
        parts: &[(Partition<u32>, Label)],
    ) -> Result<StepReport, PatError> {
        let (loss, report) = self.forward_partitioned(parts)?;
        self.apply(&loss)?;
        Ok(report)
    }

    /// One PAT training step: sample a fresh partition per example, take
    /// the summed-logit loss, and update.
    pub fn step_texts(&mut self, batch: &[(&str, Label)]) -> Result<StepReport, PatError> {
        let parts = self.partition_batch(batch);
        self.step_partitioned(&parts)
    }

    /// One full-text training step.
    pub fn step_fulltext(&mut self, batch: &[(&str, Label)]) -> Result<StepReport, PatError> {
        let (loss, report) = self.forward_fulltext(batch)?;
        self.apply(&loss)?;
        Ok(report)
    }
}

/// A trained model together with its per-step loss log.
pub struct TrainOutcome {
    pub model: PatModel,
    pub log: Vec<TrainLogEntry>,
}

/// Train a PAT classifier on one community's balanced dataset. When
/// `out_dir` is given, the checkpoint and `train_log.tsv` are written
/// there.
pub fn train_pat(
    dataset: &CommunityDataset,
    profile: EncoderProfile,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, PatError> {
    train_inner(dataset, profile, cfg, out_dir, ModelKind::Pat)
}

/// Train the single-pass full-text baseline. For the community-agnostic
/// variant, pass a merged dataset (see `corpus::merge_datasets`).
pub fn train_fulltext(
    dataset: &CommunityDataset,
    profile: EncoderProfile,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, PatError> {
    train_inner(dataset, profile, cfg, out_dir, ModelKind::Fulltext)
}

fn train_inner(
    dataset: &CommunityDataset,
    profile: EncoderProfile,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    kind: ModelKind,
) -> Result<TrainOutcome, PatError> {
    cfg.validate()?;
    dataset.check_invariants()?;
    if dataset.train.is_empty() {
        return Err(PatError::EmptyDataset);
    }

    let tokenizer =
        WordTokenizer::train(dataset.train.iter().map(|r| r.text.as_str()), profile.vocab_cap(), true);
    let encoder_config = profile.config(tokenizer.vocab_size());
    let data_hash = dataset_hash(dataset);
    let model =
        PatModel::init(&dataset.community, kind, tokenizer, encoder_config, cfg.clone(), data_hash)?;

    let steps_per_epoch = dataset.train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut trainer = PatTrainer::new(model, total_steps)?;

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5u64 << 32));
    let mut log = Vec::with_capacity(total_steps);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&str, Label)> = chunk
                .iter()
                .map(|&i| (dataset.train[i].text.as_str(), dataset.train[i].label))
                .collect();
            let step = trainer.steps_taken();
            let learning_rate = trainer.current_lr();
            let report = match kind {
                ModelKind::Pat => trainer.step_texts(&batch),
                ModelKind::Fulltext => trainer.step_fulltext(&batch),
            };
            let report = report.map_err(|e| match e {
                PatError::NonFiniteLoss { step, .. } => PatError::NonFiniteLoss { step, epoch },
                other => other,
            })?;
            log.push(TrainLogEntry { step, epoch, learning_rate, loss: report.loss });
        }
    }

    let model = trainer.into_model();
    if let Some(dir) = out_dir {
        model.save(dir)?;
        write_train_log(dir, &log)?;
    }
    Ok(TrainOutcome { model, log })
}

/// Stable content hash of the training split.
pub fn dataset_hash(dataset: &CommunityDataset) -> String {
    let mut parts: Vec<Vec<u8>> = Vec::with_capacity(dataset.train.len() * 3 + 1);
    parts.push(dataset.community.as_bytes().to_vec());
    for r in &dataset.train {
        parts.push(r.id.as_bytes().to_vec());
        parts.push(r.text.as_bytes().to_vec());
        parts.push(vec![r.label.as_u8()]);
    }
    hashing::sha256_parts(parts.iter().map(|p| p.as_slice()))
}

fn write_train_log(dir: &Path, log: &[TrainLogEntry]) -> Result<(), PatError> {
    let mut out = String::from("step\tepoch\tlearning_rate\tloss\n");
    for e in log {
        out.push_str(&format!("{}\t{}\t{:.8}\t{:.6}\n", e.step, e.epoch, e.learning_rate, e.loss));
    }
    let path = dir.join("train_log.tsv");
    std::fs::write(&path, out).map_err(|e| PatError::Io(path.display().to_string(), e))
}
