//! Partition-trained classifiers (PAT) and the full-text baseline.
//!
//! Both model kinds share one architecture: a bidirectional encoder whose
//! pooled first-position vector is projected by an affine head to two
//! class logits (kept, moderated). They differ only in training and
//! inference composition:
//!
//! * PAT training splits every example into a random span/context
//!   partition, scores each part independently with the *same* encoder
//!   and head, sums the two logit vectors, and applies softmax. The
//!   summed-logit supervision is what pushes each part's score toward a
//!   calibrated stand-alone probability.
//! * The full-text baseline trains on whole sequences in a single pass.

mod train;

pub use train::{train_fulltext, train_pat, LrSchedule, PatTrainer, StepReport, TrainLogEntry, TrainOutcome};

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{linear, Linear, Module, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;
use crate::encoder::{self, EncoderConfig, TransformerEncoder, WordTokenizer};
use crate::hashing;

/// Optimization hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub scheduler: Scheduler,
    pub seed: u64,
    /// Token budget per encoded sequence (each partition part is bounded
    /// separately).
    pub max_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    LinearWarmup,
}

impl Default for TrainConfig {
    /// Fine-tuning defaults: 3 epochs, lr 5e-5, batch 16, 0.1 warmup,
    /// 0.01 weight decay, linear schedule.
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            learning_rate: 5e-5,
            batch_size: 16,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            scheduler: Scheduler::LinearWarmup,
            seed: 13,
            max_tokens: 256,
        }
    }
}

impl TrainConfig {
    /// Profile for training the tiny encoder from scratch: same schedule
    /// shape, larger learning rate, shorter sequences.
    pub fn tiny(seed: u64) -> Self {
        TrainConfig { learning_rate: 1e-3, max_tokens: 64, seed, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<(), PatError> {
        if self.epochs == 0 {
            return Err(PatError::BadConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PatError::BadConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(PatError::BadConfig("warmup_ratio must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_tokens == 0 {
            return Err(PatError::BadConfig("batch_size and max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Encoder size profile used when training from a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderProfile {
    Tiny,
    Base,
}

impl EncoderProfile {
    pub fn config(self, vocab_size: usize) -> EncoderConfig {
        match self {
            EncoderProfile::Tiny => EncoderConfig::tiny(vocab_size),
            EncoderProfile::Base => EncoderConfig::base(vocab_size),
        }
    }

    /// Word-vocabulary cap used when building the tokenizer.
    pub fn vocab_cap(self) -> usize {
        match self {
            EncoderProfile::Tiny => 5_000,
            EncoderProfile::Base => 30_000,
        }
    }
}

impl std::str::FromStr for EncoderProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(EncoderProfile::Tiny),
            "base" => Ok(EncoderProfile::Base),
            other => Err(format!("unknown encoder profile {other:?} (expected tiny or base)")),
        }
    }
}

/// What the checkpoint was trained as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pat,
    Fulltext,
}

impl ModelKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            ModelKind::Pat => "pat",
            ModelKind::Fulltext => "fulltext",
        }
    }
}

/// Checkpoint metadata persisted alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub community: String,
    pub kind: ModelKind,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub data_hash: String,
    pub config_hash: String,
}

impl ModelMeta {
    fn new(
        community: &str,
        kind: ModelKind,
        encoder: EncoderConfig,
        train: TrainConfig,
        data_hash: String,
    ) -> Self {
        let config_hash = hashing::sha256_parts([
            community.as_bytes(),
            serde_json::to_vec(&kind).expect("serializes").as_slice(),
            serde_json::to_vec(&encoder).expect("serializes").as_slice(),
            serde_json::to_vec(&train).expect("serializes").as_slice(),
            data_hash.as_bytes(),
        ]);
        ModelMeta { community: community.to_string(), kind, encoder, train, data_hash, config_hash }
    }
}

/// A classifier: shared encoder, affine two-class head, and the tokenizer
/// it was trained with. Immutable in inference mode and safe to share
/// across threads.
pub struct PatModel {
    encoder: TransformerEncoder,
    head: Linear,
    tokenizer: WordTokenizer,
    varmap: VarMap,
    meta: ModelMeta,
}

impl PatModel {
    /// Fresh model with seeded parameters. The head starts at exactly
    /// zero, so an untrained model scores every input at probability 0.5.
    pub fn init(
        community: &str,
        kind: ModelKind,
        tokenizer: WordTokenizer,
        encoder_config: EncoderConfig,
        train_config: TrainConfig,
        data_hash: String,
    ) -> Result<Self, PatError> {
        train_config.validate()?;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
        let enc = TransformerEncoder::new(&encoder_config, vb.pp("enc"))?;
        let head = linear(encoder_config.hidden_size, 2, vb.pp("head"))?;
        encoder::seeded_init(&varmap, train_config.seed, &["head.weight"])?;
        let meta = ModelMeta::new(community, kind, encoder_config, train_config, data_hash);
        Ok(PatModel { encoder: enc, head, tokenizer, varmap, meta })
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    pub fn mask_id(&self) -> u32 {
        self.tokenizer.mask_id()
    }

    /// Encoder-tokenize a text, bounded by the configured token budget.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut ids = self.tokenizer.encode(text);
        let budget = self.meta.train.max_tokens.min(self.meta.encoder.max_positions - 1);
        ids.truncate(budget);
        ids
    }

    pub(crate) fn logits_tensor(&self, input: &Tensor) -> candle_core::Result<Tensor> {
        self.head.forward(&self.encoder.forward(input)?)
    }

    /// Two class logits for a content token id sequence. Over-length
    /// inputs are truncated, never rejected.
    pub fn logits_ids(&self, ids: &[u32]) -> Result<[f32; 2], PatError> {
        let input = encoder::input_tensor(
            ids,
            self.meta.train.max_tokens,
            &self.meta.encoder,
            self.encoder.device(),
        )?;
        let logits = self.logits_tensor(&input)?;
        let v: Vec<f32> = logits.flatten_all()?.to_vec1()?;
        Ok([v[0], v[1]])
    }

    /// Two class logits for a raw text.
    pub fn logits_text(&self, text: &str) -> Result<[f32; 2], PatError> {
        self.logits_ids(&self.tokenize(text))
    }

    /// Deterministic fingerprint of the current weights, for build
    /// manifests.
    pub fn weights_fingerprint(&self) -> String {
        let data = self.varmap.data().lock().unwrap();
        let mut names: Vec<&String> = data.keys().collect();
        names.sort();
        let mut parts: Vec<Vec<u8>> = Vec::with_capacity(names.len() * 2);
        for name in names {
            let var = &data[name];
            let values: Vec<f32> = var
                .as_tensor()
                .flatten_all()
                .and_then(|t| t.to_vec1())
                .expect("weights are dense f32");
            let mut bytes = Vec::with_capacity(values.len() * 4);
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            parts.push(name.as_bytes().to_vec());
            parts.push(bytes);
        }
        hashing::sha256_parts(parts.iter().map(|p| p.as_slice()))
    }

    pub(crate) fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    /// Write `weights.safetensors`, `tokenizer.json`, and `config.json`
    /// under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PatError> {
        std::fs::create_dir_all(dir).map_err(|e| PatError::Io(dir.display().to_string(), e))?;
        self.varmap.save(dir.join("weights.safetensors"))?;
        self.tokenizer
            .save(&dir.join("tokenizer.json"))
            .map_err(|e| PatError::Io(dir.display().to_string(), e))?;
        let meta_json = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(dir.join("config.json"), meta_json)
            .map_err(|e| PatError::Io(dir.display().to_string(), e))?;
        Ok(())
    }

    /// Load a checkpoint directory written by [`PatModel::save`].
    pub fn load(dir: &Path) -> Result<Self, PatError> {
        let meta_raw = std::fs::read_to_string(dir.join("config.json"))
            .map_err(|e| PatError::Io(dir.display().to_string(), e))?;
        let meta: ModelMeta = serde_json::from_str(&meta_raw)
            .map_err(|e| PatError::BadCheckpoint(format!("config.json: {e}")))?;
        let tokenizer = WordTokenizer::load(&dir.join("tokenizer.json"))
            .map_err(|e| PatError::Io(dir.display().to_string(), e))?;

        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
        let enc = TransformerEncoder::new(&meta.encoder, vb.pp("enc"))?;
        let head = linear(meta.encoder.hidden_size, 2, vb.pp("head"))?;
        let mut varmap = varmap;
        varmap.load(dir.join("weights.safetensors"))?;
        Ok(PatModel { encoder: enc, head, tokenizer, varmap, meta })
    }
}

/// Numerically stable two-class softmax, shared by every inference path
/// so the training-time aggregation and probe-time scoring agree exactly.
pub fn softmax2(logits: [f32; 2]) -> [f64; 2] {
    let a = logits[0] as f64;
    let b = logits[1] as f64;
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let z = ea + eb;
    [ea / z, eb / z]
}

/// Softmax of element-wise summed logits — the bipartite aggregation.
pub fn aggregate_probability(part_a: [f32; 2], part_b: [f32; 2]) -> [f64; 2] {
    softmax2([part_a[0] + part_b[0], part_a[1] + part_b[1]])
}

#[derive(Debug, thiserror::Error)]
pub enum PatError {
    #[error("tensor error: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("non-finite loss at step {step} (epoch {epoch})")]
    NonFiniteLoss { step: usize, epoch: usize },
    #[error("dataset has no training records")]
    EmptyDataset,
    #[error("corpus error: {0}")]
    Corpus(#[from] CorpusError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}
