//! A small bidirectional transformer encoder, trainable from scratch on
//! CPU.
//!
//! The architecture is the usual post-norm encoder stack: token plus
//! learned position embeddings, multi-head self-attention, GELU
//! feed-forward blocks, and the first-position ([CLS]) vector as the
//! pooled sequence representation. Classifier heads live one level up in
//! [`crate::pat`].

mod tokenizer;

pub use tokenizer::{WordTokenizer, CLS_ID, MASK_ID, PAD_ID, UNK_ID};

use candle_core::{bail, DType, Device, Result, Tensor};
use candle_nn::{embedding, layer_norm, linear, Embedding, LayerNorm, Linear, Module, VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Shape hyperparameters for the encoder stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    /// CI-scale encoder that trains in seconds on a CPU.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            intermediate_size: 128,
            max_positions: 96,
            layer_norm_eps: 1e-12,
        }
    }

    /// Base-size encoder matching the usual 110M-parameter dimensions.
    /// Constructible everywhere, but intended to start from pretrained
    /// weights rather than be trained from scratch.
    pub fn base(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_size: 768,
            num_layers: 12,
            num_heads: 12,
            intermediate_size: 3072,
            max_positions: 512,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size % self.num_heads != 0 {
            bail!("hidden_size {} must divide evenly into {} heads", self.hidden_size, self.num_heads);
        }
        if self.vocab_size == 0 || self.num_layers == 0 || self.max_positions < 2 {
            bail!("degenerate encoder config: {self:?}");
        }
        Ok(())
    }
}

struct SelfAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    num_heads: usize,
    head_dim: usize,
}

impl SelfAttention {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        Ok(SelfAttention {
            q: linear(h, h, vb.pp("q"))?,
            k: linear(h, h, vb.pp("k"))?,
            v: linear(h, h, vb.pp("v"))?,
            o: linear(h, h, vb.pp("o"))?,
            num_heads: cfg.num_heads,
            head_dim: h / cfg.num_heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, h) = x.dims3()?;
        let split = |t: Tensor| -> Result<Tensor> {
            t.reshape((b, l, self.num_heads, self.head_dim))?.transpose(1, 2)?.contiguous()
        };
        let q = split(self.q.forward(x)?)?;
        let k = split(self.k.forward(x)?)?;
        let v = split(self.v.forward(x)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?;
        let weights = candle_nn::ops::softmax_last_dim(&scores)?;
        let ctx = weights.matmul(&v)?;
        self.o.forward(&ctx.transpose(1, 2)?.contiguous()?.reshape((b, l, h))?)
    }
}

struct EncoderLayer {
    attn: SelfAttention,
    attn_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    ff_norm: LayerNorm,
}

impl EncoderLayer {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        Ok(EncoderLayer {
            attn: SelfAttention::new(cfg, vb.pp("attn"))?,
            attn_norm: layer_norm(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("attn_norm"))?,
            ff_in: linear(cfg.hidden_size, cfg.intermediate_size, vb.pp("ff_in"))?,
            ff_out: linear(cfg.intermediate_size, cfg.hidden_size, vb.pp("ff_out"))?,
            ff_norm: layer_norm(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("ff_norm"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let attn = self.attn.forward(x)?;
        let x = self.attn_norm.forward(&(x + attn)?)?;
        let ff = self.ff_out.forward(&self.ff_in.forward(&x)?.gelu_erf()?)?;
        self.ff_norm.forward(&(&x + ff)?)
    }
}

/// The encoder stack. Inputs are batches of equal-length token id rows
/// (no padding or attention masking — callers run single sequences or
/// length-homogeneous batches).
pub struct TransformerEncoder {
    token_emb: Embedding,
    pos_emb: Embedding,
    emb_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
    config: EncoderConfig,
    device: Device,
}

impl TransformerEncoder {
    pub fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.num_layers)
            .map(|i| EncoderLayer::new(cfg, vb.pp(format!("layers.{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformerEncoder {
            token_emb: embedding(cfg.vocab_size, cfg.hidden_size, vb.pp("tok_emb"))?,
            pos_emb: embedding(cfg.max_positions, cfg.hidden_size, vb.pp("pos_emb"))?,
            emb_norm: layer_norm(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("emb_norm"))?,
            layers,
            config: cfg.clone(),
            device: vb.device().clone(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Encode `(batch, len)` token ids (with [CLS] already at position 0)
    /// into the `(batch, hidden)` pooled first-position representation.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let (_, l) = ids.dims2()?;
        if l == 0 {
            bail!("cannot encode an empty sequence");
        }
        if l > self.config.max_positions {
            bail!("sequence length {l} exceeds max_positions {}", self.config.max_positions);
        }
        let tok = self.token_emb.forward(ids)?;
        let positions = Tensor::arange(0u32, l as u32, &self.device)?;
        let pos = self.pos_emb.forward(&positions)?;
        let mut h = tok.broadcast_add(&pos)?;
        h = self.emb_norm.forward(&h)?;
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        h.narrow(1, 0, 1)?.squeeze(1)
    }
}

/// Overwrite every parameter in `varmap` with a deterministic seeded
/// initialization: N(0, 0.02) for weight matrices, ones for layer-norm
/// gains, zeros for biases and for any name listed in `zeroed` (used to
/// start classifier heads at an exactly symmetric output).
pub fn seeded_init(varmap: &VarMap, seed: u64, zeroed: &[&str]) -> Result<()> {
    let mut names: Vec<String> = varmap.data().lock().unwrap().keys().cloned().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::<f32>::new(0.0, 0.02).expect("valid stdev");
    for name in names {
        let var = varmap.data().lock().unwrap().get(&name).expect("listed name").clone();
        let shape = var.shape().clone();
        let device = var.device().clone();
        let is_norm_gain = name.contains("norm") && name.ends_with(".weight");
        let t = if name.ends_with(".bias") || zeroed.contains(&name.as_str()) {
            Tensor::zeros(&shape, DType::F32, &device)?
        } else if is_norm_gain {
            Tensor::ones(&shape, DType::F32, &device)?
        } else {
            let n: usize = shape.elem_count();
            let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            Tensor::from_vec(data, &shape, &device)?
        };
        var.set(&t)?;
    }
    Ok(())
}

/// Convert a content token id sequence to the `(1, len + 1)` input tensor
/// with [CLS] prepended, truncated to fit the encoder's position table.
pub fn input_tensor(ids: &[u32], max_tokens: usize, cfg: &EncoderConfig, device: &Device) -> Result<Tensor> {
    let budget = max_tokens.min(cfg.max_positions - 1);
    let take = ids.len().min(budget);
    let mut row = Vec::with_capacity(take + 1);
    row.push(CLS_ID);
    row.extend_from_slice(&ids[..take]);
    let len = row.len();
    Tensor::from_vec(row, (1, len), device)
}
