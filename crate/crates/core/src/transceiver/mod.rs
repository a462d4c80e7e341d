//! The DeepSC transceiver: semantic encoder (β), channel encoder (α),
//! channel decoder (δ) and semantic decoder with prediction layer (χ),
//! sharing one word-embedding table.
//!
//! ```text
//! tokens ─ embed+PE ─ encoder×n ─ Dense(256,relu) ─ Dense(2N,relu) ─ power norm ─ X
//! Y ─ Dense(256,relu) ─ Dense(D,relu) ─ M̂ ─ decoder×n (causal self, cross over M̂) ─ Linear(|V|)
//! ```

mod checkpoint;
pub mod layers;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::Fwd;
use layers::{attention_mask, positional_encoding, DecoderLayer, EncoderLayer, Linear};

use crate::channel::{self, ChannelConfig, Realization};
use crate::tensor::{Graph, ParamGroup, ParamId, ParamStore, Tensor, TensorError, Var};
use crate::textdata::{TokenBatch, Vocabulary, END, PAD, START};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid transceiver config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransceiverConfig {
    pub num_enc_layers: usize,
    pub num_dec_layers: usize,
    /// Width `D` of embeddings and Transformer layers.
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Hidden width of the channel encoder/decoder dense layers.
    pub channel_hidden: usize,
    /// Reals per word, `2N` for `N` complex symbols.
    pub channel_units: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for TransceiverConfig {
    fn default() -> Self {
        Self {
            num_enc_layers: 3,
            num_dec_layers: 3,
            model_dim: 128,
            heads: 8,
            ffn_dim: 512,
            channel_hidden: 256,
            channel_units: 16,
            vocab_size: 0,
            dropout_rate: 0.1,
        }
    }
}

impl TransceiverConfig {
    /// All violations, one per entry.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.heads) {
            p.push(format!("model_dim {} must be a positive multiple of heads {}", self.model_dim, self.heads));
        }
        if self.channel_units == 0 || !self.channel_units.is_multiple_of(2) {
            p.push(format!("channel_units must be even and positive, got {}", self.channel_units));
        }
        if self.vocab_size <= 4 {
            p.push(format!("vocab_size must exceed the 4 special tokens, got {}", self.vocab_size));
        }
        if self.ffn_dim == 0 || self.channel_hidden == 0 {
            p.push("ffn_dim and channel_hidden must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            p.push(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(p.join("; ")))
        }
    }

    /// Complex symbols per word.
    pub fn symbols_per_word(&self) -> usize {
        self.channel_units / 2
    }
}

/// Graph nodes of one full teacher-forced pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardPass {
    /// Normalized transmitted symbols `[B, L, 2N]`.
    pub x: Var,
    /// Received symbols `[B, L, 2N]`.
    pub y: Var,
    /// Prediction logits `[B·(L-1), |V|]`.
    pub logits: Var,
    /// True when the channel encoder emitted an all-zero block.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct DeepSc<T: Scalar> {
    pub config: TransceiverConfig,
    pub params: ParamStore<T>,
    /// Groups whose parameters are brought onto the tape without gradient tracking.
    pub frozen: BTreeSet<ParamGroup>,
    embedding: ParamId,
    encoder: Vec<EncoderLayer>,
    channel_encoder: [Linear; 2],
    channel_decoder: [Linear; 2],
    decoder: Vec<DecoderLayer>,
    predict: Linear,
}

impl<T: Scalar> DeepSc<T> {
    /// Seeded initialization.
    pub fn new(config: TransceiverConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = c.model_dim;
        let a = (3.0 / d as f64).sqrt();
        let table = Tensor::from_fn(&[c.vocab_size, d], |_| T::lit(rng.random_range(-a..a)));
        let embedding = store.add("embedding", ParamGroup::Embedding, table);
        let encoder = (0..c.num_enc_layers)
            .map(|i| {
                let name = format!("enc.{i}");
                EncoderLayer::new(&mut store, &mut rng, &name, ParamGroup::SemanticEncoder, d, c.heads, c.ffn_dim)
            })
            .collect();
        let ce = ParamGroup::ChannelEncoder;
        let channel_encoder = [
            Linear::new(&mut store, &mut rng, "chenc.0", ce, d, c.channel_hidden),
            Linear::new(&mut store, &mut rng, "chenc.1", ce, c.channel_hidden, c.channel_units),
        ];
        let cd = ParamGroup::ChannelDecoder;
        let channel_decoder = [
            Linear::new(&mut store, &mut rng, "chdec.0", cd, c.channel_units, c.channel_hidden),
            Linear::new(&mut store, &mut rng, "chdec.1", cd, c.channel_hidden, d),
        ];
        let decoder = (0..c.num_dec_layers)
            .map(|i| {
                let name = format!("dec.{i}");
                DecoderLayer::new(&mut store, &mut rng, &name, ParamGroup::SemanticDecoder, d, c.heads, c.ffn_dim)
            })
            .collect();
        let predict = Linear::new(&mut store, &mut rng, "predict", ParamGroup::SemanticDecoder, d, c.vocab_size);
        Ok(Self {
            config,
            params: store,
            frozen: BTreeSet::new(),
            embedding,
            encoder,
            channel_encoder,
            channel_decoder,
            decoder,
            predict,
        })
    }

    pub fn fwd<'a>(&'a self, g: &'a mut Graph<T>, train: bool) -> Fwd<'a, T> {
        Fwd {
            g,
            store: &self.params,
            frozen: &self.frozen,
            train,
            dropout: self.config.dropout_rate,
        }
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    /// Prediction layer `(w: [D, |V|], b: [|V|])`.
    pub fn prediction_ids(&self) -> (ParamId, ParamId) {
        (self.predict.w, self.predict.b)
    }

    fn embed(&self, f: &mut Fwd<T>, tokens: &[usize], b: usize, l: usize) -> Result<Var> {
        let d = self.config.model_dim;
        let table = f.p(self.embedding);
        let e = f.g.embedding(table, tokens, &[b, l])?;
        let e = f.g.scale(e, T::lit((d as f64).sqrt()));
        let pe = f.g.constant(positional_encoding(l, d));
        let e = f.g.add(e, pe)?;
        Ok(f.drop(e)?)
    }

    /// `S_β`: tokens `[B, L]` with validity mask to `M: [B, L, D]`.
    pub fn semantic_encode(&self, f: &mut Fwd<T>, tokens: &[usize], valid: &[bool], b: usize, l: usize) -> Result<Var> {
        let mut x = self.embed(f, tokens, b, l)?;
        let mask = f.g.constant(attention_mask(b, self.config.heads, l, l, Some(valid), false));
        for layer in &self.encoder {
            x = layer.forward(f, x, mask)?;
        }
        Ok(x)
    }

    /// `C_α`: `M` to unit-power symbols `X: [B, L, 2N]`. The flag reports an all-zero block.
    pub fn channel_encode(&self, f: &mut Fwd<T>, m: Var) -> Result<(Var, bool)> {
        let h = self.channel_encoder[0].forward_relu(f, m)?;
        let x = self.channel_encoder[1].forward_relu(f, h)?;
        power_normalize(f.g, x)
    }

    /// `C⁻¹_δ`: `Y` to `M̂: [B, L, D]`.
    pub fn channel_decode(&self, f: &mut Fwd<T>, y: Var) -> Result<Var> {
        let h = self.channel_decoder[0].forward_relu(f, y)?;
        Ok(self.channel_decoder[1].forward_relu(f, h)?)
    }

    /// `S⁻¹_χ` with teacher forcing: decoder input `[B, Lt]` over memory `[B, L, D]`,
    /// returning logits `[B·Lt, |V|]`.
    pub fn semantic_decode(
        &self,
        f: &mut Fwd<T>,
        memory: Var,
        src_valid: &[bool],
        dec_input: &[usize],
        b: usize,
        lt: usize,
    ) -> Result<Var> {
        let ls = f.g.shape(memory)[1];
        let h = self.config.heads;
        let mut x = self.embed(f, dec_input, b, lt)?;
        let self_mask = f.g.constant(attention_mask(b, h, lt, lt, None, true));
        let cross_mask = f.g.constant(attention_mask(b, h, lt, ls, Some(src_valid), false));
        for layer in &self.decoder {
            x = layer.forward(f, x, memory, self_mask, cross_mask)?;
        }
        let x = f.g.reshape(x, &[b * lt, self.config.model_dim])?;
        Ok(self.predict.forward(f, x)?)
    }

    /// Teacher-forced pass through a sampled channel realization.
    pub fn forward(&self, f: &mut Fwd<T>, batch: &TokenBatch, channel: &Realization<T>) -> Result<ForwardPass> {
        let (b, l) = (batch.batch_size, batch.seq_len);
        let m = self.semantic_encode(f, &batch.tokens, &batch.pad_mask, b, l)?;
        let (x, degenerate) = self.channel_encode(f, m)?;
        let y = channel::apply_graph(f.g, x, channel)?;
        let mh = self.channel_decode(f, y)?;
        let (input, _, _) = batch.shifted();
        let logits = self.semantic_decode(f, mh, &batch.pad_mask, &input, b, l - 1)?;
        Ok(ForwardPass {
            x,
            y,
            logits,
            degenerate,
        })
    }

    /// Transmitted symbols `[B, L, 2N]` for a batch, evaluation mode.
    pub fn encode_symbols(&self, batch: &TokenBatch) -> Result<Tensor<T>> {
        let mut g = Graph::new(0);
        let mut f = self.fwd(&mut g, false);
        let m = self.semantic_encode(&mut f, &batch.tokens, &batch.pad_mask, batch.batch_size, batch.seq_len)?;
        let (x, _) = self.channel_encode(&mut f, m)?;
        Ok(g.value(x).clone())
    }

    /// Greedy decoding of received symbols `[B, L, 2N]`, at most `max_len` steps per row.
    pub fn decode_symbols(&self, y: &Tensor<T>, src_valid: &[bool], max_len: usize) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new(0);
        let memory = {
            let mut f = self.fwd(&mut g, false);
            let yv = f.g.constant(y.clone());
            let mh = self.channel_decode(&mut f, yv)?;
            f.g.value(mh).clone()
        };
        let b = y.shape()[0];
        let v = self.config.vocab_size;
        greedy_search(b, max_len, |prefixes| {
            let lt = prefixes[0].len();
            let tokens: Vec<usize> = prefixes.iter().flatten().copied().collect();
            let mut g = Graph::new(0);
            let mut f = self.fwd(&mut g, false);
            let mem = f.g.constant(memory.clone());
            let logits = self.semantic_decode(&mut f, mem, src_valid, &tokens, b, lt)?;
            let data = g.value(logits).data();
            Ok((0..b)
                .map(|r| data[(r * lt + lt - 1) * v..(r * lt + lt) * v].to_vec())
                .collect())
        })
    }

    /// Encode, pass through a freshly sampled channel, decode. One word list per row.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        batch: &TokenBatch,
        channel: &ChannelConfig,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        let x = self.encode_symbols(batch)?;
        let n = self.config.symbols_per_word();
        let r = Realization::sample(channel, batch.batch_size, batch.seq_len, n, rng);
        let xb = channel::ComplexSymbolBlock::from_tensor(&x)?;
        let y = channel::apply(&xb, &r).to_tensor();
        self.decode_symbols(&y, &batch.pad_mask, batch.seq_len - 1)
    }

    /// Copy of this model for a different vocabulary. Parameters carry over by name;
    /// embedding rows and prediction columns carry over for words present in both
    /// vocabularies, new words keep their fresh seeded initialization.
    pub fn remap_vocab(&self, old: &Vocabulary, new: &Vocabulary, seed: u64) -> Result<Self> {
        if old.len() != self.config.vocab_size {
            return Err(ModelError::Config(format!(
                "model vocabulary has {} entries, old vocabulary {}",
                self.config.vocab_size,
                old.len()
            )));
        }
        let mut config = self.config.clone();
        config.vocab_size = new.len();
        let mut out = Self::new(config, seed)?;
        out.frozen = self.frozen.clone();
        let d = self.config.model_dim;
        let pairs: Vec<(usize, usize)> = (0..new.len())
            .filter_map(|j| {
                let w = new.word(j)?;
                old.index_of(w).map(|i| (i, j))
            })
            .collect();
        let (pw, pb) = self.prediction_ids();
        for (id, p) in self.params.iter() {
            let dst = out.params.id_of(&p.name).expect("same architecture");
            if id == self.embedding {
                let mut t = out.params.value(dst).clone();
                for &(i, j) in &pairs {
                    let src = &p.value.data()[i * d..(i + 1) * d];
                    t.data_mut()[j * d..(j + 1) * d].copy_from_slice(src);
                }
                out.params.set(dst, t)?;
            } else if id == pw {
                let (vo, vn) = (old.len(), new.len());
                let mut t = out.params.value(dst).clone();
                for r in 0..d {
                    for &(i, j) in &pairs {
                        t.data_mut()[r * vn + j] = p.value.data()[r * vo + i];
                    }
                }
                out.params.set(dst, t)?;
            } else if id == pb {
                let mut t = out.params.value(dst).clone();
                for &(i, j) in &pairs {
                    t.data_mut()[j] = p.value.data()[i];
                }
                out.params.set(dst, t)?;
            } else {
                out.params.set(dst, p.value.clone())?;
            }
        }
        Ok(out)
    }

    /// Word-embedding table rows, `[|V|, D]`.
    pub fn embedding_table(&self) -> &Tensor<T> {
        self.params.value(self.embedding)
    }
}

/// Scale `x` so that the mean of `re² + im²` over the whole block is 1.
/// An all-zero block is replaced by zeros and flagged.
pub fn power_normalize<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<(Var, bool)> {
    let sq = g.mul(x, x)?;
    let p = g.mean_all(sq);
    let pv = g.value(p).data()[0];
    if !(pv > T::zero()) || !pv.is_finite() {
        let zeros = Tensor::zeros(g.shape(x));
        return Ok((g.constant(zeros), true));
    }
    // mean over reals is half the mean power per complex symbol
    let p2 = g.scale(p, T::lit(2.0));
    let inv = g.powf(p2, T::lit(-0.5));
    Ok((g.mul(x, inv)?, false))
}

/// Autoregressive argmax decoding. `step` receives the current prefixes (all the same
/// length, starting with START; finished rows are padded) and returns the last-position
/// logits of every row. Rows stop at END or PAD; output excludes START/END.
pub fn greedy_search<T: Scalar, E>(
    batch: usize,
    max_len: usize,
    mut step: impl FnMut(&[Vec<usize>]) -> std::result::Result<Vec<Vec<T>>, E>,
) -> std::result::Result<Vec<Vec<usize>>, E> {
    let mut prefixes = vec![vec![START]; batch];
    let mut out = vec![Vec::new(); batch];
    let mut done = vec![false; batch];
    for _ in 0..max_len {
        if done.iter().all(|&d| d) {
            break;
        }
        let logits = step(&prefixes)?;
        for r in 0..batch {
            if done[r] {
                prefixes[r].push(PAD);
                continue;
            }
            let next = argmax(&logits[r]);
            if next == END || next == PAD {
                done[r] = true;
                prefixes[r].push(PAD);
            } else {
                prefixes[r].push(next);
                if next != START {
                    out[r].push(next);
                }
            }
        }
    }
    Ok(out)
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
