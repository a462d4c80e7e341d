//! Losses, the alternating two-phase training loop and transfer re-training.
//!
//! Each epoch first refreshes the MI statistics network on symbols produced
//! by the frozen transmitter (phase 1), then runs one pass of the whole
//! transceiver over the corpus with `L_total = L_CE − λ·L_MI` (phase 2).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, ComplexSymbolBlock, Realization};
use crate::miest::{self, derangement, mi_lower_bound, symbol_pairs, MiError, MiNetwork, MiTrainConfig};
use crate::tensor::{Adam, AdamConfig, Graph, Optimizer, ParamGroup, ParamId, Sgd, Tensor, TensorError, Var};
use crate::textdata::{make_batches, Corpus, Vocabulary};
use crate::transceiver::{DeepSc, ModelError};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("freeze set covers every model parameter")]
    NothingToTrain,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Mi,
    Whole,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Mi => "mi",
            Phase::Whole => "whole",
        }
    }
}

/// Per-epoch loss summary. Fields that a phase does not compute are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub phase: Phase,
    pub ce: f64,
    pub mi_bound: f64,
    pub total: f64,
}

/// How the MI term enters the total loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSign {
    /// `ce − λ·mi`: minimizing the loss raises the bound.
    #[default]
    Maximize,
    /// `ce + λ·mi`, the literal printed form.
    Printed,
}

impl LossSign {
    fn factor(self) -> f64 {
        match self {
            LossSign::Maximize => -1.0,
            LossSign::Printed => 1.0,
        }
    }
}

/// Parameter groups kept fixed during a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeSpec {
    pub frozen: BTreeSet<ParamGroup>,
}

impl FreezeSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// New background knowledge: keep the channel codec {α, δ}.
    pub fn knowledge() -> Self {
        Self {
            frozen: [ParamGroup::ChannelEncoder, ParamGroup::ChannelDecoder].into(),
        }
    }

    /// New channel: keep the semantic codec {β, χ} and the embeddings.
    pub fn channel() -> Self {
        Self {
            frozen: [ParamGroup::SemanticEncoder, ParamGroup::SemanticDecoder, ParamGroup::Embedding].into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ParamGroup::MODEL.iter().all(|g| self.frozen.contains(g)) {
            return Err(TrainError::NothingToTrain);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the MI term; 0 disables phase 1 entirely.
    pub lambda: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_sign: LossSign,
    /// Channel seen during training.
    pub channel: ChannelConfig,
    pub mi_steps: usize,
    /// Scale the MI part of each transceiver gradient down to at most the
    /// cross-entropy gradient's norm.
    pub mi_grad_clip: bool,
    pub mi_batch_size: usize,
    pub mi_lr: f64,
    pub mi_hidden: usize,
    pub mi_final_relu: bool,
    /// Early stop when the best total loss improves by less than this over `stop_patience` epochs.
    pub stop_tol: f64,
    pub stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            epochs: 30,
            batch_size: 64,
            loss_sign: LossSign::Maximize,
            channel: ChannelConfig::awgn(12.0),
            mi_steps: 100,
            mi_grad_clip: true,
            mi_batch_size: 256,
            mi_lr: 1e-3,
            mi_hidden: 256,
            mi_final_relu: false,
            stop_tol: 1e-4,
            stop_patience: 3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(0.0..=1.0).contains(&self.lambda) {
            p.push(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.lr >= 0.0) || !(self.mi_lr >= 0.0) {
            p.push("learning rates must be non-negative".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be positive".into());
        }
        if self.mi_batch_size < 2 {
            p.push("mi_batch_size must be at least 2".into());
        }
        if let Err(e) = self.channel.validate() {
            p.push(e);
        }
        p
    }
}

/// Teacher-forced categorical cross-entropy over non-PAD targets. `logits: [N, |V|]`.
/// The flag is true when every position was masked (the loss is then 0).
pub fn ce_loss<T: Scalar>(g: &mut Graph<T>, logits: Var, targets: &[usize], mask: &[bool]) -> Result<(Var, bool)> {
    let (l, n) = g.cross_entropy(logits, targets, mask)?;
    Ok((l, n == 0))
}

/// `ce + sign·λ·mi` on the graph.
pub fn total_loss<T: Scalar>(g: &mut Graph<T>, ce: Var, mi: Var, lambda: f64, sign: LossSign) -> Result<Var> {
    let t = g.scale(mi, T::lit(sign.factor() * lambda));
    Ok(g.add(ce, t)?)
}

/// Scalar form of [`total_loss`].
pub fn total_value(ce: f64, mi: f64, lambda: f64, sign: LossSign) -> f64 {
    ce + sign.factor() * lambda * mi
}

fn make_optimizer<T: Scalar>(kind: OptimizerKind, lr: f64) -> Box<dyn Optimizer<T>> {
    match kind {
        OptimizerKind::Adam => Box::new(Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })),
        OptimizerKind::Sgd => Box::new(Sgd { lr }),
    }
}

/// Owns a model, its MI network, optimizer state and the random stream of one run.
pub struct Trainer<T: Scalar> {
    pub model: DeepSc<T>,
    pub mi_net: MiNetwork<T>,
    pub config: TrainConfig,
    opt: Box<dyn Optimizer<T>>,
    mi_opt: Adam<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: DeepSc<T>, config: TrainConfig) -> Result<Self> {
        let p = config.problems();
        if !p.is_empty() {
            return Err(TrainError::Config(p.join("; ")));
        }
        FreezeSpec {
            frozen: model.frozen.clone(),
        }
        .validate()?;
        let u = model.config.channel_units;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mi_net = MiNetwork::new(u, u, config.mi_hidden, config.mi_final_relu, rng.random());
        Ok(Self {
            opt: make_optimizer(config.optimizer, config.lr),
            mi_opt: miest::mi_optimizer(config.mi_lr),
            model,
            mi_net,
            config,
            rng,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Transmitted/received symbol pairs `[S, 2N]` over non-PAD positions of up to
    /// `max_batches` batches, through freshly sampled channel realizations.
    pub fn collect_symbols(
        &mut self,
        corpus: &Corpus,
        vocab: &Vocabulary,
        channel: &ChannelConfig,
        max_samples: usize,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let u = self.model.config.channel_units;
        let n = u / 2;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let seed = self.rng.random();
        for batch in make_batches(corpus, vocab, self.config.batch_size, Some(seed)) {
            let x = self.model.encode_symbols(&batch)?;
            let xb = ComplexSymbolBlock::from_tensor(&x)?;
            let r = Realization::sample(channel, batch.batch_size, batch.seq_len, n, &mut self.rng);
            let y = channel::apply(&xb, &r).to_tensor();
            for (pos, &valid) in batch.pad_mask.iter().enumerate() {
                if valid {
                    xs.extend_from_slice(&x.data()[pos * u..(pos + 1) * u]);
                    ys.extend_from_slice(&y.data()[pos * u..(pos + 1) * u]);
                }
            }
            if xs.len() / u >= max_samples {
                break;
            }
        }
        let s = xs.len() / u;
        Ok((Tensor::new(vec![s, u], xs)?, Tensor::new(vec![s, u], ys)?))
    }

    /// Phase 1: refresh the MI network with the transceiver fixed. Returns the bound trace.
    pub fn train_phase1(&mut self, corpus: &Corpus, vocab: &Vocabulary, steps: usize) -> Result<Vec<f64>> {
        if steps == 0 {
            return Ok(Vec::new());
        }
        let want = (self.config.mi_batch_size * 8).max(1024);
        let channel = self.config.channel.clone();
        let (x, y) = self.collect_symbols(corpus, vocab, &channel, want)?;
        let cfg = MiTrainConfig {
            steps,
            lr: self.config.mi_lr,
            batch_size: self.config.mi_batch_size,
            shuffles: 1,
            seed: self.rng.random(),
        };
        Ok(miest::train_mi(&mut self.mi_net, &x, &y, &cfg, &mut self.mi_opt)?)
    }

    /// Phase 2: one pass of the whole transceiver over `corpus`. Returns the epoch means.
    pub fn train_phase2_epoch(&mut self, corpus: &Corpus, vocab: &Vocabulary) -> Result<LossReport> {
        let lambda = self.config.lambda;
        let use_mi = lambda > 0.0;
        let n = self.model.config.symbols_per_word();
        let (mut ce_sum, mut mi_sum, mut tot_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
        let seed = self.rng.random();
        for (bi, batch) in make_batches(corpus, vocab, self.config.batch_size, Some(seed)).enumerate() {
            let r = Realization::sample(&self.config.channel, batch.batch_size, batch.seq_len, n, &mut self.rng);
            let mut g = Graph::new(self.rng.random());
            let (ce, mi, total) = {
                let mut f = self.model.fwd(&mut g, true);
                let pass = self.model.forward(&mut f, &batch, &r)?;
                let (_, target, mask) = batch.shifted();
                let (ce, _) = ce_loss(&mut g, pass.logits, &target, &mask)?;
                if use_mi {
                    let (xs, ys) = symbol_pairs(&mut g, pass.x, pass.y, &batch.pad_mask)?;
                    let s = g.shape(xs)[0];
                    let perm = derangement(s, &mut self.rng);
                    let mi = mi_lower_bound(&mut g, &self.mi_net, xs, ys, &perm, false)?;
                    let total = total_loss(&mut g, ce, mi, lambda, self.config.loss_sign)?;
                    (ce, Some(mi), total)
                } else {
                    (ce, None, ce)
                }
            };
            let tv = g.value(total).data()[0].as_f64();
            if !tv.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: bi,
                });
            }
            ce_sum += g.value(ce).data()[0].as_f64();
            mi_sum += mi.map_or(f64::NAN, |m| g.value(m).data()[0].as_f64());
            tot_sum += tv;
            count += 1;
            if mi.is_some() && self.config.mi_grad_clip {
                g.backward(ce)?;
                let ce_grads: Vec<(ParamId, Vec<T>)> = g.param_grads().into_iter().map(|(id, v)| (id, v.to_vec())).collect();
                g.backward(total)?;
                let grads = clip_mi_gradient(ce_grads, &g.param_grads());
                let refs: Vec<(ParamId, &[T])> = grads.iter().map(|(id, v)| (*id, v.as_slice())).collect();
                self.opt.step(&mut self.model.params, &refs)?;
            } else {
                g.backward(total)?;
                self.opt.step(&mut self.model.params, &g.param_grads())?;
            }
        }
        let c = count.max(1) as f64;
        Ok(LossReport {
            epoch: self.epoch,
            phase: Phase::Whole,
            ce: ce_sum / c,
            mi_bound: mi_sum / c,
            total: tot_sum / c,
        })
    }

    /// One epoch of the alternating loop: MI refresh (when λ > 0) then the whole network.
    pub fn run_epoch(&mut self, corpus: &Corpus, vocab: &Vocabulary) -> Result<Vec<LossReport>> {
        let mut out = Vec::with_capacity(2);
        if self.config.lambda > 0.0 {
            let trace = self.train_phase1(corpus, vocab, self.config.mi_steps)?;
            if !trace.is_empty() {
                let tail = &trace[trace.len().saturating_sub(10)..];
                out.push(LossReport {
                    epoch: self.epoch,
                    phase: Phase::Mi,
                    ce: f64::NAN,
                    mi_bound: tail.iter().sum::<f64>() / tail.len() as f64,
                    total: f64::NAN,
                });
            }
        }
        out.push(self.train_phase2_epoch(corpus, vocab)?);
        self.epoch += 1;
        Ok(out)
    }

    /// Up to `config.epochs` epochs with the stagnation stop rule; `on_report` sees every record.
    pub fn train(
        &mut self,
        corpus: &Corpus,
        vocab: &Vocabulary,
        mut on_report: impl FnMut(&LossReport),
    ) -> Result<Vec<LossReport>> {
        let mut all = Vec::new();
        let mut history = Vec::new();
        for _ in 0..self.config.epochs {
            let reports = self.run_epoch(corpus, vocab)?;
            for r in &reports {
                log::info!(
                    "epoch {} {}: ce {:.4} mi {:.4} total {:.4}",
                    r.epoch,
                    r.phase.name(),
                    r.ce,
                    r.mi_bound,
                    r.total
                );
                on_report(r);
            }
            history.push(reports.last().map_or(f64::NAN, |r| r.total));
            all.extend(reports);
            if stagnated(&history, self.config.stop_patience, self.config.stop_tol) {
                log::info!("loss stagnated, stopping after {} epochs", history.len());
                break;
            }
        }
        Ok(all)
    }
}

/// Cross-entropy gradient plus the MI part of the total gradient (`total − ce`),
/// the latter rescaled so its norm never exceeds the cross-entropy gradient's
/// norm over the same parameters.
pub fn clip_mi_gradient<T: Scalar>(ce: Vec<(ParamId, Vec<T>)>, total: &[(ParamId, &[T])]) -> Vec<(ParamId, Vec<T>)> {
    let ce: BTreeMap<ParamId, Vec<T>> = ce.into_iter().collect();
    let split: Vec<(ParamId, Vec<f64>, Vec<f64>)> = total
        .iter()
        .map(|&(id, t)| {
            let c: Vec<f64> = match ce.get(&id) {
                Some(c) => c.iter().map(|v| v.as_f64()).collect(),
                None => vec![0.0; t.len()],
            };
            let m = t.iter().zip(&c).map(|(t, c)| t.as_f64() - c).collect();
            (id, c, m)
        })
        .collect();
    let (mut nc, mut nm) = (0.0, 0.0);
    for (_, c, m) in &split {
        if m.iter().any(|v| *v != 0.0) {
            nc += c.iter().map(|v| v * v).sum::<f64>();
            nm += m.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let (nc, nm) = (nc.sqrt(), nm.sqrt());
    let scale = if nm > nc { nc / nm } else { 1.0 };
    split
        .into_iter()
        .map(|(id, c, m)| (id, c.iter().zip(&m).map(|(c, m)| T::from_f64(c + scale * m).unwrap()).collect()))
        .collect()
}

/// True when the last `patience` values improved the best earlier value by less than `tol`.
pub fn stagnated(history: &[f64], patience: usize, tol: f64) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    let split = history.len() - patience;
    let best_before = history[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = history[split..].iter().copied().fold(f64::INFINITY, f64::min);
    best_before - best_recent < tol
}

/// Re-train a pretrained model with some groups frozen.
pub fn transfer_train<T: Scalar>(
    mut pretrained: DeepSc<T>,
    freeze: &FreezeSpec,
    config: TrainConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
    on_report: impl FnMut(&LossReport),
) -> Result<(DeepSc<T>, Vec<LossReport>)> {
    freeze.validate()?;
    pretrained.frozen = freeze.frozen.clone();
    let mut t = Trainer::new(pretrained, config)?;
    let reports = t.train(corpus, vocab, on_report)?;
    let mut model = t.model;
    model.frozen.clear();
    Ok((model, reports))
}

/// 1-based index of the first whole-network epoch whose CE is at most `threshold`.
pub fn epochs_to_threshold(reports: &[LossReport], threshold: f64) -> Option<usize> {
    reports
        .iter()
        .filter(|r| r.phase == Phase::Whole)
        .position(|r| r.ce <= threshold)
        .map(|i| i + 1)
}
