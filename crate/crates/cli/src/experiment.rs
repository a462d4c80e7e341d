use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcom_core::channel::{self, ChannelConfig, ChannelKind, ComplexSymbolBlock, Realization};
use semcom_core::classic::{baseline_transmit, qam};
use semcom_core::metrics::{bleu_series, cosine, EmbeddingProvider, MetricsError};
use semcom_core::miest::{self, HeldOut, MiNetwork, MiTrainConfig};
use semcom_core::textdata::{make_batches, tokenize, Corpus, Vocabulary};
use semcom_core::training::{transfer_train, LossReport, Trainer};
use semcom_core::{DeepSc, Tensor};

use crate::config::{RunConfig, TransferMode};
use crate::data::{self, Dataset};
use crate::error::{CliError, Result};
use crate::report::{Metric, MetricsReport, Row};

pub type Provider<'a> = &'a (dyn EmbeddingProvider + Sync);

/// A trained model with the configuration that produced it (vocabulary size and
/// symbol budget resolved).
pub struct Trained {
    pub model: DeepSc,
    pub config: RunConfig,
    pub reports: Vec<LossReport>,
}

/// Fill in the data-dependent model settings: vocabulary size, and the symbol
/// budget when matching the baseline. Returns the baseline's symbols per word in that case.
pub fn resolve_model(cfg: &mut RunConfig, data: &Dataset) -> Result<Option<f64>> {
    cfg.model.vocab_size = data.vocab.len();
    if !cfg.eval.match_baseline_budget {
        return Ok(None);
    }
    let coder = data::source_coder(cfg.baseline.source, &data.train)?;
    let target = data::baseline_symbols_per_word(&data.test, &coder, &cfg.baseline.code()?)?;
    let n = data::match_symbols(&data.test, target);
    log::info!(
        "baseline spends {target:.2} symbols/word; DeepSC uses {n} per token ({:.2} per word)",
        data::deepsc_symbols_per_word(&data.test, n)
    );
    cfg.model.channel_units = 2 * n;
    Ok(Some(target))
}

/// Alternating MI / whole-network training from a seeded initialization.
pub fn train(cfg: &RunConfig, data: &Dataset, on_report: impl FnMut(&LossReport)) -> Result<Trained> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    resolve_model(&mut cfg, data)?;
    cfg.train.seed = cfg.seed;
    let model = DeepSc::new(cfg.model.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let reports = trainer.train(&data.train, &data.vocab, on_report)?;
    Ok(Trained {
        model: trainer.model,
        config: cfg,
        reports,
    })
}

/// Re-train `base` for a new channel or new sentences with half the network frozen.
pub fn transfer(
    cfg: &RunConfig,
    base: &DeepSc,
    base_vocab: &Vocabulary,
    on_report: impl FnMut(&LossReport),
) -> Result<(Trained, Dataset)> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let mode = cfg.transfer.mode;
    let (model, data) = match mode {
        TransferMode::Channel => {
            let mut data = data::prepare(&cfg)?;
            if data.vocab != *base_vocab {
                log::warn!("rebuilt vocabulary differs from the checkpoint's; using the checkpoint's");
                data.vocab = base_vocab.clone();
            }
            (base.clone(), data)
        }
        TransferMode::Knowledge => {
            let data = data::prepare_transfer(&cfg, base_vocab)?;
            (base.remap_vocab(base_vocab, &data.vocab, cfg.seed)?, data)
        }
    };
    cfg.model = model.config.clone();
    cfg.train.seed = cfg.seed;
    cfg.train.channel = cfg.transfer.channel.clone();
    cfg.train.epochs = cfg.transfer.epochs;
    let (model, reports) = transfer_train(
        model,
        &mode.freeze(),
        cfg.train.clone(),
        &data.train,
        &data.vocab,
        on_report,
    )?;
    Ok((
        Trained {
            model,
            config: cfg,
            reports,
        },
        data,
    ))
}

/// Channel of one sweep point.
pub fn sweep_channel(kind: ChannelKind, x: f64) -> ChannelConfig {
    match kind {
        ChannelKind::Erasure => ChannelConfig::erasure(x),
        _ => ChannelConfig::awgn(x),
    }
}

fn sweep_points(cfg: &RunConfig) -> Vec<(ChannelKind, f64)> {
    cfg.eval
        .snr_db
        .iter()
        .map(|&s| (ChannelKind::Awgn, s))
        .chain(cfg.eval.erasure_p.iter().map(|&p| (ChannelKind::Erasure, p)))
        .collect()
}

fn phase_name(system: &str, kind: ChannelKind) -> String {
    match kind {
        ChannelKind::Erasure => format!("{system}_erasure"),
        _ => system.to_string(),
    }
}

/// Independent random stream for sweep point `i`.
fn point_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64 + 1);
    r
}

/// Sums of per-sentence scores at one sweep point.
#[derive(Clone, Debug, Default)]
struct Scores {
    bleu: Vec<f64>,
    similarity: f64,
    undefined_similarity: usize,
    n: usize,
}

fn score(
    cfg: &RunConfig,
    refs: &[Vec<String>],
    cands: &[Vec<String>],
    provider: Option<Provider>,
) -> Result<Scores> {
    let max_n = cfg.metrics.max_n;
    let mut s = Scores {
        bleu: vec![0.0; max_n],
        ..Scores::default()
    };
    for (r, c) in refs.iter().zip(cands) {
        for (acc, b) in s.bleu.iter_mut().zip(bleu_series(c, r, max_n, cfg.metrics.brevity())) {
            *acc += b;
        }
    }
    s.n = refs.len();
    if let Some(p) = provider {
        let all: Vec<String> = refs.iter().chain(cands).map(|w| w.join(" ")).collect();
        let v = p.embed(&all)?;
        let n = refs.len();
        for i in 0..n {
            match cosine(&v[i], &v[n + i]) {
                Ok(c) => s.similarity += c,
                // an empty or degenerate output shares nothing with the reference
                Err(MetricsError::ZeroNorm { .. }) => s.undefined_similarity += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(s)
}

fn push_scores(rep: &mut MetricsReport, cfg: &RunConfig, phase: &str, x: f64, s: &Scores, provider: bool) {
    let row = |metric, value| Row {
        run_id: cfg.run_id.clone(),
        phase: phase.to_string(),
        snr_db_or_rate: x,
        metric,
        value,
        n_samples: s.n,
        seed: cfg.seed,
    };
    for (i, b) in s.bleu.iter().enumerate() {
        if let Some(m) = Metric::bleu(i + 1) {
            rep.push(row(m, b / s.n.max(1) as f64));
        }
    }
    if provider {
        if s.undefined_similarity > 0 {
            log::warn!("{phase} @ {x}: {} outputs had no embedding, scored 0", s.undefined_similarity);
        }
        rep.push(row(Metric::Similarity, s.similarity / s.n.max(1) as f64));
    }
}

/// Greedy-decoded outputs of every test sentence through `channel`.
pub fn deepsc_outputs(
    model: &DeepSc,
    vocab: &Vocabulary,
    test: &Corpus,
    channel: &ChannelConfig,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::with_capacity(test.len());
    for batch in make_batches(test, vocab, batch_size, None) {
        for ids in model.transmit(&batch, channel, rng)? {
            out.push(vocab.decode(&ids));
        }
    }
    Ok(out)
}

/// DeepSC scores at every configured SNR (and erasure rate), one thread per point.
pub fn evaluate(
    cfg: &RunConfig,
    model: &DeepSc,
    vocab: &Vocabulary,
    test: &Corpus,
    provider: Option<Provider>,
) -> Result<MetricsReport> {
    let points = sweep_points(cfg);
    let results: Vec<Result<Scores>> = thread::scope(|s| {
        let handles: Vec<_> = points
            .iter()
            .enumerate()
            .map(|(i, &(kind, x))| {
                s.spawn(move || {
                    let mut rng = point_rng(cfg.seed, i);
                    let ch = sweep_channel(kind, x);
                    let outs = deepsc_outputs(model, vocab, test, &ch, cfg.eval.batch_size, &mut rng)?;
                    score(cfg, &test.sentences, &outs, provider)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let spw = data::deepsc_symbols_per_word(test, model.config.symbols_per_word());
    let mut rep = MetricsReport::new();
    for ((kind, x), r) in points.into_iter().zip(results) {
        let s = r?;
        let phase = phase_name("deepsc", kind);
        push_scores(&mut rep, cfg, &phase, x, &s, provider.is_some());
        rep.push(Row {
            run_id: cfg.run_id.clone(),
            phase,
            snr_db_or_rate: x,
            metric: Metric::SymbolsPerWord,
            value: spw,
            n_samples: s.n,
            seed: cfg.seed,
        });
    }
    Ok(rep)
}

/// Conventional chain at every configured point: BLEU, similarity, 64-QAM SER and symbols per word.
pub fn baseline(cfg: &RunConfig, data: &Dataset, provider: Option<Provider>) -> Result<MetricsReport> {
    let coder = data::source_coder(cfg.baseline.source, &data.train)?;
    let code = cfg.baseline.code()?;
    let points = sweep_points(cfg);
    let results: Vec<Result<(Scores, f64, f64)>> = thread::scope(|s| {
        let handles: Vec<_> = points
            .iter()
            .enumerate()
            .map(|(i, &(kind, x))| {
                let (coder, code) = (&coder, &code);
                s.spawn(move || {
                    let mut rng = point_rng(cfg.seed ^ 0xba5e, i);
                    let ch = sweep_channel(kind, x);
                    let (mut sym, mut err, mut words) = (0usize, 0usize, 0usize);
                    let mut outs = Vec::with_capacity(data.test.len());
                    for sent in &data.test.sentences {
                        let o = baseline_transmit(&sent.join(" "), coder, code, &ch, &mut rng)?;
                        sym += o.symbols;
                        err += o.symbol_errors;
                        words += sent.len();
                        outs.push(tokenize(&o.text));
                    }
                    let sc = score(cfg, &data.test.sentences, &outs, provider)?;
                    Ok((sc, err as f64 / sym.max(1) as f64, sym as f64 / words.max(1) as f64))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("baseline worker panicked")).collect()
    });
    let mut rep = MetricsReport::new();
    for ((kind, x), r) in points.into_iter().zip(results) {
        let (s, ser, spw) = r?;
        let phase = phase_name("baseline", kind);
        push_scores(&mut rep, cfg, &phase, x, &s, provider.is_some());
        for (metric, value) in [(Metric::Ser, ser), (Metric::SymbolsPerWord, spw)] {
            rep.push(Row {
                run_id: cfg.run_id.clone(),
                phase: phase.clone(),
                snr_db_or_rate: x,
                metric,
                value,
                n_samples: s.n,
                seed: cfg.seed,
            });
        }
    }
    Ok(rep)
}

/// Uncoded 64-QAM symbol error rate over AWGN from `symbols` random symbols.
pub fn qam_ser(snr_db: f64, symbols: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..symbols * qam::BITS_PER_SYMBOL).map(|_| rng.random()).collect();
    let tx = qam::modulate(&bits);
    let mut block = ComplexSymbolBlock::<f64>::zeros(1, tx.len(), 1);
    for (i, &(re, im)) in tx.iter().enumerate() {
        block.re[i] = re;
        block.im[i] = im;
    }
    let rx = channel::awgn(&block, snr_db, &mut rng);
    let pts: Vec<(f64, f64)> = rx.re.iter().zip(&rx.im).map(|(&a, &b)| (a, b)).collect();
    let got = qam::demodulate(&pts);
    got.chunks(qam::BITS_PER_SYMBOL)
        .zip(bits.chunks(qam::BITS_PER_SYMBOL))
        .filter(|(a, b)| a != b)
        .count() as f64
        / symbols as f64
}

/// Transmitted symbols of up to `max` non-PAD positions of `corpus`, `[S, 2N]`.
pub fn encoder_symbols(model: &DeepSc, vocab: &Vocabulary, corpus: &Corpus, batch: usize, max: usize) -> Result<Tensor> {
    let u = model.config.channel_units;
    let mut xs = Vec::new();
    for b in make_batches(corpus, vocab, batch, None) {
        let x = model.encode_symbols(&b)?;
        for (pos, &valid) in b.pad_mask.iter().enumerate() {
            if valid && xs.len() / u < max {
                xs.extend_from_slice(&x.data()[pos * u..(pos + 1) * u]);
            }
        }
        if xs.len() / u >= max {
            break;
        }
    }
    let s = xs.len() / u;
    Ok(Tensor::new(vec![s, u], xs).map_err(semcom_core::transceiver::ModelError::from)?)
}

/// `Y` for the symbols `x: [S, 2N]` through an AWGN channel.
pub fn through_awgn(x: &Tensor, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let s = x.shape()[0];
    let u = x.shape()[1];
    let t = x.clone().reshape(&[s, 1, u]).map_err(semcom_core::transceiver::ModelError::from)?;
    let block = ComplexSymbolBlock::from_tensor(&t).map_err(semcom_core::transceiver::ModelError::from)?;
    let r = Realization::sample(&ChannelConfig::awgn(snr_db), s, 1, u / 2, rng);
    let y = channel::apply(&block, &r).to_tensor();
    Ok(y.reshape(&[s, u]).map_err(semcom_core::transceiver::ModelError::from)?)
}

/// Mutual information between transmitted and received symbols of a fixed encoder,
/// one freshly trained estimator per SNR. A diverged point is reported as NaN.
pub fn mi_probe(cfg: &RunConfig, model: &DeepSc, vocab: &Vocabulary, corpus: &Corpus, phase: &str) -> Result<MetricsReport> {
    let p = &cfg.mi_probe;
    let x = encoder_symbols(model, vocab, corpus, cfg.eval.batch_size, p.samples)?;
    let u = model.config.channel_units;
    let mut rep = MetricsReport::new();
    for (i, &snr) in cfg.eval.snr_db.iter().enumerate() {
        let mut rng = point_rng(cfg.seed ^ 0x3141, i);
        let mut net = MiNetwork::new(u, u, p.hidden, p.final_relu, rng.random());
        let mut opt = miest::mi_optimizer(p.lr);
        let tc = MiTrainConfig {
            steps: p.steps,
            lr: p.lr,
            batch_size: p.batch_size,
            shuffles: p.shuffles,
            seed: rng.random(),
        };
        let held = HeldOut {
            fraction: p.holdout,
            eval_every: p.eval_every,
            shuffles: p.shuffles,
        };
        let channel = |rows: &Tensor, rng: &mut ChaCha8Rng| through_awgn(rows, snr, rng).expect("symbol rows are [S, 2N]");
        let value = match miest::fit_held_out(&mut net, &x, channel, &held, &tc, &mut opt) {
            Ok((est, se)) => {
                log::info!("{phase} mi @ {snr} dB: {est:.4} ± {se:.4} nats");
                est
            }
            Err(e @ semcom_core::miest::MiError::Diverged { .. }) => {
                log::error!("{phase} mi @ {snr} dB diverged: {e}");
                f64::NAN
            }
            Err(e) => return Err(CliError::from(e)),
        };
        rep.push(Row {
            run_id: cfg.run_id.clone(),
            phase: phase.to_string(),
            snr_db_or_rate: snr,
            metric: Metric::MiNats,
            value,
            n_samples: x.shape()[0],
            seed: cfg.seed,
        });
    }
    Ok(rep)
}

/// Per-epoch whole-network cross-entropy as report rows; the x column holds the epoch (1-based).
pub fn loss_rows(cfg: &RunConfig, phase: &str, reports: &[LossReport], n: usize) -> Vec<Row> {
    reports
        .iter()
        .filter(|r| r.phase == semcom_core::training::Phase::Whole)
        .map(|r| Row {
            run_id: cfg.run_id.clone(),
            phase: phase.to_string(),
            snr_db_or_rate: (r.epoch + 1) as f64,
            metric: Metric::CeLoss,
            value: r.ce,
            n_samples: n,
            seed: cfg.seed,
        })
        .collect()
}
