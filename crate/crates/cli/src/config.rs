use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semcom_core::channel::ChannelConfig;
use semcom_core::classic::{RsCode, SourceKind};
use semcom_core::classic::gf::Gf;
use semcom_core::metrics::{BleuConfig, Brevity, HttpEmbeddingConfig};
use semcom_core::textdata::synth::Domain;
use semcom_core::training::{FreezeSpec, TrainConfig};
use semcom_core::transceiver::TransceiverConfig;

use crate::error::CliError;

/// Everything one run needs. Every field has a default; `print-config` shows them all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub model: TransceiverConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
    pub metrics: MetricsConfig,
    pub mi_probe: MiProbeConfig,
    pub transfer: TransferConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// One sentence per line. Without it a synthetic corpus is generated.
    pub train_path: Option<PathBuf>,
    /// Held-out sentences; split off the training file when absent.
    pub test_path: Option<PathBuf>,
    pub synthetic_domain: Domain,
    pub synthetic_sentences: usize,
    pub synthetic_seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub train_fraction: f64,
    pub max_test_sentences: usize,
    pub min_freq: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_path: None,
            test_path: None,
            synthetic_domain: Domain::Parliament,
            synthetic_sentences: 3000,
            synthetic_seed: 7,
            min_len: 4,
            max_len: 30,
            train_fraction: 0.8,
            max_test_sentences: 1000,
            min_freq: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub snr_db: Vec<f64>,
    pub erasure_p: Vec<f64>,
    /// Choose `channel_units` so DeepSC spends as many symbols per word as the baseline.
    pub match_baseline_budget: bool,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            erasure_p: Vec::new(),
            match_baseline_budget: false,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub source: SourceKind,
    /// Codeword length in symbols.
    pub n: usize,
    /// Message length in symbols.
    pub k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Huffman,
            n: 7,
            k: 5,
        }
    }
}

impl BaselineConfig {
    /// Smallest supported field holding `n` nonzero elements: GF(8) up to 7, else GF(16).
    pub fn code(&self) -> Result<RsCode, CliError> {
        let gf = if self.n <= 7 { Gf::gf8() } else { Gf::gf16() };
        RsCode::new(gf, self.n, self.k).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    BuiltinMeanEmbedding,
    HttpService,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub max_n: usize,
    pub standard_bleu: bool,
    pub provider: ProviderKind,
    pub http: HttpEmbeddingConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            standard_bleu: false,
            provider: ProviderKind::BuiltinMeanEmbedding,
            http: HttpEmbeddingConfig::default(),
        }
    }
}

impl MetricsConfig {
    pub fn brevity(&self) -> Brevity {
        if self.standard_bleu {
            Brevity::Standard
        } else {
            Brevity::Printed
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiProbeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub final_relu: bool,
    /// Symbol pairs drawn per SNR point.
    pub samples: usize,
    /// Fraction of the pairs the bound is scored on instead of trained on.
    pub holdout: f64,
    /// Training steps between scorings.
    pub eval_every: usize,
    /// Derangements stacked in the marginal term, in training and scoring.
    pub shuffles: usize,
}

impl Default for MiProbeConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 512,
            lr: 1e-3,
            hidden: 128,
            final_relu: false,
            samples: 20_000,
            holdout: 0.2,
            eval_every: 100,
            shuffles: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// New sentences: retrain the semantic codec and embeddings.
    Knowledge,
    /// New channel: retrain the channel codec.
    Channel,
}

impl TransferMode {
    pub fn freeze(self) -> FreezeSpec {
        match self {
            TransferMode::Knowledge => FreezeSpec::knowledge(),
            TransferMode::Channel => FreezeSpec::channel(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Channel of the re-training run.
    pub channel: ChannelConfig,
    /// Corpus file of a knowledge transfer; a synthetic `domain` corpus otherwise.
    pub corpus_path: Option<PathBuf>,
    pub domain: Domain,
    pub epochs: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            mode: TransferMode::Channel,
            channel: ChannelConfig::rician(2.0, 12.0),
            corpus_path: None,
            domain: Domain::Everyday,
            epochs: 10,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 1,
            out_dir: PathBuf::from("runs"),
            corpus: CorpusConfig::default(),
            model: TransceiverConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            baseline: BaselineConfig::default(),
            metrics: MetricsConfig::default(),
            mi_probe: MiProbeConfig::default(),
            transfer: TransferConfig::default(),
        }
    }
}

impl RunConfig {
    /// A model and schedule sized for a single CPU core: two 64-wide layers per
    /// side, batches of 16, 30 epochs.
    pub fn desk() -> Self {
        let mut c = Self {
            run_id: "desk".into(),
            ..Self::default()
        };
        c.model = TransceiverConfig {
            num_enc_layers: 2,
            num_dec_layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 128,
            channel_hidden: 128,
            channel_units: 12,
            vocab_size: 0,
            dropout_rate: 0.0,
        };
        c.train.batch_size = 16;
        c.train.mi_hidden = 64;
        c.train.mi_steps = 50;
        c.mi_probe.hidden = 64;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn bleu(&self, max_n: usize) -> BleuConfig {
        let mut b = BleuConfig::uniform(max_n);
        b.brevity = self.metrics.brevity();
        b
    }

    /// Every violation at once. `vocab_size = 0` means "taken from the corpus".
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut model = self.model.clone();
        if model.vocab_size == 0 {
            model.vocab_size = 5;
        }
        p.extend(model.problems().into_iter().map(|s| format!("model: {s}")));
        p.extend(self.train.problems().into_iter().map(|s| format!("train: {s}")));
        let c = &self.corpus;
        if c.min_len == 0 || c.min_len > c.max_len {
            p.push(format!("corpus: need 0 < min_len <= max_len, got {}..{}", c.min_len, c.max_len));
        }
        if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) && c.test_path.is_none() {
            p.push(format!("corpus: train_fraction must lie in (0, 1), got {}", c.train_fraction));
        }
        if c.train_path.is_none() && c.synthetic_sentences == 0 {
            p.push("corpus: no train_path and synthetic_sentences = 0".into());
        }
        if self.eval.batch_size == 0 {
            p.push("eval: batch_size must be positive".into());
        }
        for &s in &self.eval.snr_db {
            if s.is_nan() {
                p.push("eval: SNR list contains NaN".into());
            }
        }
        for &e in &self.eval.erasure_p {
            if !(0.0..=1.0).contains(&e) {
                p.push(format!("eval: erasure probability {e} outside [0, 1]"));
            }
        }
        if let Err(e) = self.baseline.code() {
            p.push(format!("baseline: {e}"));
        }
        if self.metrics.max_n == 0 {
            p.push("metrics: max_n must be positive".into());
        }
        if self.metrics.provider == ProviderKind::HttpService {
            if let Err(e) = self.metrics.http.clone().with_env_override().validate() {
                p.push(format!("metrics: {e}"));
            }
        }
        if self.mi_probe.samples < 4 || self.mi_probe.batch_size < 2 {
            p.push("mi_probe: need samples >= 4 and batch_size >= 2".into());
        }
        if !(self.mi_probe.holdout > 0.0 && self.mi_probe.holdout < 1.0) {
            p.push(format!("mi_probe: holdout must lie in (0, 1), got {}", self.mi_probe.holdout));
        }
        if self.mi_probe.shuffles == 0 || self.mi_probe.eval_every == 0 {
            p.push("mi_probe: shuffles and eval_every must be positive".into());
        }
        if let Err(e) = self.transfer.channel.validate() {
            p.push(format!("transfer: {e}"));
        }
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p.join("\n")))
        }
    }
}

/// `"0,3,6"` or `"0:3:18"` (start:step:stop, inclusive).
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("cannot parse SNR list {s:?}"));
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    s.split(',')
        .filter(|x| !x.trim().is_empty() && x.trim() != "...")
        .map(|x| match x.trim() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            t => t.parse::<f64>().map_err(|_| bad()),
        })
        .collect()
}
