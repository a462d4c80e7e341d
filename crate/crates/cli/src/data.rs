use std::path::Path;

use semcom_core::channel::ChannelConfig;
use semcom_core::classic::{baseline_transmit, char_frequencies, HuffmanCode, RsCode, SourceCoder, SourceKind};
use semcom_core::textdata::synth::{self, Domain};
use semcom_core::textdata::{build_vocab, load_corpus, Corpus, Vocabulary};
use semcom_core::DeepSc;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CorpusConfig, RunConfig};
use crate::error::{CliError, Result};

/// Training and held-out sentences with the vocabulary built from the training part.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Corpus,
    pub test: Corpus,
    pub vocab: Vocabulary,
}

fn synthetic(c: &CorpusConfig, domain: Domain) -> Corpus {
    let lines = synth::generate(domain, c.synthetic_sentences, c.synthetic_seed);
    Corpus::from_lines(lines.iter().map(String::as_str), c.min_len, c.max_len)
}

fn split(c: &CorpusConfig, all: Corpus, seed: u64) -> (Corpus, Corpus) {
    let (train, test) = all.split(seed, c.train_fraction);
    (train, test.truncate(c.max_test_sentences))
}

/// Corpus of the main run: files when configured, synthetic sentences otherwise.
pub fn prepare(cfg: &RunConfig) -> Result<Dataset> {
    let c = &cfg.corpus;
    let (train, test) = match (&c.train_path, &c.test_path) {
        (Some(tr), Some(te)) => (
            load_corpus(tr, c.min_len, c.max_len)?,
            load_corpus(te, c.min_len, c.max_len)?.truncate(c.max_test_sentences),
        ),
        (Some(tr), None) => split(c, load_corpus(tr, c.min_len, c.max_len)?, c.synthetic_seed),
        (None, _) => split(c, synthetic(c, c.synthetic_domain), c.synthetic_seed),
    };
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Config(format!(
            "corpus yields {} training and {} test sentences",
            train.len(),
            test.len()
        )));
    }
    let vocab = build_vocab(&train, c.min_freq);
    Ok(Dataset { train, test, vocab })
}

/// Corpus of a knowledge transfer. The vocabulary extends `base` with the new
/// corpus' words, keeping every existing index.
pub fn prepare_transfer(cfg: &RunConfig, base: &Vocabulary) -> Result<Dataset> {
    let c = &cfg.corpus;
    let all = match &cfg.transfer.corpus_path {
        Some(p) => load_corpus(p, c.min_len, c.max_len)?,
        None => synthetic(c, cfg.transfer.domain),
    };
    let (train, test) = split(c, all, c.synthetic_seed);
    let fresh = build_vocab(&train, c.min_freq);
    let vocab = Vocabulary::from_words(base.words().iter().chain(fresh.words()).cloned());
    Ok(Dataset { train, test, vocab })
}

/// The configured source coder; Huffman codes are fitted on the training text.
pub fn source_coder(kind: SourceKind, train: &Corpus) -> Result<SourceCoder> {
    Ok(match kind {
        SourceKind::Huffman => {
            let text = train.joined();
            SourceCoder::Huffman(HuffmanCode::build_with_escape(&char_frequencies(text.iter().map(String::as_str)))?)
        }
        SourceKind::Fixed5 => SourceCoder::Fixed5,
    })
}

/// Channel symbols per word the conventional chain spends on `corpus`.
pub fn baseline_symbols_per_word(corpus: &Corpus, source: &SourceCoder, code: &RsCode) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut symbols, mut words) = (0usize, 0usize);
    for s in &corpus.sentences {
        let out = baseline_transmit(&s.join(" "), source, code, &ChannelConfig::noiseless(), &mut rng)?;
        symbols += out.symbols;
        words += s.len();
    }
    Ok(symbols as f64 / words.max(1) as f64)
}

/// Channel symbols per word DeepSC spends with `n` symbols per token; START and END
/// are transmitted too, so a sentence of `w` words costs `n·(w + 2)`.
pub fn deepsc_symbols_per_word(corpus: &Corpus, n: usize) -> f64 {
    let words: usize = corpus.sentences.iter().map(Vec::len).sum();
    let tokens = words + 2 * corpus.len();
    (n * tokens) as f64 / words.max(1) as f64
}

/// Symbols per token whose per-word cost is closest to `target`.
pub fn match_symbols(corpus: &Corpus, target: f64) -> usize {
    (1..=64)
        .min_by(|&a, &b| {
            let da = (deepsc_symbols_per_word(corpus, a) - target).abs();
            let db = (deepsc_symbols_per_word(corpus, b) - target).abs();
            da.total_cmp(&db)
        })
        .unwrap_or(1)
}

/// `<stem>.vocab.tsv` / `<stem>.config.toml` next to a checkpoint.
pub fn sidecar(checkpoint: &Path, suffix: &str) -> std::path::PathBuf {
    checkpoint.with_extension(suffix)
}

/// Write the checkpoint and both sidecars.
pub fn save_model(path: &Path, model: &DeepSc, vocab: &Vocabulary, cfg: &RunConfig) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    }
    model.save(path)?;
    let v = sidecar(path, "vocab.tsv");
    std::fs::write(&v, vocab.export()).map_err(|e| CliError::io(v.display().to_string(), e))?;
    let mut c = cfg.clone();
    c.model = model.config.clone();
    let t = sidecar(path, "config.toml");
    std::fs::write(&t, c.to_toml()).map_err(|e| CliError::io(t.display().to_string(), e))?;
    Ok(())
}

/// Checkpoint, vocabulary and the configuration it was trained with.
pub fn load_model(path: &Path) -> Result<(DeepSc, Vocabulary, RunConfig)> {
    let t = sidecar(path, "config.toml");
    let cfg = RunConfig::load(&t)?;
    let v = sidecar(path, "vocab.tsv");
    let text = std::fs::read_to_string(&v).map_err(|e| CliError::io(v.display().to_string(), e))?;
    let vocab = Vocabulary::import(&text)?;
    if vocab.len() != cfg.model.vocab_size {
        return Err(CliError::Config(format!(
            "{} holds {} words but the model expects {}",
            v.display(),
            vocab.len(),
            cfg.model.vocab_size
        )));
    }
    let model = DeepSc::load(path, cfg.model.clone())?;
    Ok((model, vocab, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::desk();
        c.corpus.synthetic_sentences = 200;
        c
    }

    #[test]
    fn synthetic_split() {
        let d = prepare(&tiny()).unwrap();
        assert!(d.train.len() + d.test.len() <= 200);
        assert!((d.test.len() as f64 - 0.2 * (d.train.len() + d.test.len()) as f64).abs() <= 1.0);
        assert!(d.vocab.len() > 10);
    }

    #[test]
    fn transfer_vocab_keeps_old_indices() {
        let c = tiny();
        let d = prepare(&c).unwrap();
        let t = prepare_transfer(&c, &d.vocab).unwrap();
        for w in d.vocab.words() {
            assert_eq!(t.vocab.index_of(w), d.vocab.index_of(w));
        }
        assert!(t.vocab.len() > d.vocab.len());
    }

    #[test]
    fn symbol_budget_arithmetic() {
        let c = Corpus::from_lines(["a b c d", "e f g h i j"], 1, 30);
        // 10 words, 14 tokens
        assert!((deepsc_symbols_per_word(&c, 5) - 7.0).abs() < 1e-12);
        assert_eq!(match_symbols(&c, 7.1), 5);
        let code = RsCode::rs_7_5();
        let spw = baseline_symbols_per_word(&c, &SourceCoder::Fixed5, &code).unwrap();
        // "a b c d": 35 bits → 63 coded bits → 11 symbols; "e f g h i j": 55 bits → 19 GF(8) symbols → 4 blocks → 84 bits → 14 symbols
        assert!((spw - 25.0 / 10.0).abs() < 1e-12, "{spw}");
    }
}
