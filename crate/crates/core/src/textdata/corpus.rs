use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TextError;

pub const DEFAULT_MIN_LEN: usize = 4;
pub const DEFAULT_MAX_LEN: usize = 30;

const STRIPPED: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Lowercase, drop the punctuation set `. , ! ? ; : " ( )`, split on whitespace.
pub fn tokenize(line: &str) -> Vec<String> {
    let cleaned: String = line
        .to_lowercase()
        .chars()
        .map(|c| if STRIPPED.contains(&c) { ' ' } else { c })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Sentences as word lists, every one within `min_len..=max_len` words.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    pub source_path: Option<PathBuf>,
    pub min_len: usize,
    pub max_len: usize,
}

impl Corpus {
    /// Tokenize each line and keep those whose word count lies within the bounds.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>, min_len: usize, max_len: usize) -> Self {
        let sentences = lines
            .into_iter()
            .map(tokenize)
            .filter(|w| (min_len..=max_len).contains(&w.len()))
            .collect();
        Self {
            sentences,
            source_path: None,
            min_len,
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Seeded shuffle, then the first `train_fraction` goes to training and the rest to test.
    pub fn split(&self, seed: u64, train_fraction: f64) -> (Corpus, Corpus) {
        let mut order: Vec<usize> = (0..self.sentences.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.sentences.len() as f64) * train_fraction).round() as usize;
        let pick = |idx: &[usize]| Corpus {
            sentences: idx.iter().map(|&i| self.sentences[i].clone()).collect(),
            source_path: self.source_path.clone(),
            min_len: self.min_len,
            max_len: self.max_len,
        };
        (pick(&order[..n_train]), pick(&order[n_train..]))
    }

    /// Keep at most `n` sentences.
    pub fn truncate(mut self, n: usize) -> Self {
        self.sentences.truncate(n);
        self
    }

    pub fn joined(&self) -> Vec<String> {
        self.sentences.iter().map(|s| s.join(" ")).collect()
    }
}

/// Read a UTF-8 file with one sentence per line.
pub fn load_corpus(path: impl AsRef<Path>, min_len: usize, max_len: usize) -> Result<Corpus, TextError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut corpus = Corpus::from_lines(text.lines(), min_len, max_len);
    if corpus.is_empty() {
        return Err(TextError::Empty(path.display().to_string()));
    }
    corpus.source_path = Some(path.to_path_buf());
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_example_sentence() {
        assert_eq!(tokenize("Weather is good today."), vec!["weather", "is", "good", "today"]);
        assert_eq!(tokenize("(Hello,  world!)"), vec!["hello", "world"]);
    }

    #[test]
    fn length_bounds_apply_after_stripping() {
        let long = vec!["w"; 31].join(" ");
        let ok30 = vec!["w"; 30].join(" ");
        let lines = ["one two three.", "one two three four", long.as_str(), ok30.as_str(), "a , b , c"];
        let c = Corpus::from_lines(lines, DEFAULT_MIN_LEN, DEFAULT_MAX_LEN);
        assert_eq!(c.len(), 2);
        assert!(c.sentences.iter().all(|s| (4..=30).contains(&s.len())));
    }

    #[test]
    fn split_is_seeded_and_partitions() {
        let lines: Vec<String> = (0..100).map(|i| format!("sentence number {i} here")).collect();
        let c = Corpus::from_lines(lines.iter().map(String::as_str), 4, 30);
        let (tr, te) = c.split(7, 0.9);
        assert_eq!((tr.len(), te.len()), (90, 10));
        let (tr2, _) = c.split(7, 0.9);
        assert_eq!(tr, tr2);
        let mut all: Vec<_> = tr.joined().into_iter().chain(te.joined()).collect();
        all.sort();
        let mut orig = c.joined();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_corpus("/nonexistent/x.txt", 4, 30), Err(TextError::Io { .. })));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "too short\n").unwrap();
        assert!(matches!(load_corpus(&p, 4, 30), Err(TextError::Empty(_))));
        std::fs::write(&p, "Weather is good today.\n").unwrap();
        assert_eq!(load_corpus(&p, 4, 30).unwrap().len(), 1);
    }
}
