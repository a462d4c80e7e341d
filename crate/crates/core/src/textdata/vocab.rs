use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Corpus, TextError};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Word/index maps with fixed special tokens at indices 0..4.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_words(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials followed by `words` in the given order; duplicates are skipped.
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS.iter().map(|s| s.to_string()).chain(words.into_iter().map(Into::into)) {
            if !v.index.contains_key(&s) {
                v.index.insert(s.clone(), v.words.len());
                v.words.push(s);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= SPECIALS.len()
    }

    pub fn word(&self, idx: usize) -> Option<&str> {
        self.words.get(idx).map(String::as_str)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn is_special(idx: usize) -> bool {
        idx < SPECIALS.len()
    }

    /// Word indices of a sentence; unknown words map to UNK.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words
            .iter()
            .map(|w| self.index.get(w.as_ref()).copied().unwrap_or(UNK))
            .collect()
    }

    /// Words of an index sequence, dropping PAD/START/END. UNK renders as `<unk>`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != PAD && i != START && i != END)
            .map(|&i| self.words.get(i).cloned().unwrap_or_else(|| SPECIALS[UNK].to_string()))
            .collect()
    }

    /// Non-special words in index order.
    pub fn words(&self) -> &[String] {
        &self.words[SPECIALS.len()..]
    }

    /// `index<TAB>word` lines.
    pub fn export(&self) -> String {
        let mut s = String::new();
        for (i, w) in self.words.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{w}");
        }
        s
    }

    pub fn import(text: &str) -> Result<Self, TextError> {
        let mut words = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let bad = || TextError::VocabFormat {
                line: line_no + 1,
                content: line.to_string(),
            };
            let (idx, word) = line.split_once('\t').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            if idx != line_no || (idx < SPECIALS.len() && word != SPECIALS[idx]) {
                return Err(bad());
            }
            if idx >= SPECIALS.len() {
                words.push(word.to_string());
            }
        }
        let v = Self::from_words(words);
        Ok(v)
    }
}

/// Words occurring at least `min_freq` times, most frequent first (ties broken alphabetically).
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in &corpus.sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let v = Vocabulary::from_words(entries.into_iter().map(|(w, _)| w));
    if v.is_empty() {
        log::warn!("vocabulary holds only the special tokens (min_freq = {min_freq})");
    }
    v
}
