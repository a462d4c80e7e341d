use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{END, PAD, START};
use super::{Corpus, Vocabulary};

/// `B × L` token matrix, each row `START w.. END PAD..`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBatch {
    pub tokens: Vec<usize>,
    pub pad_mask: Vec<bool>,
    /// Word count of each row (without START/END).
    pub true_lengths: Vec<usize>,
    pub batch_size: usize,
    pub seq_len: usize,
}

impl TokenBatch {
    /// Pad encoded sentences to the longest row + 2.
    pub fn from_encoded(rows: &[Vec<usize>]) -> Self {
        let b = rows.len();
        let l = rows.iter().map(Vec::len).max().unwrap_or(0) + 2;
        let mut tokens = vec![PAD; b * l];
        for (r, row) in rows.iter().enumerate() {
            let dst = &mut tokens[r * l..(r + 1) * l];
            dst[0] = START;
            dst[1..=row.len()].copy_from_slice(row);
            dst[row.len() + 1] = END;
        }
        let pad_mask = tokens.iter().map(|&t| t != PAD).collect();
        Self {
            tokens,
            pad_mask,
            true_lengths: rows.iter().map(Vec::len).collect(),
            batch_size: b,
            seq_len: l,
        }
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.tokens[r * self.seq_len..(r + 1) * self.seq_len]
    }

    /// Word indices of row `r` without specials.
    pub fn words(&self, r: usize) -> &[usize] {
        &self.row(r)[1..=self.true_lengths[r]]
    }

    /// Decoder input and target for teacher forcing: `tokens[:, :-1]` and `tokens[:, 1:]`.
    pub fn shifted(&self) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
        let lt = self.seq_len - 1;
        let mut input = Vec::with_capacity(self.batch_size * lt);
        let mut target = Vec::with_capacity(self.batch_size * lt);
        for r in 0..self.batch_size {
            let row = self.row(r);
            input.extend_from_slice(&row[..lt]);
            target.extend_from_slice(&row[1..]);
        }
        let mask = target.iter().map(|&t| t != PAD).collect();
        (input, target, mask)
    }
}

/// One epoch of batches over a corpus, optionally shuffled.
pub struct BatchStream {
    encoded: Vec<Vec<usize>>,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for BatchStream {
    type Item = TokenBatch;

    fn next(&mut self) -> Option<TokenBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows: Vec<Vec<usize>> = self.order[self.pos..end]
            .iter()
            .map(|&i| self.encoded[i].clone())
            .collect();
        self.pos = end;
        Some(TokenBatch::from_encoded(&rows))
    }
}

/// Every sentence appears exactly once per stream. `shuffle_seed = None` keeps corpus order.
pub fn make_batches(
    corpus: &Corpus,
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> BatchStream {
    assert!(batch_size >= 1, "batch size must be positive");
    let encoded: Vec<Vec<usize>> = corpus.sentences.iter().map(|s| vocab.encode(s)).collect();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    BatchStream {
        encoded,
        order,
        batch_size,
        pos: 0,
    }
}
