//! Corpus ingestion, vocabulary construction and padded token batches.

mod batch;
mod corpus;
pub mod synth;
mod vocab;

pub use batch::{make_batches, BatchStream, TokenBatch};
pub use corpus::{load_corpus, tokenize, Corpus, DEFAULT_MAX_LEN, DEFAULT_MIN_LEN};
pub use vocab::{build_vocab, Vocabulary, END, PAD, START, UNK};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {0} has no sentences within the length bounds")]
    Empty(String),
    #[error("malformed vocabulary line {line}: {content:?}")]
    VocabFormat { line: usize, content: String },
}
