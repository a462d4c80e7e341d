//! Sentence-level BLEU and embedding cosine similarity.

pub mod bleu;
pub mod http;
pub mod similarity;

pub use bleu::{bleu, bleu_series, modified_precision, ngrams, BleuConfig, Brevity};
pub use http::{HttpEmbedding, HttpEmbeddingConfig, ENDPOINT_ENV};
pub use similarity::{cosine, sentence_similarity, EmbeddingProvider, TableEmbedding};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("similarity undefined: sentence {index} has a zero-norm embedding")]
    ZeroNorm { index: usize },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding service returned {count} vectors for {expected} sentences")]
    CountMismatch { expected: usize, count: usize },
    #[error("embedding service answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("embedding service unreachable after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("invalid metrics configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
