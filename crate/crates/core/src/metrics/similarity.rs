use super::{MetricsError, Result};
use crate::textdata::{tokenize, Vocabulary, UNK};
use crate::transceiver::DeepSc;
use crate::Scalar;

/// Maps sentences to fixed-dimension vectors. Implementations must be deterministic.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Cosine of two vectors clamped to `[0, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || !na.is_finite() {
        return Err(MetricsError::ZeroNorm { index: 0 });
    }
    if nb == 0.0 || !nb.is_finite() {
        return Err(MetricsError::ZeroNorm { index: 1 });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Pairwise similarity of `candidates[i]` and `references[i]`, embedded in a single provider call.
pub fn sentence_similarity<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    references: &[String],
    candidates: &[String],
) -> Result<Vec<f64>> {
    if references.len() != candidates.len() {
        return Err(MetricsError::Config(format!(
            "{} references for {} candidates",
            references.len(),
            candidates.len()
        )));
    }
    let n = references.len();
    let all: Vec<String> = references.iter().chain(candidates).cloned().collect();
    let v = provider.embed(&all)?;
    if v.len() != all.len() {
        return Err(MetricsError::CountMismatch {
            expected: all.len(),
            count: v.len(),
        });
    }
    (0..n)
        .map(|i| {
            cosine(&v[i], &v[n + i]).map_err(|e| match e {
                MetricsError::ZeroNorm { index } => MetricsError::ZeroNorm { index: index * n + i },
                e => e,
            })
        })
        .collect()
}

/// Mean of a trained model's word embeddings. Out-of-vocabulary words use the UNK row;
/// an empty sentence embeds to the zero vector.
#[derive(Clone, Debug)]
pub struct TableEmbedding {
    rows: Vec<f64>,
    dim: usize,
    vocab: Vocabulary,
}

impl TableEmbedding {
    pub fn new(table: &[f64], dim: usize, vocab: Vocabulary) -> Result<Self> {
        if dim == 0 || table.len() != dim * vocab.len() {
            return Err(MetricsError::Config(format!(
                "table of {} values does not hold {} rows of {dim}",
                table.len(),
                vocab.len()
            )));
        }
        Ok(Self {
            rows: table.to_vec(),
            dim,
            vocab,
        })
    }

    pub fn from_model<T: Scalar>(model: &DeepSc<T>, vocab: &Vocabulary) -> Result<Self> {
        let t = model.embedding_table();
        let dim = *t.shape().last().unwrap_or(&0);
        let data: Vec<f64> = t.data().iter().map(|x| x.as_f64()).collect();
        Self::new(&data, dim, vocab.clone())
    }

    pub fn embed_one(&self, sentence: &str) -> Vec<f64> {
        let words = tokenize(sentence);
        let mut v = vec![0.0; self.dim];
        if words.is_empty() {
            return v;
        }
        for w in &words {
            let i = self.vocab.index_of(w).unwrap_or(UNK);
            for (acc, x) in v.iter_mut().zip(&self.rows[i * self.dim..(i + 1) * self.dim]) {
                *acc += x;
            }
        }
        let n = words.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl EmbeddingProvider for TableEmbedding {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(sentences.iter().map(|s| self.embed_one(s)).collect())
    }
}
