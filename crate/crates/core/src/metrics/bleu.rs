use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Brevity term of the score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Brevity {
    /// `min(1 − l_cand/l_ref, 0)`, penalizing candidates longer than the reference.
    #[default]
    Printed,
    /// Conventional `min(1 − l_ref/l_cand, 0)`, penalizing short candidates.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    /// `u_n` for `n = 1..=max_n`.
    pub weights: Vec<f64>,
    pub brevity: Brevity,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::uniform(4)
    }
}

impl BleuConfig {
    /// Uniform weights `1/max_n`.
    pub fn uniform(max_n: usize) -> Self {
        assert!(max_n >= 1, "max_n must be positive");
        Self {
            max_n,
            weights: vec![1.0 / max_n as f64; max_n],
            brevity: Brevity::Printed,
        }
    }

    pub fn standard(mut self) -> Self {
        self.brevity = Brevity::Standard;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weights.len() != self.max_n {
            return Err(format!("{} weights for max_n = {}", self.weights.len(), self.max_n));
        }
        if self.weights.iter().any(|&w| w < 0.0) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("weights must be non-negative and sum to 1".into());
        }
        Ok(())
    }
}

/// Every contiguous `n`-word window.
pub fn ngrams<S: AsRef<str>>(words: &[S], n: usize) -> Vec<Vec<&str>> {
    if n == 0 || words.len() < n {
        return Vec::new();
    }
    words
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect())
        .collect()
}

fn counts(grams: Vec<Vec<&str>>) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    for g in grams {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Clipped `n`-gram precision: matched counts (clipped by the reference) over candidate `n`-grams.
/// Returns 0 when the candidate has no `n`-grams.
pub fn modified_precision<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> f64 {
    let cand = counts(ngrams(candidate, n));
    let total: usize = cand.values().sum();
    if total == 0 {
        return 0.0;
    }
    let refc = counts(ngrams(reference, n));
    let matched: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    matched as f64 / total as f64
}

/// Sentence BLEU in `[0, 1]`. Any zero precision gives 0; an empty candidate gives 0.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], config: &BleuConfig) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (lc, lr) = (candidate.len() as f64, reference.len() as f64);
    let brevity = match config.brevity {
        Brevity::Printed => (1.0 - lc / lr).min(0.0),
        Brevity::Standard => (1.0 - lr / lc).min(0.0),
    };
    // product of p_n^u_n rather than exp of the log sum, so single-gram scores stay exact
    let mut score = brevity.exp();
    for (i, &u) in config.weights.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let p = modified_precision(candidate, reference, i + 1);
        if p == 0.0 {
            return 0.0;
        }
        score *= p.powf(u);
    }
    score.min(1.0)
}

/// Cumulative BLEU-1 … BLEU-`max_n` with uniform weights.
pub fn bleu_series<S: AsRef<str>>(candidate: &[S], reference: &[S], max_n: usize, brevity: Brevity) -> Vec<f64> {
    (1..=max_n)
        .map(|n| {
            let mut c = BleuConfig::uniform(n);
            c.brevity = brevity;
            bleu(candidate, reference, &c)
        })
        .collect()
}
