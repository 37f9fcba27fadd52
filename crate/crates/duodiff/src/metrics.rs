//! Quantitative evaluation metrics.
//!
//! Word error rate and its two-backend delta variant operate on normalized
//! token sequences; KL divergence compares categorical label distributions;
//! the Fréchet distance compares Gaussian summaries of embedding sets; and
//! the embedding-cosine score measures alignment between two embedding
//! vectors from a pluggable embedder.
//!
//! Everything here is pure math over supplied values. The pretrained models
//! that produce transcripts and embeddings at full scale live behind the
//! client contracts in [`crate::clients`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference token sequence is empty")]
    EmptyReference,
    #[error("distribution support sizes differ: {lhs} vs {rhs}")]
    SupportMismatch { lhs: usize, rhs: usize },
    #[error("probability at index {index} is negative ({value})")]
    NegativeProbability { index: usize, value: f64 },
    #[error("distribution has no mass")]
    ZeroMass,
    #[error("embedding dimensions differ: {lhs} vs {rhs}")]
    DimensionMismatch { lhs: usize, rhs: usize },
    #[error("embedding set needs at least two vectors, got {got}")]
    TooFewVectors { got: usize },
    #[error("embedding vectors have inconsistent lengths")]
    RaggedVectors,
    #[error("embedding dimension must be at least one")]
    EmptyEmbedding,
    #[error("covariance is not symmetric (max asymmetry {max_asym})")]
    NotSymmetric { max_asym: f64 },
    #[error("covariance is not positive semidefinite (eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("non-finite value in metric input")]
    NonFinite,
}

/// A normalized word sequence.
///
/// Normalization is fixed: lowercase, every character that is neither
/// alphanumeric nor an apostrophe becomes a space, the result is split on
/// whitespace, and apostrophes are trimmed from word edges (so "don't" keeps
/// its apostrophe but a quoted 'word' loses the quotes). The typographic
/// apostrophe folds to the ASCII one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    words: Vec<String>,
}

impl TokenSeq {
    pub fn from_text(text: &str) -> Self {
        let cleaned: String = text
            .to_lowercase()
            .chars()
            .map(|c| {
                let c = if c == '\u{2019}' { '\'' } else { c };
                if c.is_alphanumeric() || c == '\'' {
                    c
                } else {
                    ' '
                }
            })
            .collect();
        let words = cleaned
            .split_whitespace()
            .map(|w| w.trim_matches('\'').to_string())
            .filter(|w| !w.is_empty())
            .collect();
        TokenSeq { words }
    }

    pub fn from_words(words: Vec<String>) -> Self {
        TokenSeq { words }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word-level Levenshtein distance between two sequences: the minimum number
/// of substitutions, insertions, and deletions turning `a` into `b`.
pub fn edit_distance(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(a.words[i - 1] != b.words[j - 1]);
            let del = prev[j] + 1;
            let ins = cur[j - 1] + 1;
            cur[j] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Word error rate: edit distance from `hyp` to `reference`, divided by the
/// reference length. Can exceed one when the hypothesis is much longer.
pub fn wer(reference: &TokenSeq, hyp: &TokenSeq) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(edit_distance(reference, hyp) as f64 / reference.len() as f64)
}

/// Intelligibility proxy for generated audio without a ground-truth
/// transcript: the WER between the transcripts of two different recognition
/// backends, with the secondary acting as the reference. Low values mean the
/// two backends agree, which only happens when the speech is clear.
pub fn delta_wer(hyp_primary: &TokenSeq, hyp_secondary: &TokenSeq) -> Result<f64, MetricsError> {
    wer(hyp_secondary, hyp_primary)
}

/// KL divergence (in nats) between two categorical distributions over the
/// same support. Inputs are non-negative weights; both are smoothed by
/// 1e-10 per cell and renormalized, so the result is finite even when `q`
/// has empty cells, zero exactly when `p == q`, and never negative.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::SupportMismatch {
            lhs: p.len(),
            rhs: q.len(),
        });
    }
    if p.is_empty() {
        return Err(MetricsError::ZeroMass);
    }
    let smooth = |v: &[f64]| -> Result<Vec<f64>, MetricsError> {
        for (i, &x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(MetricsError::NonFinite);
            }
            if x < 0.0 {
                return Err(MetricsError::NegativeProbability { index: i, value: x });
            }
        }
        let total: f64 = v.iter().sum::<f64>() + 1e-10 * v.len() as f64;
        if total <= 0.0 {
            return Err(MetricsError::ZeroMass);
        }
        Ok(v.iter().map(|&x| (x + 1e-10) / total).collect())
    };
    let ps = smooth(p)?;
    let qs = smooth(q)?;
    let kl: f64 = ps
        .iter()
        .zip(&qs)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum();
    Ok(kl.max(0.0))
}

/// Gaussian summary of a set of embedding vectors: mean and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl EmbeddingSet {
    /// Summarize raw vectors. Uses the unbiased covariance (divisor n - 1),
    /// so at least two vectors are required.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self, MetricsError> {
        if vectors.len() < 2 {
            return Err(MetricsError::TooFewVectors {
                got: vectors.len(),
            });
        }
        let k = vectors[0].len();
        if k == 0 {
            return Err(MetricsError::EmptyEmbedding);
        }
        if vectors.iter().any(|v| v.len() != k) {
            return Err(MetricsError::RaggedVectors);
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let n = vectors.len() as f64;
        let mut mu = DVector::zeros(k);
        for v in vectors {
            for (i, &x) in v.iter().enumerate() {
                mu[i] += x / n;
            }
        }
        let mut sigma = DMatrix::zeros(k, k);
        for v in vectors {
            let centered = DVector::from_iterator(k, v.iter().zip(mu.iter()).map(|(x, m)| x - m));
            sigma += &centered * centered.transpose();
        }
        sigma /= n - 1.0;
        Ok(EmbeddingSet { mu, sigma })
    }

    /// Build directly from moments, validating symmetry (within 1e-10) and
    /// positive semidefiniteness (eigenvalues above -1e-8, relative to the
    /// spectral scale).
    pub fn from_moments(mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let k = mu.len();
        if k == 0 {
            return Err(MetricsError::EmptyEmbedding);
        }
        if sigma.len() != k || sigma.iter().any(|r| r.len() != k) {
            return Err(MetricsError::RaggedVectors);
        }
        if mu.iter().any(|x| !x.is_finite())
            || sigma.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(MetricsError::NonFinite);
        }
        let m = DMatrix::from_fn(k, k, |i, j| sigma[i][j]);
        let mut max_asym = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if max_asym > 1e-10 {
            return Err(MetricsError::NotSymmetric { max_asym });
        }
        let eig = SymmetricEigen::new(m.clone());
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1.0);
        let min_ev = eig.eigenvalues.min();
        if min_ev < -1e-8 * scale {
            return Err(MetricsError::NotPsd {
                min_eigenvalue: min_ev,
            });
        }
        Ok(EmbeddingSet {
            mu: DVector::from_vec(mu),
            sigma: m,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mu.iter().cloned().collect()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.sigma[(i, j)]).collect())
            .collect()
    }
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Small negative eigenvalues (rounding artifacts) clamp to zero; anything
/// materially negative is an error.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1.0);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-8 * scale {
            return Err(MetricsError::NotPsd {
                min_eigenvalue: *v,
            });
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Fréchet distance between two Gaussian embedding summaries:
/// `|mu_A - mu_B|^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2})`.
///
/// The product square-root trace is computed through the symmetrized form
/// `(S_B^{1/2} S_A S_B^{1/2})^{1/2}`, which has the same eigenvalues, so a
/// symmetric eigendecomposition suffices. Rounding can push the total a hair
/// below zero; the result clamps to zero.
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            lhs: a.dim(),
            rhs: b.dim(),
        });
    }
    let diff = &a.mu - &b.mu;
    let mean_term = diff.norm_squared();
    let sb_half = sqrt_psd(&b.sigma)?;
    let inner = &sb_half * &a.sigma * &sb_half;
    let inner_sqrt = sqrt_psd(&inner)?;
    let trace_term = a.sigma.trace() + b.sigma.trace() - 2.0 * inner_sqrt.trace();
    Ok((mean_term + trace_term).max(0.0))
}

/// Cosine similarity between two embedding vectors, in [-1, 1].
pub fn embedding_cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch {
            lhs: a.len(),
            rhs: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// One evaluation item: a reference transcript plus hypotheses from the
/// primary and secondary transcription backends.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptTriple {
    pub id: String,
    pub reference: String,
    pub primary: String,
    pub secondary: String,
}

/// A pair of label distributions to compare by divergence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistPair {
    pub id: String,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// A pair of embedding vectors to compare by cosine similarity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosinePair {
    pub id: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Two embedding populations to compare by Fréchet distance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingPools {
    pub real: Vec<Vec<f64>>,
    pub generated: Vec<Vec<f64>>,
}

pub const EVAL_SCHEMA: &str = "eval/v1";

/// The batch evaluation input: everything needed to score a set of system
/// outputs against references. Sections may be empty; their aggregates come
/// out as `None`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalInput {
    pub schema: String,
    #[serde(default)]
    pub transcripts: Vec<TranscriptTriple>,
    #[serde(default)]
    pub distributions: Vec<DistPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingPools>,
    #[serde(default)]
    pub cosine_pairs: Vec<CosinePair>,
}

/// Aggregated evaluation scores. Means are plain averages over the items of
/// the corresponding input section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_wer_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frechet: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine_mean: Option<f64>,
    pub n_transcripts: usize,
    pub n_distributions: usize,
    pub n_cosine_pairs: usize,
}

/// Score a full evaluation batch. Per item: word error rate of the primary
/// hypothesis against the reference, the primary-minus-secondary error-rate
/// shift, divergence between label distributions, and embedding cosines;
/// plus one Fréchet distance between the embedding pools.
pub fn evaluate(input: &EvalInput) -> Result<EvalReport, MetricsError> {
    let mut wers = Vec::new();
    let mut deltas = Vec::new();
    for t in &input.transcripts {
        let reference = TokenSeq::from_text(&t.reference);
        let primary = TokenSeq::from_text(&t.primary);
        let secondary = TokenSeq::from_text(&t.secondary);
        wers.push(wer(&reference, &primary)?);
        deltas.push(delta_wer(&primary, &secondary)?);
    }
    let mut kls = Vec::new();
    for d in &input.distributions {
        kls.push(kl_divergence(&d.p, &d.q)?);
    }
    let frechet = match &input.embeddings {
        Some(pools) if !pools.real.is_empty() || !pools.generated.is_empty() => {
            let real = EmbeddingSet::from_vectors(&pools.real)?;
            let generated = EmbeddingSet::from_vectors(&pools.generated)?;
            Some(frechet_distance(&generated, &real)?)
        }
        _ => None,
    };
    let mut cosines = Vec::new();
    for c in &input.cosine_pairs {
        cosines.push(embedding_cosine(&c.a, &c.b)?);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(EvalReport {
        schema: EVAL_SCHEMA.to_string(),
        wer_mean: mean(&wers),
        delta_wer_mean: mean(&deltas),
        kl_mean: mean(&kls),
        frechet,
        cosine_mean: mean(&cosines),
        n_transcripts: input.transcripts.len(),
        n_distributions: input.distributions.len(),
        n_cosine_pairs: input.cosine_pairs.len(),
    })
}
