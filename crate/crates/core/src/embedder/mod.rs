//! Contextual word embeddings and pooled sentence embeddings.
//!
//! A provider encodes a sentence into subword tokens, each carrying character offsets
//! into the sentence text and a vector, plus a pooled sentence vector. Word vectors are the
//! mean of the subword vectors overlapping the word's character range, L2-normalized.
//! Every vector leaving this module has unit norm, so cosine similarity downstream is a
//! plain dot product.

mod precomputed;
mod remote;
mod stopwords;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;

pub use precomputed::{load_precomputed, EncodingRecord, PrecomputedProvider};
pub use remote::{RemoteConfig, RemoteProvider};
pub use stopwords::{default_stopwords, parse_stopword_list, DEFAULT_STOPWORDS};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("vector dimension {found} does not match the configured dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding service returned HTTP {status}")]
    Http { status: u16 },
    #[error("sentence {sentence_id}: word {word_index} ({word:?}) is covered by no subword token")]
    AlignmentGap {
        sentence_id: u64,
        word_index: usize,
        word: String,
    },
    #[error("sentence has no tokens")]
    EmptyInput,
    #[error("embedding file format error: {0}")]
    Format(String),
    #[error("no precomputed embedding for sentence {0:?}")]
    MissingEntry(String),
    #[error("zero-length vector for {0:?}")]
    DegenerateVector(String),
}

/// One subword token as returned by a provider. Offsets are in characters (Unicode scalar
/// values) of the sentence text, end-exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVector {
    pub text: String,
    pub start_char: usize,
    pub end_char: usize,
    pub vector: Vec<f32>,
}

/// Provider output for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub tokens: Vec<TokenVector>,
    pub sentence_vector: Vec<f32>,
}

/// Anything that can encode a sentence text. Must be deterministic per text.
pub trait EmbeddingProvider: Send + Sync {
    fn encode(&self, text: &str) -> Result<Encoding, EmbedError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "kebab-case")]
pub enum ProviderSpec {
    RemoteService(RemoteConfig),
    PrecomputedFile { path: PathBuf },
    /// Offline deterministic encoder, see [`crate::synth::HashedEncoder`].
    Hashed {
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    #[serde(flatten)]
    pub provider: ProviderSpec,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    pub dimension: usize,
    #[serde(default = "default_stopwords")]
    pub stopwords: BTreeSet<String>,
}

fn default_model_name() -> String {
    "bge-base-en".to_string()
}

/// Which words of a sentence get a [`WordEmbedding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordFilter {
    /// Every non-stop-word token.
    #[default]
    All,
    /// Non-stop-word tokens inside an entity span.
    EntityOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEmbedding {
    pub sentence_id: u64,
    pub word_index: usize,
    pub word: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub sentence_id: u64,
    pub vector: Vec<f32>,
}

/// Scales `v` to unit L2 norm. Returns `false` (leaving `v` untouched) for a zero vector.
pub fn l2_normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Character ranges of each token in `tokens.join(" ")`.
pub fn word_char_ranges(tokens: &[String]) -> Vec<(usize, usize)> {
    let mut ranges = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for tok in tokens {
        let len = tok.chars().count();
        ranges.push((pos, pos + len));
        pos += len + 1;
    }
    ranges
}

/// A spec bound to a live provider.
#[derive(Clone)]
pub struct Embedder {
    spec: EmbedderSpec,
    provider: Arc<dyn EmbeddingProvider>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Embedder {
    /// Builds the provider named by `spec` (loading the file or configuring the client).
    pub fn from_spec(spec: EmbedderSpec) -> Result<Self, EmbedError> {
        let provider: Arc<dyn EmbeddingProvider> = match &spec.provider {
            ProviderSpec::PrecomputedFile { path } => Arc::new(load_precomputed(path)?),
            ProviderSpec::RemoteService(cfg) => {
                Arc::new(RemoteProvider::new(cfg.clone(), spec.model_name.clone()))
            }
            ProviderSpec::Hashed { seed } => {
                Arc::new(crate::synth::HashedEncoder::new(spec.dimension, *seed))
            }
        };
        Self::with_provider(spec, provider)
    }

    pub fn with_provider(
        spec: EmbedderSpec,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, EmbedError> {
        if spec.dimension == 0 {
            return Err(EmbedError::DimensionMismatch {
                expected: 0,
                found: 0,
            });
        }
        Ok(Self { spec, provider })
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn model_name(&self) -> &str {
        &self.spec.model_name
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.spec.stopwords.contains(&word.to_lowercase())
    }

    fn check_dim(&self, v: &[f32]) -> Result<(), EmbedError> {
        if v.len() != self.spec.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.spec.dimension,
                found: v.len(),
            });
        }
        Ok(())
    }

    fn encode(&self, sentence: &LabeledSentence) -> Result<Encoding, EmbedError> {
        if sentence.tokens.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let enc = self.provider.encode(&sentence.text())?;
        self.check_dim(&enc.sentence_vector)?;
        for t in &enc.tokens {
            self.check_dim(&t.vector)?;
        }
        Ok(enc)
    }

    /// Word vectors for the selected non-stop-word tokens of `sentence`.
    pub fn embed_words(
        &self,
        sentence: &LabeledSentence,
        filter: WordFilter,
    ) -> Result<Vec<WordEmbedding>, EmbedError> {
        let enc = self.encode(sentence)?;
        let mut in_entity = vec![false; sentence.tokens.len()];
        for span in &sentence.spans {
            for flag in in_entity.iter_mut().take(span.end).skip(span.start) {
                *flag = true;
            }
        }
        let ranges = word_char_ranges(&sentence.tokens);
        let dim = self.spec.dimension;
        let mut out = Vec::new();
        for (i, word) in sentence.tokens.iter().enumerate() {
            if self.is_stopword(word) || (filter == WordFilter::EntityOnly && !in_entity[i]) {
                continue;
            }
            let (ws, we) = ranges[i];
            let mut acc = vec![0f64; dim];
            let mut n = 0usize;
            for t in &enc.tokens {
                if t.start_char < we && t.end_char > ws && t.end_char > t.start_char {
                    for (a, &x) in acc.iter_mut().zip(&t.vector) {
                        *a += f64::from(x);
                    }
                    n += 1;
                }
            }
            if n == 0 {
                return Err(EmbedError::AlignmentGap {
                    sentence_id: sentence.id,
                    word_index: i,
                    word: word.clone(),
                });
            }
            let mut vector: Vec<f32> = acc.iter().map(|&a| (a / n as f64) as f32).collect();
            if !l2_normalize(&mut vector) {
                return Err(EmbedError::DegenerateVector(word.clone()));
            }
            out.push(WordEmbedding {
                sentence_id: sentence.id,
                word_index: i,
                word: word.clone(),
                vector,
            });
        }
        Ok(out)
    }

    /// The provider's pooled sentence vector, normalized.
    pub fn embed_sentence(&self, sentence: &LabeledSentence) -> Result<SentenceEmbedding, EmbedError> {
        let enc = self.encode(sentence)?;
        let mut vector = enc.sentence_vector;
        if !l2_normalize(&mut vector) {
            return Err(EmbedError::DegenerateVector(sentence.text()));
        }
        Ok(SentenceEmbedding {
            sentence_id: sentence.id,
            vector,
        })
    }
}
