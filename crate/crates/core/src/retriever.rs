//! In-prompt example selection.
//!
//! Word-level mode embeds every non-stop-word of the query, fetches the `per_word_k` closest
//! store words for each, pools the hits by owning example and keeps the `k` best examples.
//! Sentence-level mode ranks examples by the cosine of pooled sentence vectors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::embedder::{EmbedError, Embedder, WordEmbedding, WordFilter};
use crate::vector_index::{
    default_nlist, default_nprobe, FlatIndex, IndexError, IvfIndex, IvfParams, VectorIndex,
    WordRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("query has no words left after stop-word removal")]
    EmptyQueryAfterStopwords,
    #[error("the example store is empty")]
    EmptyStore,
    #[error("no {0} index was built for this store")]
    MissingIndex(&'static str),
    #[error("k and per_word_k must be at least 1")]
    InvalidConfig,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    #[default]
    WordLevel,
    SentenceLevel,
}

impl RetrievalMode {
    pub fn label(self) -> &'static str {
        match self {
            RetrievalMode::WordLevel => "word-level",
            RetrievalMode::SentenceLevel => "sentence-level",
        }
    }
}

/// How per-word hits on the same example combine into the example's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Highest single word similarity.
    #[default]
    Max,
    /// Sum over query words of each word's best similarity to the example.
    SumPerWord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub k: usize,
    pub mode: RetrievalMode,
    /// Hits fetched per query word; `None` means `k`.
    pub per_word_k: Option<usize>,
    pub aggregation: Aggregation,
    /// IVF probe count; `None` uses the index default.
    pub nprobe: Option<usize>,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            k: 5,
            mode: RetrievalMode::WordLevel,
            per_word_k: None,
            aggregation: Aggregation::Max,
            nprobe: None,
        }
    }
}

impl RetrieverConfig {
    pub fn per_word_k(&self) -> usize {
        self.per_word_k.unwrap_or(self.k)
    }

    fn validate(&self) -> Result<(), RetrieveError> {
        if self.k == 0 || self.per_word_k() == 0 {
            return Err(RetrieveError::InvalidConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub query_word: String,
    pub store_word: String,
    pub similarity: f64,
    #[serde(skip)]
    pub query_word_index: usize,
    #[serde(skip)]
    pub record_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub sentence_id: u64,
    pub score: f64,
    pub matched_pairs: Vec<MatchedPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    Flat,
    #[default]
    Ivf,
}

/// Index construction settings. Unset IVF sizes follow [`IvfParams::for_len`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexSpec {
    pub kind: IndexKind,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
    pub max_train_per_list: usize,
}

impl Default for IndexSpec {
    fn default() -> Self {
        Self {
            kind: IndexKind::Ivf,
            nlist: None,
            nprobe: None,
            kmeans_iters: 20,
            seed: 0,
            max_train_per_list: 64,
        }
    }
}

impl IndexSpec {
    pub fn flat() -> Self {
        Self {
            kind: IndexKind::Flat,
            ..Self::default()
        }
    }

    pub fn build(&self, records: Vec<WordRecord>) -> Result<VectorIndex, IndexError> {
        match self.kind {
            IndexKind::Flat => Ok(VectorIndex::Flat(FlatIndex::build(records)?)),
            IndexKind::Ivf => {
                let nlist = self.nlist.unwrap_or_else(|| default_nlist(records.len()));
                let params = IvfParams {
                    nlist,
                    nprobe: self.nprobe.unwrap_or_else(|| default_nprobe(nlist)).min(nlist.max(1)),
                    kmeans_iters: self.kmeans_iters,
                    seed: self.seed,
                    max_train_per_list: self.max_train_per_list,
                };
                Ok(VectorIndex::Ivf(IvfIndex::build(records, params)?))
            }
        }
    }
}

/// Word records for every selected word of every sentence, ids dense from 0.
pub fn word_records(
    sentences: &[LabeledSentence],
    embedder: &Embedder,
    filter: WordFilter,
) -> Result<Vec<WordRecord>, EmbedError> {
    let mut out = Vec::new();
    for s in sentences {
        for w in embedder.embed_words(s, filter)? {
            out.push(WordRecord {
                record_id: out.len() as u32,
                sentence_id: w.sentence_id,
                word_index: Some(w.word_index as u32),
                word: w.word,
                vector: w.vector,
            });
        }
    }
    Ok(out)
}

/// One sentence-level record per sentence.
pub fn sentence_records(
    sentences: &[LabeledSentence],
    embedder: &Embedder,
) -> Result<Vec<WordRecord>, EmbedError> {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = embedder.embed_sentence(s)?;
            Ok(WordRecord {
                record_id: i as u32,
                sentence_id: s.id,
                word_index: None,
                word: String::new(),
                vector: e.vector,
            })
        })
        .collect()
}

/// Labeled examples plus the indexes that retrieve them.
#[derive(Debug, Clone)]
pub struct ExampleStore {
    sentences: Vec<LabeledSentence>,
    by_id: HashMap<u64, usize>,
    word_index: Option<VectorIndex>,
    sentence_index: Option<VectorIndex>,
}

impl ExampleStore {
    pub fn from_parts(
        sentences: Vec<LabeledSentence>,
        word_index: Option<VectorIndex>,
        sentence_index: Option<VectorIndex>,
    ) -> Self {
        let by_id = sentences.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        Self {
            sentences,
            by_id,
            word_index,
            sentence_index,
        }
    }

    /// Embeds `sentences` and builds both indexes. Word records come from `store_words`.
    pub fn build(
        sentences: Vec<LabeledSentence>,
        embedder: &Embedder,
        store_words: WordFilter,
        index: &IndexSpec,
    ) -> Result<Self, RetrieveError> {
        let words = word_records(&sentences, embedder, store_words)?;
        let sents = sentence_records(&sentences, embedder)?;
        let mut word_index = (!words.is_empty()).then(|| index.build(words)).transpose()?;
        let mut sentence_index = (!sents.is_empty()).then(|| index.build(sents)).transpose()?;
        for idx in word_index.iter_mut().chain(sentence_index.iter_mut()) {
            idx.set_model_name(embedder.model_name());
        }
        Ok(Self::from_parts(sentences, word_index, sentence_index))
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn sentence(&self, id: u64) -> Option<&LabeledSentence> {
        self.by_id.get(&id).map(|&i| &self.sentences[i])
    }

    pub fn word_index(&self) -> Option<&VectorIndex> {
        self.word_index.as_ref()
    }

    pub fn sentence_index(&self) -> Option<&VectorIndex> {
        self.sentence_index.as_ref()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Dispatches on `cfg.mode`. `exclude` names a store sentence that must not be returned
    /// (the query itself, when it is a store member).
    pub fn retrieve(
        &self,
        query: &LabeledSentence,
        exclude: Option<u64>,
        embedder: &Embedder,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<RetrievedExample>, RetrieveError> {
        match cfg.mode {
            RetrievalMode::WordLevel => self.retrieve_word_level(query, exclude, embedder, cfg),
            RetrievalMode::SentenceLevel => {
                self.retrieve_sentence_level(query, exclude, embedder, cfg)
            }
        }
    }

    pub fn retrieve_word_level(
        &self,
        query: &LabeledSentence,
        exclude: Option<u64>,
        embedder: &Embedder,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<RetrievedExample>, RetrieveError> {
        cfg.validate()?;
        if self.sentences.is_empty() {
            return Err(RetrieveError::EmptyStore);
        }
        let words = embedder.embed_words(query, WordFilter::All)?;
        self.pool_word_hits(&words, exclude, cfg)
    }

    /// Word-level retrieval from already-embedded query words.
    pub fn pool_word_hits(
        &self,
        query_words: &[WordEmbedding],
        exclude: Option<u64>,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<RetrievedExample>, RetrieveError> {
        cfg.validate()?;
        if self.sentences.is_empty() {
            return Err(RetrieveError::EmptyStore);
        }
        if query_words.is_empty() {
            return Err(RetrieveError::EmptyQueryAfterStopwords);
        }
        let Some(index) = &self.word_index else {
            // Nothing was stored at word level (e.g. entity-only store without entities).
            return Ok(Vec::new());
        };
        let store = index.store();
        let keep = |id: u32| exclude != Some(store.meta(id).sentence_id);

        let mut pooled: HashMap<u64, Vec<MatchedPair>> = HashMap::new();
        for qw in query_words {
            for hit in index.search_filtered(&qw.vector, cfg.per_word_k(), cfg.nprobe, keep)? {
                let meta = store.meta(hit.record_id);
                pooled.entry(meta.sentence_id).or_default().push(MatchedPair {
                    query_word: qw.word.clone(),
                    store_word: meta.word.clone(),
                    similarity: hit.score,
                    query_word_index: qw.word_index,
                    record_id: hit.record_id,
                });
            }
        }

        let mut examples: Vec<RetrievedExample> = pooled
            .into_iter()
            .map(|(sentence_id, mut pairs)| {
                pairs.sort_by(|a, b| {
                    b.similarity
                        .total_cmp(&a.similarity)
                        .then(a.query_word_index.cmp(&b.query_word_index))
                        .then(a.record_id.cmp(&b.record_id))
                });
                let score = aggregate(&pairs, cfg.aggregation);
                RetrievedExample {
                    sentence_id,
                    score,
                    matched_pairs: pairs,
                }
            })
            .collect();
        sort_examples(&mut examples);
        examples.truncate(cfg.k);
        Ok(examples)
    }

    pub fn retrieve_sentence_level(
        &self,
        query: &LabeledSentence,
        exclude: Option<u64>,
        embedder: &Embedder,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<RetrievedExample>, RetrieveError> {
        cfg.validate()?;
        if self.sentences.is_empty() {
            return Err(RetrieveError::EmptyStore);
        }
        let q = embedder.embed_sentence(query)?;
        self.rank_sentences(&q.vector, exclude, cfg)
    }

    /// Sentence-level retrieval from an already-embedded query vector.
    pub fn rank_sentences(
        &self,
        query: &[f32],
        exclude: Option<u64>,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<RetrievedExample>, RetrieveError> {
        cfg.validate()?;
        let index = self
            .sentence_index
            .as_ref()
            .ok_or(RetrieveError::EmptyStore)?;
        let store = index.store();
        let hits = index.search_filtered(query, cfg.k, cfg.nprobe, |id| {
            exclude != Some(store.meta(id).sentence_id)
        })?;
        let mut examples: Vec<RetrievedExample> = hits
            .into_iter()
            .map(|h| RetrievedExample {
                sentence_id: store.meta(h.record_id).sentence_id,
                score: h.score,
                matched_pairs: Vec::new(),
            })
            .collect();
        sort_examples(&mut examples);
        Ok(examples)
    }
}

fn aggregate(pairs: &[MatchedPair], aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::Max => pairs
            .iter()
            .map(|p| p.similarity)
            .fold(f64::NEG_INFINITY, f64::max),
        Aggregation::SumPerWord => {
            let mut best: HashMap<usize, f64> = HashMap::new();
            for p in pairs {
                let e = best.entry(p.query_word_index).or_insert(f64::NEG_INFINITY);
                *e = e.max(p.similarity);
            }
            let mut words: Vec<(usize, f64)> = best.into_iter().collect();
            words.sort_by_key(|(w, _)| *w);
            words.into_iter().map(|(_, s)| s).sum()
        }
    }
}

fn sort_examples(examples: &mut [RetrievedExample]) {
    examples.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.sentence_id.cmp(&b.sentence_id))
    });
}
