//! Cosine top-k search over unit vectors.
//!
//! [`FlatIndex`] scans every record. [`IvfIndex`] partitions records with seeded spherical
//! k-means and scans only the posting lists of the `nprobe` centroids closest to the query.
//! Both return hits sorted by descending score with ties broken by ascending record id, so
//! results are fully deterministic. Vectors are expected to be L2-normalized; cosine is then
//! the dot product.

mod flat;
mod format;
mod ivf;
mod kmeans;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

pub use flat::FlatIndex;
pub use format::{load, persist, FORMAT_VERSION, MAGIC};
pub use ivf::{default_nlist, default_nprobe, IvfIndex, IvfParams};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("record {record_id} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        record_id: u32,
        expected: usize,
        found: usize,
    },
    #[error("query has dimension {found}, index has {expected}")]
    QueryDimension { expected: usize, found: usize },
    #[error("cannot build an index over zero records")]
    EmptyCollection,
    #[error("record ids must be dense from 0; position {position} holds id {record_id}")]
    NonDenseIds { position: usize, record_id: u32 },
    #[error("record {record_id} is not unit-norm (norm {norm})")]
    NotUnitNorm { record_id: u32, norm: f64 },
    #[error("nlist {nlist} must be between 1 and the record count {records}")]
    NlistTooLarge { nlist: usize, records: usize },
    #[error("nprobe {nprobe} must be between 1 and nlist {nlist}")]
    InvalidNprobe { nprobe: usize, nlist: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index file: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file is malformed: {0}")]
    Format(String),
    #[error("index file version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

/// A row of the vector store: one word (or sentence) vector and the example it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub record_id: u32,
    pub sentence_id: u64,
    /// Token position within the owning sentence; `None` for sentence-level records.
    pub word_index: Option<u32>,
    pub word: String,
    pub vector: Vec<f32>,
}

/// Record metadata without the vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordMeta {
    pub sentence_id: u64,
    pub word_index: Option<u32>,
    pub word: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub record_id: u32,
    pub score: f64,
}

/// Records plus their vectors in one contiguous row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    model_name: String,
    meta: Vec<RecordMeta>,
    vectors: Vec<f32>,
}

const UNIT_NORM_TOLERANCE: f64 = 1e-3;

impl VectorStore {
    pub fn from_records(records: Vec<WordRecord>) -> Result<Self, IndexError> {
        let first = records.first().ok_or(IndexError::EmptyCollection)?;
        let dim = first.vector.len();
        let mut meta = Vec::with_capacity(records.len());
        let mut vectors = Vec::with_capacity(records.len() * dim);
        for (position, r) in records.into_iter().enumerate() {
            if r.record_id as usize != position {
                return Err(IndexError::NonDenseIds {
                    position,
                    record_id: r.record_id,
                });
            }
            if r.vector.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    record_id: r.record_id,
                    expected: dim,
                    found: r.vector.len(),
                });
            }
            let norm = crate::embedder::l2_norm(&r.vector);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(IndexError::NotUnitNorm {
                    record_id: r.record_id,
                    norm,
                });
            }
            vectors.extend_from_slice(&r.vector);
            meta.push(RecordMeta {
                sentence_id: r.sentence_id,
                word_index: r.word_index,
                word: r.word,
            });
        }
        Ok(Self {
            dim,
            model_name: String::new(),
            meta,
            vectors,
        })
    }

    pub(crate) fn from_parts(
        dim: usize,
        model_name: String,
        meta: Vec<RecordMeta>,
        vectors: Vec<f32>,
    ) -> Self {
        Self {
            dim,
            model_name,
            meta,
            vectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn vector(&self, record_id: u32) -> &[f32] {
        let i = record_id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn meta(&self, record_id: u32) -> &RecordMeta {
        &self.meta[record_id as usize]
    }

    pub(crate) fn all_meta(&self) -> &[RecordMeta] {
        &self.meta
    }

    pub(crate) fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    fn check_query(&self, query: &[f32], k: usize) -> Result<(), IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::QueryDimension {
                expected: self.dim,
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        debug_assert!(
            (crate::embedder::l2_norm(query) - 1.0).abs() < UNIT_NORM_TOLERANCE,
            "query vector is not unit-norm"
        );
        Ok(())
    }
}

/// Dot product accumulated in `f64` over four lanes.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        lanes[0] += f64::from(a[i]) * f64::from(b[i]);
        lanes[1] += f64::from(a[i + 1]) * f64::from(b[i + 1]);
        lanes[2] += f64::from(a[i + 2]) * f64::from(b[i + 2]);
        lanes[3] += f64::from(a[i + 3]) * f64::from(b[i + 3]);
    }
    let mut tail = 0f64;
    for i in chunks * 4..a.len() {
        tail += f64::from(a[i]) * f64::from(b[i]);
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Heap entry ordered so that the *worst* hit is the maximum.
#[derive(Debug, Clone, Copy)]
struct Ranked(SearchHit);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.record_id.cmp(&other.0.record_id))
    }
}

/// Ordering used for every result list: score descending, then record id ascending.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    Ranked(*a).cmp(&Ranked(*b))
}

/// Bounded best-k collector.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, record_id: u32, score: f64) {
        let cand = Ranked(SearchHit { record_id, score });
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(worst) = self.heap.peek() {
            if cand < *worst {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<SearchHit> {
        let mut v: Vec<SearchHit> = self.heap.into_iter().map(|r| r.0).collect();
        v.sort_by(hit_order);
        v
    }
}

/// Either index kind, behind one search interface.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

impl VectorIndex {
    pub fn store(&self) -> &VectorStore {
        match self {
            VectorIndex::Flat(f) => f.store(),
            VectorIndex::Ivf(i) => i.store(),
        }
    }

    pub fn len(&self) -> usize {
        self.store().len()
    }

    pub fn is_empty(&self) -> bool {
        self.store().is_empty()
    }

    pub fn dim(&self) -> usize {
        self.store().dim()
    }

    pub fn set_model_name(&mut self, name: &str) {
        let store = match self {
            VectorIndex::Flat(f) => f.store_mut(),
            VectorIndex::Ivf(i) => i.store_mut(),
        };
        store.model_name = name.to_string();
    }

    /// Top-k search. `nprobe` applies to IVF only; `None` uses the index default.
    pub fn search(
        &self,
        query: &[f32],
        k: usize,
        nprobe: Option<usize>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.search_filtered(query, k, nprobe, |_| true)
    }

    /// Like [`search`](Self::search) but only records accepted by `keep` are candidates.
    pub fn search_filtered<F: Fn(u32) -> bool>(
        &self,
        query: &[f32],
        k: usize,
        nprobe: Option<usize>,
        keep: F,
    ) -> Result<Vec<SearchHit>, IndexError> {
        match self {
            VectorIndex::Flat(f) => f.search_filtered(query, k, keep),
            VectorIndex::Ivf(i) => {
                let nprobe = nprobe.unwrap_or(i.params().nprobe);
                i.search_filtered(query, k, nprobe, keep)
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::WordRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        crate::embedder::l2_normalize(&mut v);
        v
    }

    pub fn random_records(n: usize, dim: usize, seed: u64) -> Vec<WordRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| WordRecord {
                record_id: i as u32,
                sentence_id: (i / 3) as u64,
                word_index: Some((i % 3) as u32),
                word: format!("w{i}"),
                vector: unit(&mut rng, dim),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_keeps_best_with_id_tiebreak() {
        let mut t = TopK::new(3);
        for (id, s) in [(5, 0.5), (1, 0.9), (2, 0.5), (3, 0.1), (0, 0.5)] {
            t.push(id, s);
        }
        let ids: Vec<u32> = t.into_sorted().iter().map(|h| h.record_id).collect();
        assert_eq!(ids, vec![1, 0, 2]);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..13).map(|i| i as f32 * 0.1).collect();
        let b: Vec<f32> = (0..13).map(|i| 1.0 - i as f32 * 0.05).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn store_validation() {
        let mut recs = test_support::random_records(3, 4, 1);
        recs[2].vector.push(0.0);
        assert!(matches!(
            VectorStore::from_records(recs),
            Err(IndexError::DimensionMismatch { record_id: 2, .. })
        ));
        let mut recs = test_support::random_records(3, 4, 1);
        recs[1].record_id = 7;
        assert!(matches!(
            VectorStore::from_records(recs),
            Err(IndexError::NonDenseIds { position: 1, record_id: 7 })
        ));
        let mut recs = test_support::random_records(2, 4, 1);
        recs[0].vector = vec![1.0, 1.0, 0.0, 0.0];
        assert!(matches!(VectorStore::from_records(recs), Err(IndexError::NotUnitNorm { .. })));
        assert!(matches!(VectorStore::from_records(vec![]), Err(IndexError::EmptyCollection)));
    }
}
