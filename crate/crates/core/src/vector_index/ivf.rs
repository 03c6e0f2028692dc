use serde::{Deserialize, Serialize};

use super::kmeans::{self, nearest};
use super::{dot, hit_order, IndexError, SearchHit, TopK, VectorStore, WordRecord};

/// `max(1, floor(sqrt(n)))`.
pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// `max(1, ceil(nlist / 8))`.
pub fn default_nprobe(nlist: usize) -> usize {
    nlist.div_ceil(8).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfParams {
    pub nlist: usize,
    /// Default probe count used when a search does not specify one.
    pub nprobe: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Training sample cap per centroid; larger collections train on a seeded sample.
    pub max_train_per_list: usize,
}

impl IvfParams {
    /// Defaults sized for `n` records.
    pub fn for_len(n: usize) -> Self {
        let nlist = default_nlist(n);
        Self {
            nlist,
            nprobe: default_nprobe(nlist),
            kmeans_iters: 20,
            seed: 0,
            max_train_per_list: 64,
        }
    }
}

/// Inverted-file index: k-means centroids with one posting list per centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    store: VectorStore,
    params: IvfParams,
    centroids: Vec<f32>,
    postings: Vec<Vec<u32>>,
}

impl IvfIndex {
    /// Clusters `records` into `params.nlist` lists. Deterministic for a fixed seed.
    pub fn build(records: Vec<WordRecord>, params: IvfParams) -> Result<Self, IndexError> {
        if records.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        if params.nlist == 0 || params.nlist > records.len() {
            return Err(IndexError::NlistTooLarge {
                nlist: params.nlist,
                records: records.len(),
            });
        }
        if params.nprobe == 0 || params.nprobe > params.nlist {
            return Err(IndexError::InvalidNprobe {
                nprobe: params.nprobe,
                nlist: params.nlist,
            });
        }
        let store = VectorStore::from_records(records)?;
        let dim = store.dim();
        let centroids = kmeans::train(
            store.raw_vectors(),
            dim,
            params.nlist,
            params.kmeans_iters,
            params.seed,
            params.max_train_per_list,
        );
        let mut postings = vec![Vec::new(); params.nlist];
        for (i, v) in store.raw_vectors().chunks_exact(dim).enumerate() {
            postings[nearest(&centroids, dim, v).0].push(i as u32);
        }
        Ok(Self {
            store,
            params,
            centroids,
            postings,
        })
    }

    pub(crate) fn from_parts(
        store: VectorStore,
        params: IvfParams,
        centroids: Vec<f32>,
        postings: Vec<Vec<u32>>,
    ) -> Self {
        Self {
            store,
            params,
            centroids,
            postings,
        }
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub(crate) fn store_mut(&mut self) -> &mut VectorStore {
        &mut self.store
    }

    pub fn params(&self) -> &IvfParams {
        &self.params
    }

    pub fn nlist(&self) -> usize {
        self.params.nlist
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn postings(&self) -> &[Vec<u32>] {
        &self.postings
    }

    /// Centroid indices ordered by similarity to `query` (ties by index).
    fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let dim = self.store.dim();
        let mut ranked: Vec<SearchHit> = self
            .centroids
            .chunks_exact(dim)
            .enumerate()
            .map(|(c, v)| SearchHit {
                record_id: c as u32,
                score: dot(query, v),
            })
            .collect();
        ranked.sort_by(hit_order);
        ranked.truncate(nprobe);
        ranked.into_iter().map(|h| h.record_id as usize).collect()
    }

    pub fn search(&self, query: &[f32], k: usize, nprobe: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.search_filtered(query, k, nprobe, |_| true)
    }

    pub fn search_filtered<F: Fn(u32) -> bool>(
        &self,
        query: &[f32],
        k: usize,
        nprobe: usize,
        keep: F,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.store.check_query(query, k)?;
        if nprobe == 0 || nprobe > self.params.nlist {
            return Err(IndexError::InvalidNprobe {
                nprobe,
                nlist: self.params.nlist,
            });
        }
        let mut top = TopK::new(k);
        for c in self.probe_order(query, nprobe) {
            for &id in &self.postings[c] {
                if keep(id) {
                    top.push(id, dot(query, self.store.vector(id)));
                }
            }
        }
        Ok(top.into_sorted())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector_index::test_support::{random_records, unit};
    use crate::vector_index::FlatIndex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(nlist: usize, seed: u64) -> IvfParams {
        IvfParams {
            nlist,
            nprobe: 1,
            kmeans_iters: 20,
            seed,
            max_train_per_list: 64,
        }
    }

    #[test]
    fn defaults() {
        assert_eq!(default_nlist(0), 1);
        assert_eq!(default_nlist(1000), 31);
        assert_eq!(default_nlist(100_000), 316);
        assert_eq!(default_nprobe(1), 1);
        assert_eq!(default_nprobe(31), 4);
        assert_eq!(default_nprobe(316), 40);
    }

    #[test]
    fn single_list_matches_flat() {
        let recs = random_records(150, 8, 5);
        let flat = FlatIndex::build(recs.clone()).unwrap();
        let ivf = IvfIndex::build(recs, params(1, 0)).unwrap();
        assert_eq!(ivf.postings()[0].len(), 150);
        for q in random_records(10, 8, 77) {
            assert_eq!(ivf.search(&q.vector, 7, 1).unwrap(), flat.search(&q.vector, 7).unwrap());
        }
    }

    #[test]
    fn build_is_deterministic() {
        let recs = random_records(1000, 16, 9);
        let a = IvfIndex::build(recs.clone(), params(32, 4)).unwrap();
        let b = IvfIndex::build(recs, params(32, 4)).unwrap();
        assert_eq!(a.postings(), b.postings());
        assert_eq!(a.centroids(), b.centroids());
        let total: usize = a.postings().iter().map(Vec::len).sum();
        assert_eq!(total, 1000);
        let mut seen: Vec<u32> = a.postings().iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..1000).collect::<Vec<u32>>());
    }

    #[test]
    fn separated_clusters_land_in_separate_lists() {
        // Two tight Gaussian clusters around orthogonal directions.
        let dim = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut recs = Vec::new();
        for (c, axis) in [0usize, 4].into_iter().enumerate() {
            for i in 0..50 {
                let noise = unit(&mut rng, dim);
                let mut v: Vec<f32> = noise.iter().map(|x| 0.1 * x).collect();
                v[axis] += 1.0;
                crate::embedder::l2_normalize(&mut v);
                let id = recs.len() as u32;
                recs.push(WordRecord {
                    record_id: id,
                    sentence_id: (c * 50 + i) as u64,
                    word_index: None,
                    word: format!("c{c}"),
                    vector: v,
                });
            }
        }
        // Brute-force oracle: nearest of the two cluster axes for each record.
        let oracle: Vec<usize> = recs
            .iter()
            .map(|r| if r.vector[0] > r.vector[4] { 0 } else { 1 })
            .collect();
        let ivf = IvfIndex::build(recs, params(2, 3)).unwrap();
        for list in ivf.postings() {
            assert_eq!(list.len(), 50);
            let cluster = oracle[list[0] as usize];
            assert!(list.iter().all(|&id| oracle[id as usize] == cluster));
        }
    }

    #[test]
    fn errors() {
        let recs = random_records(5, 4, 1);
        assert!(matches!(
            IvfIndex::build(recs.clone(), params(6, 0)),
            Err(IndexError::NlistTooLarge { nlist: 6, records: 5 })
        ));
        assert!(matches!(IvfIndex::build(vec![], params(1, 0)), Err(IndexError::EmptyCollection)));
        let ivf = IvfIndex::build(recs, params(2, 0)).unwrap();
        let q = random_records(1, 4, 3).remove(0).vector;
        assert!(matches!(ivf.search(&q, 1, 3), Err(IndexError::InvalidNprobe { .. })));
        assert!(matches!(ivf.search(&q, 1, 0), Err(IndexError::InvalidNprobe { .. })));
    }

    #[test]
    fn duplicate_vectors_do_not_break_seeding() {
        let mut recs = random_records(6, 4, 2);
        let v = recs[0].vector.clone();
        for r in &mut recs {
            r.vector = v.clone();
        }
        let ivf = IvfIndex::build(recs, params(3, 0)).unwrap();
        assert_eq!(ivf.postings().iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(ivf.search(&v, 6, 3).unwrap().len(), 6);
    }
}
