use super::{dot, IndexError, SearchHit, TopK, VectorStore, WordRecord};

/// Exhaustive scan over every record.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    store: VectorStore,
}

impl FlatIndex {
    pub fn build(records: Vec<WordRecord>) -> Result<Self, IndexError> {
        Ok(Self {
            store: VectorStore::from_records(records)?,
        })
    }

    pub(crate) fn from_store(store: VectorStore) -> Self {
        Self { store }
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub(crate) fn store_mut(&mut self) -> &mut VectorStore {
        &mut self.store
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.search_filtered(query, k, |_| true)
    }

    pub fn search_filtered<F: Fn(u32) -> bool>(
        &self,
        query: &[f32],
        k: usize,
        keep: F,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.store.check_query(query, k)?;
        let mut top = TopK::new(k);
        let dim = self.store.dim();
        for (i, v) in self.store.raw_vectors().chunks_exact(dim).enumerate() {
            let id = i as u32;
            if keep(id) {
                top.push(id, dot(query, v));
            }
        }
        Ok(top.into_sorted())
    }
}
