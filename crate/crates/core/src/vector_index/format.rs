//! Binary index file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            4 bytes   "RNIX"
//! version          u32       1
//! dim              u32
//! model_len        u32
//! model_name       model_len bytes, UTF-8
//! count            u64       N
//! N records:       sentence_id u64, word_index u32 (0xFFFF_FFFF = sentence-level),
//!                  word_len u32, word (word_len bytes, UTF-8)
//! vectors          N * dim f32, row-major in record-id order
//! kind             u8        0 = flat, 1 = IVF
//! IVF section:     nlist u32, nprobe u32, kmeans_iters u32, seed u64,
//!                  max_train_per_list u32, centroids (nlist * dim f32),
//!                  nlist posting lists: len u32, then len record ids (u32)
//! ```

use std::path::Path;

use super::{FlatIndex, IndexError, IvfIndex, IvfParams, RecordMeta, VectorIndex, VectorStore};

pub const MAGIC: &[u8; 4] = b"RNIX";
pub const FORMAT_VERSION: u32 = 1;
const NO_WORD_INDEX: u32 = u32::MAX;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    out.reserve(vs.len() * 4);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
fn to_u32(v: usize, what: &str) -> Result<u32, IndexError> {
    u32::try_from(v).map_err(|_| IndexError::Format(format!("{what} {v} exceeds u32")))
}

/// Serializes an index to bytes.
pub fn to_bytes(index: &VectorIndex) -> Result<Vec<u8>, IndexError> {
    let store = index.store();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, to_u32(store.dim(), "dimension")?);
    put_u32(&mut out, to_u32(store.model_name().len(), "model name length")?);
    out.extend_from_slice(store.model_name().as_bytes());
    put_u64(&mut out, store.len() as u64);
    for m in store.all_meta() {
        put_u64(&mut out, m.sentence_id);
        put_u32(&mut out, m.word_index.unwrap_or(NO_WORD_INDEX));
        put_u32(&mut out, to_u32(m.word.len(), "word length")?);
        out.extend_from_slice(m.word.as_bytes());
    }
    put_f32s(&mut out, store.raw_vectors());
    match index {
        VectorIndex::Flat(_) => out.push(0),
        VectorIndex::Ivf(ivf) => {
            out.push(1);
            let p = ivf.params();
            put_u32(&mut out, to_u32(p.nlist, "nlist")?);
            put_u32(&mut out, to_u32(p.nprobe, "nprobe")?);
            put_u32(&mut out, to_u32(p.kmeans_iters, "kmeans_iters")?);
            put_u64(&mut out, p.seed);
            put_u32(&mut out, to_u32(p.max_train_per_list, "max_train_per_list")?);
            put_f32s(&mut out, ivf.centroids());
            for list in ivf.postings() {
                put_u32(&mut out, to_u32(list.len(), "posting length")?);
                for &id in list {
                    put_u32(&mut out, id);
                }
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, count: u64, width: usize) -> Result<usize, IndexError> {
        let n = usize::try_from(count)
            .ok()
            .filter(|n| n.checked_mul(width).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| IndexError::Format(format!("truncated: {count} items at byte {}", self.pos)))?;
        Ok(n)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, IndexError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| IndexError::Format("overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
    fn string(&mut self, n: usize) -> Result<String, IndexError> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| IndexError::Format("invalid UTF-8".into()))
    }
}

/// Parses bytes produced by [`to_bytes`].
pub fn from_bytes(buf: &[u8]) -> Result<VectorIndex, IndexError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(IndexError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(IndexError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let dim = c.u32()? as usize;
    if dim == 0 {
        return Err(IndexError::Format("zero dimension".into()));
    }
    let model_len = c.u32()? as usize;
    let model_name = c.string(model_len)?;
    let count = c.u64()?;
    let n = c.len(count, 16)?;
    let mut meta = Vec::with_capacity(n);
    for _ in 0..n {
        let sentence_id = c.u64()?;
        let wi = c.u32()?;
        let wlen = c.u32()? as usize;
        let word = c.string(wlen)?;
        meta.push(RecordMeta {
            sentence_id,
            word_index: (wi != NO_WORD_INDEX).then_some(wi),
            word,
        });
    }
    let vectors = c.f32s(n * dim)?;
    let store = VectorStore::from_parts(dim, model_name, meta, vectors);
    let index = match c.u8()? {
        0 => VectorIndex::Flat(FlatIndex::from_store(store)),
        1 => {
            let nlist = c.u32()? as usize;
            let nprobe = c.u32()? as usize;
            let kmeans_iters = c.u32()? as usize;
            let seed = c.u64()?;
            let max_train_per_list = c.u32()? as usize;
            if nlist == 0 || nlist > n || nprobe == 0 || nprobe > nlist {
                return Err(IndexError::Format(format!("bad IVF sizes nlist={nlist} nprobe={nprobe}")));
            }
            let centroids = c.f32s(nlist * dim)?;
            let mut seen = vec![false; n];
            let mut postings = Vec::with_capacity(nlist);
            for _ in 0..nlist {
                let len = c.u32()?;
                let len = c.len(u64::from(len), 4)?;
                let mut list = Vec::with_capacity(len);
                for _ in 0..len {
                    let id = c.u32()?;
                    let slot = seen
                        .get_mut(id as usize)
                        .ok_or_else(|| IndexError::Format(format!("posting id {id} out of range")))?;
                    if *slot {
                        return Err(IndexError::Format(format!("record {id} in two postings")));
                    }
                    *slot = true;
                    list.push(id);
                }
                postings.push(list);
            }
            if seen.iter().any(|s| !s) {
                return Err(IndexError::Format("posting lists do not cover every record".into()));
            }
            let params = IvfParams {
                nlist,
                nprobe,
                kmeans_iters,
                seed,
                max_train_per_list,
            };
            VectorIndex::Ivf(IvfIndex::from_parts(store, params, centroids, postings))
        }
        k => return Err(IndexError::Format(format!("unknown index kind {k}"))),
    };
    if c.pos != buf.len() {
        return Err(IndexError::Format(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(index)
}

pub fn persist(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    std::fs::write(path, to_bytes(index)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<VectorIndex, IndexError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector_index::test_support::random_records;

    fn ivf_1000() -> VectorIndex {
        let mut recs = random_records(1000, 16, 21);
        recs[4].word_index = None;
        recs[5].word = "naïve".into();
        let mut idx = VectorIndex::Ivf(IvfIndex::build(recs, IvfParams::for_len(1000)).unwrap());
        idx.set_model_name("bge-base-en");
        idx
    }

    #[test]
    fn ivf_round_trip() {
        let idx = ivf_1000();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("words.idx");
        persist(&idx, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, idx);
        for q in random_records(20, 16, 5) {
            assert_eq!(
                back.search(&q.vector, 10, Some(3)).unwrap(),
                idx.search(&q.vector, 10, Some(3)).unwrap()
            );
        }
    }

    #[test]
    fn flat_round_trip() {
        let idx = VectorIndex::Flat(FlatIndex::build(random_records(40, 8, 2)).unwrap());
        assert_eq!(from_bytes(&to_bytes(&idx).unwrap()).unwrap(), idx);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = to_bytes(&ivf_1000()).unwrap();
        for cut in [0, 3, 10, 30, 200, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(from_bytes(&bytes[..cut]), Err(IndexError::Format(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn future_version_rejected() {
        let mut bytes = to_bytes(&ivf_1000()).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(IndexError::VersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&ivf_1000()).unwrap();
        assert_eq!(&bytes[0..4], b"RNIX");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 11);
        assert_eq!(&bytes[16..27], b"bge-base-en");
        assert_eq!(u64::from_le_bytes(bytes[27..35].try_into().unwrap()), 1000);
    }
}
