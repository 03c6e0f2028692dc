// Exact and IVF-Flat cosine search, and the on-disk index format.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragner::retriever::{IndexKind, IndexSpec};
use ragner::embedder::l2_normalize;
use ragner::vector_index::{self, WordRecord};

fn random_records(n: usize, dim: usize, seed: u64) -> Vec<WordRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut vector: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            l2_normalize(&mut vector);
            WordRecord {
                record_id: i as u32,
                sentence_id: i as u64 / 4,
                word_index: Some((i % 4) as u32),
                word: format!("w{i}"),
                vector,
            }
        })
        .collect()
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let records = random_records(20_000, 64, 7);
    let query = records[123].vector.clone();

    let flat = IndexSpec::flat().build(records.clone())?;
    let ivf = IndexSpec { kind: IndexKind::Ivf, ..IndexSpec::default() }.build(records)?;

    let t = Instant::now();
    let exact = flat.search(&query, 5, None)?;
    let flat_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let approx = ivf.search(&query, 5, None)?;
    let ivf_s = t.elapsed().as_secs_f64();

    println!("flat {:?} in {flat_s:.5}s", exact.iter().map(|h| h.record_id).collect::<Vec<_>>());
    println!("ivf  {:?} in {ivf_s:.5}s", approx.iter().map(|h| h.record_id).collect::<Vec<_>>());
    assert_eq!(exact[0].record_id, 123);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("words.rnix");
    vector_index::persist(&ivf, &path)?;
    let loaded = vector_index::load(&path)?;
    assert_eq!(loaded.search(&query, 5, None)?, approx);
    println!("{} bytes on disk, reload gives identical hits", std::fs::metadata(&path)?.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
