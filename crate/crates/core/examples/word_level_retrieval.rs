// Word-level versus sentence-level example selection on the "13-inch macbook" fixture.
//
// The nearest sentence overall is about buying a table; the nearest *entity* is in
// "Show me a 15-inch macbook". Word-level pooling picks the latter.

use ragner::embedder::WordFilter;
use ragner::retriever::{ExampleStore, IndexSpec, RetrievalMode, RetrieverConfig};
use ragner::synth::fig3_fixture;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let fx = fig3_fixture();
    let embedder = fx.embedder();
    let store = ExampleStore::build(fx.store.clone(), &embedder, WordFilter::EntityOnly, &IndexSpec::flat())?;

    for mode in [RetrievalMode::WordLevel, RetrievalMode::SentenceLevel] {
        let cfg = RetrieverConfig { k: 2, mode, ..Default::default() };
        let hits = store.retrieve(&fx.query, None, &embedder, &cfg)?;
        println!("{}:", mode.label());
        for h in &hits {
            let text = store.sentence(h.sentence_id).map(|s| s.text()).unwrap_or_default();
            println!("  {:.3}  {text}", h.score);
            for p in &h.matched_pairs {
                println!("         {} ~ {} ({:.3})", p.query_word, p.store_word, p.similarity);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
