// Build regularized finetuning records: entity-type dropout duplicates and shuffled
// type order.

use ragner::augment::{build_finetune_dataset, AugmentConfig, Transform};
use ragner::corpus::split_store_finetune;
use ragner::embedder::WordFilter;
use ragner::promptkit::PromptBuilder;
use ragner::retriever::{ExampleStore, IndexSpec, RetrieverConfig};
use ragner::synth::{generate_sentences, hashed_embedder, Domain};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let domain = Domain::Conll2003;
    let schema = domain.schema();
    let sentences = generate_sentences(domain, 400, 1);
    let split = split_store_finetune(&sentences, 100, 1)?;

    let embedder = hashed_embedder(32, 0);
    let store = ExampleStore::build(split.store, &embedder, WordFilter::EntityOnly, &IndexSpec::default())?;
    let cfg = AugmentConfig { dropout_fraction: 0.3, shuffle_fraction: 0.5, seed: 1, ..Default::default() };
    let data = build_finetune_dataset(
        &split.finetune,
        &schema,
        &store,
        &embedder,
        &RetrieverConfig { k: 2, ..Default::default() },
        &PromptBuilder::default(),
        &cfg,
    )?;

    let dropped = data.records.iter().filter(|r| r.provenance.transforms.contains(&Transform::Dropout)).count();
    println!("{} sentences -> {} records ({dropped} with dropped types)", split.finetune.len(), data.records.len());
    if let Some(r) = data.records.iter().find(|r| !r.provenance.removed_types.is_empty()) {
        println!("removed {:?}; completion: {}", r.provenance.removed_types, r.completion);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
