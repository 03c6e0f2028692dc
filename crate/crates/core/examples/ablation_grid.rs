// A small configuration grid: retrieval mode by k, printed as tables.

use ragner::embedder::WordFilter;
use ragner::evaluation::ablation::{run_ablation, AblationGrid, AblationInputs, DomainData, TableLayout};
use ragner::evaluation::EvalOptions;
use ragner::generation::{Backend, GeneratorSpec};
use ragner::pipeline::PipelineConfig;
use ragner::promptkit::PromptBuilder;
use ragner::retriever::{IndexKind, IndexSpec, RetrievalMode};
use ragner::synth::{contrast_corpus, hashed_embedder};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let c = contrast_corpus(30, 0);
    let domains = vec![DomainData { name: "contrast".into(), schema: c.schema, store: c.store, test: c.queries }];
    let embedders = vec![("hashed-64".to_string(), hashed_embedder(64, 0))];
    // Echoes the nearest example's answer: F1 measures retrieval quality alone.
    let base = PipelineConfig {
        generator: GeneratorSpec::mock(Backend::MockEchoNearest),
        store_words: WordFilter::EntityOnly,
        index: IndexSpec::flat(),
        ..Default::default()
    };
    let builder = PromptBuilder::default();
    let inputs = AblationInputs { domains: &domains, embedders: &embedders, base: &base, builder: &builder, eval: EvalOptions::default() };

    let modes = AblationGrid {
        name: "mode".into(),
        layout: TableLayout::Single,
        modes: vec![RetrievalMode::WordLevel, RetrievalMode::SentenceLevel],
        ..Default::default()
    };
    print!("{}", run_ablation(&modes, &inputs)?.to_table());

    let ks = AblationGrid { name: "k".into(), layout: TableLayout::KSweep, ks: vec![1, 3, 5], ..Default::default() };
    print!("\n{}", run_ablation(&ks, &inputs)?.to_table());

    let index = AblationGrid {
        name: "index".into(),
        layout: TableLayout::Index,
        index_kinds: vec![IndexKind::Flat, IndexKind::Ivf],
        ..Default::default()
    };
    print!("\n{}", run_ablation(&index, &inputs)?.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
