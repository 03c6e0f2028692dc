mod corpus_bio {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/corpus_bio.rs"));
}

#[test]
fn corpus_bio_example_runs() {
    corpus_bio::run_example().expect("corpus_bio example should run");
}

mod word_embeddings {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/word_embeddings.rs"));
}

#[test]
fn word_embeddings_example_runs() {
    word_embeddings::run_example().expect("word_embeddings example should run");
}

mod vector_search {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/vector_search.rs"));
}

#[test]
fn vector_search_example_runs() {
    vector_search::run_example().expect("vector_search example should run");
}

mod word_level_retrieval {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/word_level_retrieval.rs"));
}

#[test]
fn word_level_retrieval_example_runs() {
    word_level_retrieval::run_example().expect("word_level_retrieval example should run");
}

mod prompt_and_parse {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/prompt_and_parse.rs"));
}

#[test]
fn prompt_and_parse_example_runs() {
    prompt_and_parse::run_example().expect("prompt_and_parse example should run");
}

mod finetune_dataset {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/finetune_dataset.rs"));
}

#[test]
fn finetune_dataset_example_runs() {
    finetune_dataset::run_example().expect("finetune_dataset example should run");
}

mod generation_backends {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/generation_backends.rs"));
}

#[test]
fn generation_backends_example_runs() {
    generation_backends::run_example().expect("generation_backends example should run");
}

mod evaluate_f1 {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/evaluate_f1.rs"));
}

#[test]
fn evaluate_f1_example_runs() {
    evaluate_f1::run_example().expect("evaluate_f1 example should run");
}

mod ablation_grid {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ablation_grid.rs"));
}

#[test]
fn ablation_grid_example_runs() {
    ablation_grid::run_example().expect("ablation_grid example should run");
}

mod end_to_end {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/end_to_end.rs"));
}

#[test]
fn end_to_end_example_runs() {
    end_to_end::run_example().expect("end_to_end example should run");
}
