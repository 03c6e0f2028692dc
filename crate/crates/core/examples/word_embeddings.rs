// Contextual word vectors from subword pieces, with stop words removed.
//
// The hashed encoder stands in for a real model: long words are split into pieces whose
// vectors are averaged back into one vector per word.

use ragner::corpus::LabeledSentence;
use ragner::embedder::WordFilter;
use ragner::synth::hashed_embedder;
use ragner::vector_index::dot;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let embedder = hashed_embedder(64, 0);
    let a = LabeledSentence::new(0, "I want to buy a 13-inch macbook from the store".split(' ').map(String::from).collect(), &[("product", 6, 7)]);
    let b = LabeledSentence::new(1, "Show me a 15-inch macbook".split(' ').map(String::from).collect(), &[("product", 4, 5)]);

    let all = embedder.embed_words(&a, WordFilter::All)?;
    let words: Vec<&str> = all.iter().map(|w| w.word.as_str()).collect();
    println!("non-stop-words: {words:?}");

    let entity = embedder.embed_words(&a, WordFilter::EntityOnly)?;
    println!("entity words:   {:?}", entity.iter().map(|w| &w.word).collect::<Vec<_>>());

    let mac_a = &entity[0].vector;
    let mac_b = &embedder.embed_words(&b, WordFilter::EntityOnly)?[0].vector;
    println!("cos(macbook in a, macbook in b) = {:.4}", dot(mac_a, mac_b));

    let sa = embedder.embed_sentence(&a)?;
    let sb = embedder.embed_sentence(&b)?;
    println!("cos(sentence a, sentence b)     = {:.4}", dot(&sa.vector, &sb.vector));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
