// Parse a BIO corpus against a schema, then split it into store and finetune parts.

use ragner::corpus::{gold_output, load_schema, parse_bio, split_store_finetune};

const SCHEMA: &str = r#"{"types": [
  {"name": "person", "definition": "A named individual.", "aliases": ["per"]},
  {"name": "location", "definition": "A named place.", "aliases": ["loc"]}
]}"#;

const BIO: &str = "\
-DOCSTART- O

Obama B-PER
visited O
Paris B-LOC
. O

Angela B-PER
Merkel I-PER
flew O
to O
New B-LOC
York I-LOC
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let schema = load_schema(SCHEMA)?;
    let doc = parse_bio(BIO)?;
    let mut sentences = doc.sentences;
    schema.canonicalize(&mut sentences)?;

    for s in &sentences {
        let gold = gold_output(s, &schema)?;
        println!("{:<32} {}", s.text(), serde_json::to_string(&gold)?);
    }
    assert_eq!(sentences[1].spans[1].surface, "New York");

    let split = split_store_finetune(&sentences, 1, 42)?;
    println!("store {} / finetune {}", split.store.len(), split.finetune.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
