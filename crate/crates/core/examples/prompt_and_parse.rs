// Render a few-shot prompt and parse model completions back into entity lists.

use ragner::corpus::{gold_output, EntitySchema, LabeledSentence};
use ragner::promptkit::{parse_output, Grounding, PromptBuilder};

fn sentence(id: u64, text: &str, spans: &[(&str, usize, usize)]) -> LabeledSentence {
    LabeledSentence::new(id, text.split(' ').map(String::from).collect(), spans)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let schema = EntitySchema::from_pairs(&[
        ("politician", "A person active in politics."),
        ("country", "A sovereign state."),
    ])?;
    let a = sentence(0, "Obama met Trudeau in Canada", &[("politician", 0, 1), ("politician", 2, 3), ("country", 4, 5)]);
    let b = sentence(1, "Merkel left Germany", &[("politician", 0, 1), ("country", 2, 3)]);
    // Retrieval order: most similar first. The default template puts it last.
    let examples = vec![(b.clone(), gold_output(&b, &schema)?), (a.clone(), gold_output(&a, &schema)?)];
    let query = "Macron visited Italy";
    let prompt = PromptBuilder::default().build(&schema, &examples, query)?;
    println!("{}\n", prompt.rendered);

    for completion in [
        "{politician:[Macron], country:[Italy]}",
        "Sure! Here it is: {\"politician\": [\"Macron\"], \"country\": [\"Italy\", \"France\"]} Hope that helps.",
        "I could not find any entities.",
    ] {
        match parse_output(completion, &schema, query, Grounding::Strict) {
            Ok(p) => println!("{completion:?}\n  -> {} (dropped {})", serde_json::to_string(&p.output)?, p.dropped_hallucinations),
            Err(e) => println!("{completion:?}\n  -> error: {e}"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
