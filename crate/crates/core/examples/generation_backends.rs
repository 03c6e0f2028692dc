// Generator backends: deterministic mocks and an HTTP completion endpoint.

use ragner::corpus::{EntitySchema, NerOutput};
use ragner::generation::{Backend, GenerationRequest, Generator, GeneratorSpec, LatencySummary};
use ragner::promptkit::PromptBuilder;
use ragner::stub_server::StubServer;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let schema = EntitySchema::from_pairs(&[("person", "A named individual.")])?;
    let prompt = PromptBuilder::default().build(&schema, &[], "Ada Lovelace wrote notes")?;
    let mut gold = NerOutput::empty(&schema.names());
    gold.get_mut("person").unwrap().push("Ada Lovelace".into());

    let mock = Generator::new(GeneratorSpec::mock(Backend::MockGold))?;
    let r = mock.generate(GenerationRequest { prompt: &prompt, gold: Some(&gold) })?;
    println!("mock-gold: {}", r.completion_text);

    // A local stand-in for a finetuned model behind a completion endpoint.
    let server = StubServer::start(|_path, body| {
        let prompt = body["prompt"].as_str().unwrap_or_default();
        let who = if prompt.contains("Ada") { "Ada Lovelace" } else { "" };
        (200, serde_json::json!({"text": format!("{{person:[{who}]}}")}).to_string())
    })?;
    let remote = Generator::new(GeneratorSpec { parallelism: 3, ..GeneratorSpec::remote(&server.url("/v1/completions")) })?;
    let reqs = vec![GenerationRequest { prompt: &prompt, gold: None }; 6];
    let results = remote.generate_batch(&reqs);
    println!("remote: {}", results[0].as_ref().map_err(|e| e.to_string())?.completion_text);
    let lat = LatencySummary::from_results(&results);
    println!("{} calls, median {:.4}s, peak in flight {}", lat.count, lat.median_s, remote.peak_in_flight());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
