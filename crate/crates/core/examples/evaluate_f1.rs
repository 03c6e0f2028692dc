// Micro-F1 over (type, string) multisets, with a per-type table.

use ragner::corpus::NerOutput;
use ragner::evaluation::{score, EvalOptions, PredictionRecord};

fn out(person: &[&str], location: &[&str]) -> NerOutput {
    let mut o = NerOutput::empty(&["person", "location"]);
    o.get_mut("person").unwrap().extend(person.iter().map(|s| s.to_string()));
    o.get_mut("location").unwrap().extend(location.iter().map(|s| s.to_string()));
    o
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let records = vec![
        PredictionRecord {
            sentence_id: 0,
            gold: out(&["Obama"], &[]),
            predicted: out(&["obama", "Biden"], &[]),
            parse_failed: false,
            tokens: vec![],
        },
        PredictionRecord {
            sentence_id: 1,
            gold: out(&[], &["Paris", "Lyon"]),
            predicted: out(&[], &["Paris"]),
            parse_failed: false,
            tokens: vec![],
        },
        // An unparseable completion scores as all misses.
        PredictionRecord {
            sentence_id: 2,
            gold: out(&["Merkel"], &[]),
            predicted: out(&[], &[]),
            parse_failed: true,
            tokens: vec![],
        },
    ];
    let report = score(&records, EvalOptions::default())?;
    print!("{}", report.to_table());
    println!("micro F1 = {:.2}%", report.f1_percent());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
