// The full command chain on a synthetic domain: synth, ingest, index, predict, evaluate.
//
// Same steps as
//
// ```text
// ragner synth --out data --domain music
// ragner ingest -c data/music/ragner.toml
// ragner index -c data/music/ragner.toml
// ragner predict -c data/music/ragner.toml
// ragner evaluate -c data/music/ragner.toml
// ```

use ragner::commands::{cmd_evaluate, cmd_index, cmd_ingest, cmd_predict, cmd_synth};
use ragner::config::RunConfig;
use ragner::synth::Domain;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    cmd_synth(dir.path(), &[Domain::Music], 0, 64)?;
    let cfg = RunConfig::load(&dir.path().join("music/ragner.toml"))?;
    for out in [cmd_ingest(&cfg)?, cmd_index(&cfg)?, cmd_predict(&cfg, None)?] {
        println!("{}", out.stdout);
    }
    println!("{}", cmd_evaluate(&cfg, None, None)?.stdout);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
