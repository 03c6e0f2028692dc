//! The `ragner` subcommands.
//!
//! Artifacts live under the configured `work_dir` and `output_dir`:
//!
//! ```text
//! work_dir/corpus/{train,dev,test}.jsonl   ingest
//! work_dir/schema.json                     ingest
//! work_dir/index/store.jsonl               index
//! work_dir/index/{words,sentences}.rnix    index
//! work_dir/manifests/<command>.json        every command
//! output_dir/retrieval.jsonl               retrieve --output
//! output_dir/finetune.jsonl                augment
//! output_dir/predictions.jsonl             predict
//! output_dir/predictions.timings.jsonl     predict (wall-clock, not hashed)
//! output_dir/report.{json,txt}             evaluate
//! output_dir/ablation-<name>.{json,txt}    ablate
//! ```
//!
//! A manifest records the config fingerprint, the seed and the SHA-256 of every input and
//! output. Downstream commands re-hash the upstream outputs before using them.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::augment::{build_finetune_dataset, AugmentError};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{gold_output, parse_bio, renumber, split_store_finetune, CorpusError, EntitySchema, LabeledSentence};
use crate::embedder::{EmbedError, Embedder, EmbedderSpec};
use crate::evaluation::ablation::{run_ablation, AblationError, AblationGrid, AblationInputs, DomainData};
use crate::evaluation::{score, EvalError, PredictionRecord};
use crate::generation::{Backend, GenerationError, Generator};
use crate::io::{self, read_jsonl, sha256_file, write_jsonl, write_string, IoError};
use crate::pipeline::{Pipeline, PipelineError};
use crate::promptkit::{PromptBuilder, Template};
use crate::retriever::{ExampleStore, RetrievalMode, RetrieveError, RetrievedExample};
use crate::synth::{generate_domain, write_domain, Domain};
use crate::vector_index::{self, IndexError};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },
    #[error("artifact {path} changed since it was produced (expected sha256 {expected}, found {found})")]
    StaleArtifact {
        path: String,
        expected: String,
        found: String,
    },
    #[error("index does not match the embedder: {0}")]
    IndexMismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ablation(#[from] AblationError),
}

impl CommandError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config-error",
            Self::MissingArtifact { .. } => "missing-artifact",
            Self::StaleArtifact { .. } => "stale-artifact",
            Self::IndexMismatch(_) => "index-mismatch",
            Self::Usage(_) => "usage",
            Self::Io(_) => "io",
            Self::Corpus(_) => "corpus",
            Self::Embed(_) => "embed",
            Self::Index(_) => "index",
            Self::Retrieve(_) => "retrieve",
            Self::Augment(_) => "augment",
            Self::Generation(_) => "generation",
            Self::Pipeline(_) => "pipeline",
            Self::Eval(_) => "evaluation",
            Self::Ablation(_) => "ablation",
        }
    }

    /// Machine-readable report, one line of JSON.
    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}}).to_string()
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    /// Printed to stdout by the bin.
    pub stdout: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn manifest_path(cfg: &RunConfig, command: &str) -> PathBuf {
    cfg.paths.work_dir.join("manifests").join(format!("{command}.json"))
}

fn hash_all(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CommandError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

fn write_manifest(cfg: &RunConfig, command: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf, CommandError> {
    let m = Manifest {
        command: command.into(),
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        inputs: hash_all(inputs)?,
        outputs: hash_all(outputs)?,
    };
    let path = manifest_path(cfg, command);
    write_string(&path, &(serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"))?;
    Ok(path)
}

/// Loads `command`'s manifest and checks every listed output still has its recorded hash.
pub fn verify_upstream(cfg: &RunConfig, command: &str) -> Result<Manifest, CommandError> {
    let path = manifest_path(cfg, command);
    if !path.exists() {
        return Err(CommandError::MissingArtifact {
            path: path.display().to_string(),
            hint: format!("run `ragner {command}` first"),
        });
    }
    let m: Manifest = serde_json::from_str(&io::read_to_string(&path)?).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))?;
    for (p, expected) in &m.outputs {
        let found = if Path::new(p).exists() {
            sha256_file(Path::new(p))?
        } else {
            return Err(CommandError::MissingArtifact {
                path: p.clone(),
                hint: format!("rerun `ragner {command}`"),
            });
        };
        if &found != expected {
            return Err(CommandError::StaleArtifact {
                path: p.clone(),
                expected: expected.clone(),
                found,
            });
        }
    }
    Ok(m)
}

fn upstream_outputs(m: &Manifest) -> Vec<PathBuf> {
    m.outputs.keys().map(PathBuf::from).collect()
}

fn split_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.paths.work_dir.join("corpus").join(format!("{split}.jsonl"))
}

fn ingested_schema_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("schema.json")
}

fn index_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("index")
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<LabeledSentence>, CommandError> {
    Ok(read_jsonl(&split_path(cfg, split))?)
}

pub fn load_ingested_schema(cfg: &RunConfig) -> Result<EntitySchema, CommandError> {
    let text = io::read_to_string(&ingested_schema_path(cfg))?;
    Ok(crate::corpus::load_schema(&text)?)
}

fn store_sentences(cfg: &RunConfig) -> Result<Vec<LabeledSentence>, CommandError> {
    let mut out = Vec::new();
    for split in &cfg.store.splits {
        out.extend(load_split(cfg, split)?);
    }
    Ok(out)
}

fn builder(cfg: &RunConfig) -> PromptBuilder {
    PromptBuilder::new(Template::default(), cfg.pipeline.example_order)
}

/// Parses a BIO file, renumbers from `start` and canonicalizes span types.
pub fn read_bio_file(path: &Path, schema: &EntitySchema, start: u64) -> Result<(Vec<LabeledSentence>, usize), CommandError> {
    let doc = parse_bio(&io::read_to_string(path)?)?;
    let mut sentences = doc.sentences;
    renumber(&mut sentences, start);
    schema.canonicalize(&mut sentences)?;
    Ok((sentences, doc.dangling_inside))
}

/// Sentences from `.jsonl` (labeled sentences) or BIO text.
fn read_sentences(path: &Path, schema: &EntitySchema) -> Result<Vec<LabeledSentence>, CommandError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut s: Vec<LabeledSentence> = read_jsonl(path)?;
        schema.canonicalize(&mut s)?;
        Ok(s)
    } else {
        Ok(read_bio_file(path, schema, 0)?.0)
    }
}

/// Parses the corpus splits and schema into `work_dir`. Sentence ids run on across splits.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let schema = cfg.load_schema()?;
    let mut inputs = vec![cfg.paths.schema.clone()];
    let mut outputs = Vec::new();
    let mut counts = BTreeMap::new();
    let mut next_id = 0;
    let mut dangling = 0;
    for split in SPLITS {
        let src = cfg.paths.corpus_dir.join(format!("{split}.txt"));
        let sentences = if src.exists() {
            let (s, d) = read_bio_file(&src, &schema, next_id)?;
            inputs.push(src);
            dangling += d;
            s
        } else if split == "dev" {
            Vec::new()
        } else {
            return Err(CommandError::MissingArtifact {
                path: src.display().to_string(),
                hint: "the corpus directory needs train.txt and test.txt".into(),
            });
        };
        next_id += sentences.len() as u64;
        counts.insert(split, sentences.len());
        let dst = split_path(cfg, split);
        write_jsonl(&dst, &sentences)?;
        outputs.push(dst);
    }
    let schema_out = ingested_schema_path(cfg);
    write_string(&schema_out, &(serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"))?;
    outputs.push(schema_out);
    let manifest = write_manifest(cfg, "ingest", &inputs, &outputs)?;
    outputs.push(manifest);
    Ok(CommandOutput {
        stdout: json!({"sentences": counts, "entity_types": schema.len(), "dangling_inside": dangling}).to_string(),
        artifacts: outputs,
    })
}

/// Embeds the store splits and persists the word and sentence indexes.
pub fn cmd_index(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let up = verify_upstream(cfg, "ingest")?;
    let sentences = store_sentences(cfg)?;
    let embedder = Embedder::from_spec(cfg.embedder.clone())?;
    let store = ExampleStore::build(sentences, &embedder, cfg.pipeline.store_words, &cfg.pipeline.index)?;
    let dir = index_dir(cfg);
    let store_path = dir.join("store.jsonl");
    write_jsonl(&store_path, store.sentences())?;
    let mut outputs = vec![store_path];
    for (name, idx) in [("words.rnix", store.word_index()), ("sentences.rnix", store.sentence_index())] {
        let path = dir.join(name);
        match idx {
            Some(idx) => {
                vector_index::persist(idx, &path)?;
                outputs.push(path);
            }
            None if path.exists() => std::fs::remove_file(&path).map_err(|e| IoError::Io {
                path: path.display().to_string(),
                source: e,
            })?,
            None => {}
        }
    }
    let manifest = write_manifest(cfg, "index", &upstream_outputs(&up), &outputs)?;
    let summary = json!({
        "store_sentences": store.len(),
        "word_records": store.word_index().map_or(0, |i| i.len()),
        "sentence_records": store.sentence_index().map_or(0, |i| i.len()),
        "model_name": embedder.model_name(),
        "dimension": embedder.dimension(),
    });
    outputs.push(manifest);
    Ok(CommandOutput {
        stdout: summary.to_string(),
        artifacts: outputs,
    })
}

/// Loads the persisted store and checks it against `embedder`.
pub fn load_store(cfg: &RunConfig, embedder: &Embedder) -> Result<(ExampleStore, Manifest), CommandError> {
    let up = verify_upstream(cfg, "index")?;
    let dir = index_dir(cfg);
    let sentences: Vec<LabeledSentence> = read_jsonl(&dir.join("store.jsonl"))?;
    let load = |name: &str| -> Result<Option<vector_index::VectorIndex>, CommandError> {
        let path = dir.join(name);
        if !up.outputs.contains_key(&path.display().to_string()) {
            return Ok(None);
        }
        let idx = vector_index::load(&path)?;
        if idx.dim() != embedder.dimension() || idx.store().model_name() != embedder.model_name() {
            return Err(CommandError::IndexMismatch(format!(
                "{} holds {}-d vectors from {:?}, the embedder is {}-d {:?}",
                path.display(),
                idx.dim(),
                idx.store().model_name(),
                embedder.dimension(),
                embedder.model_name()
            )));
        }
        Ok(Some(idx))
    };
    let words = load("words.rnix")?;
    let sents = load("sentences.rnix")?;
    Ok((ExampleStore::from_parts(sentences, words, sents), up))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalLine {
    pub query_text: String,
    pub examples: Vec<RetrievedExample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Retrieves examples for free-text queries (`texts`) or a query file (one sentence per
/// line, or `.jsonl` labeled sentences). Lines go to `output`, or to stdout.
pub fn cmd_retrieve(
    cfg: &RunConfig,
    texts: &[String],
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<CommandOutput, CommandError> {
    let embedder = Embedder::from_spec(cfg.embedder.clone())?;
    let (store, up) = load_store(cfg, &embedder)?;
    let mut queries: Vec<LabeledSentence> = texts.iter().map(|t| LabeledSentence::from_text(0, t)).collect();
    let mut inputs = upstream_outputs(&up);
    if let Some(path) = input {
        if path.extension().is_some_and(|e| e == "jsonl") {
            queries.extend(read_jsonl::<LabeledSentence>(path)?);
        } else {
            let text = io::read_to_string(path)?;
            queries.extend(text.lines().filter(|l| !l.trim().is_empty()).map(|l| LabeledSentence::from_text(0, l)));
        }
        inputs.push(path.to_path_buf());
    }
    if queries.is_empty() {
        return Err(CommandError::Usage("retrieve needs --text or --input".into()));
    }
    let lines: Vec<RetrievalLine> = queries
        .iter()
        .map(|q| match store.retrieve(q, None, &embedder, &cfg.pipeline.retriever) {
            Ok(examples) => RetrievalLine {
                query_text: q.text(),
                examples,
                error: None,
            },
            Err(e) => RetrievalLine {
                query_text: q.text(),
                examples: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    match output {
        Some(path) => {
            write_jsonl(path, &lines)?;
            let manifest = write_manifest(cfg, "retrieve", &inputs, &[path.to_path_buf()])?;
            Ok(CommandOutput {
                stdout: json!({"queries": lines.len(), "output": path.display().to_string()}).to_string(),
                artifacts: vec![path.to_path_buf(), manifest],
            })
        }
        None => Ok(CommandOutput {
            stdout: io::to_jsonl_string(&lines).trim_end().to_string(),
            artifacts: Vec::new(),
        }),
    }
}

/// Splits the training split into store and finetune parts and writes the finetune JSONL.
pub fn cmd_augment(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let up = verify_upstream(cfg, "ingest")?;
    let schema = load_ingested_schema(cfg)?;
    let train = load_split(cfg, "train")?;
    let split = split_store_finetune(&train, cfg.store.finetune_store_size, cfg.seed)?;
    let embedder = Embedder::from_spec(cfg.embedder.clone())?;
    let store = ExampleStore::build(split.store, &embedder, cfg.pipeline.store_words, &cfg.pipeline.index)?;
    let data = build_finetune_dataset(
        &split.finetune,
        &schema,
        &store,
        &embedder,
        &cfg.pipeline.retriever,
        &builder(cfg),
        &cfg.augment,
    )?;
    let out = cfg.paths.output_dir.join("finetune.jsonl");
    let skipped = cfg.paths.output_dir.join("finetune.skipped.jsonl");
    write_jsonl(&out, &data.records)?;
    write_jsonl(&skipped, &data.skipped)?;
    let manifest = write_manifest(cfg, "augment", &upstream_outputs(&up), &[out.clone(), skipped.clone()])?;
    Ok(CommandOutput {
        stdout: json!({
            "store": store.len(),
            "finetune_sentences": split.finetune.len(),
            "records": data.records.len(),
            "skipped": data.skipped.len(),
        })
        .to_string(),
        artifacts: vec![out, skipped, manifest],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingLine {
    sentence_id: u64,
    search_latency_s: f64,
    generation_latency_s: f64,
}

/// Runs the pipeline over `input` (default: the ingested test split).
pub fn cmd_predict(cfg: &RunConfig, input: Option<&Path>) -> Result<CommandOutput, CommandError> {
    let embedder = Embedder::from_spec(cfg.embedder.clone())?;
    let (store, up) = load_store(cfg, &embedder)?;
    let schema = load_ingested_schema(cfg)?;
    let mut inputs = upstream_outputs(&up);
    let queries = match input {
        Some(p) => {
            inputs.push(p.to_path_buf());
            read_sentences(p, &schema)?
        }
        None => {
            verify_upstream(cfg, "ingest")?;
            let p = split_path(cfg, "test");
            inputs.push(p);
            load_split(cfg, "test")?
        }
    };
    let generator = Generator::new(cfg.pipeline.generator.clone())?;
    let pipeline = Pipeline {
        store: &store,
        embedder: &embedder,
        schema: &schema,
        builder: builder(cfg),
        generator: &generator,
        config: &cfg.pipeline,
    };
    let run = pipeline.predict(&queries)?;

    let dir = &cfg.paths.output_dir;
    let preds = dir.join("predictions.jsonl");
    let failures_path = dir.join("predictions.failures.json");
    let timings = dir.join("predictions.timings.jsonl");
    write_jsonl(&preds, &run.predictions)?;
    let failures: Vec<_> = run
        .predictions
        .iter()
        .filter_map(|p| p.error.as_ref().map(|e| json!({"sentence_id": p.record.sentence_id, "error": e})))
        .collect();
    let failure_doc = json!({"total": run.predictions.len(), "failed": failures.len(), "failures": failures});
    write_string(&failures_path, &(serde_json::to_string_pretty(&failure_doc).expect("json") + "\n"))?;
    let timing_lines: Vec<TimingLine> = run
        .predictions
        .iter()
        .map(|p| TimingLine {
            sentence_id: p.record.sentence_id,
            search_latency_s: p.search_latency_s,
            generation_latency_s: p.latency_s,
        })
        .collect();
    write_jsonl(&timings, &timing_lines)?;
    let manifest = write_manifest(cfg, "predict", &inputs, &[preds.clone(), failures_path.clone()])?;
    Ok(CommandOutput {
        stdout: json!({
            "predictions": run.predictions.len(),
            "failed": failures.len(),
            "generation_latency": run.generation_latency,
            "search_latency": run.search_latency,
        })
        .to_string(),
        artifacts: vec![preds, failures_path, timings, manifest],
    })
}

/// Scores predictions. With `gold`, gold outputs (and tokens) come from that file by id.
pub fn cmd_evaluate(cfg: &RunConfig, predictions: Option<&Path>, gold: Option<&Path>) -> Result<CommandOutput, CommandError> {
    let default_preds = cfg.paths.output_dir.join("predictions.jsonl");
    let preds_path = match predictions {
        Some(p) => p.to_path_buf(),
        None => {
            verify_upstream(cfg, "predict")?;
            default_preds
        }
    };
    if !preds_path.exists() {
        return Err(CommandError::MissingArtifact {
            path: preds_path.display().to_string(),
            hint: "run `ragner predict` first".into(),
        });
    }
    let mut records: Vec<PredictionRecord> = read_jsonl(&preds_path)?;
    let mut inputs = vec![preds_path.clone()];
    if let Some(g) = gold {
        let schema = load_ingested_schema(cfg).or_else(|_| cfg.load_schema().map_err(CommandError::from))?;
        let by_id: BTreeMap<u64, LabeledSentence> = read_sentences(g, &schema)?.into_iter().map(|s| (s.id, s)).collect();
        for r in &mut records {
            let s = by_id
                .get(&r.sentence_id)
                .ok_or_else(|| CommandError::Usage(format!("no gold sentence with id {} in {}", r.sentence_id, g.display())))?;
            r.gold = gold_output(s, &schema)?;
            r.tokens = s.tokens.clone();
        }
        inputs.push(g.to_path_buf());
    }
    let report = score(&records, cfg.eval)?;
    let model_name = cfg
        .pipeline
        .generator
        .model
        .clone()
        .unwrap_or_else(|| cfg.pipeline.generator.backend.tag().to_string());
    let doc = json!({
        "micro": report.micro,
        "per_type": report.per_type,
        "n_sentences": report.n_sentences,
        "n_parse_failures": report.n_parse_failures,
        "config_fingerprint": cfg.fingerprint(),
        "seeds": {"seed": cfg.seed, "index": cfg.pipeline.index.seed, "augment": cfg.augment.seed},
        "template_id": builder(cfg).template_id(),
        "model_name": model_name,
        "embedder_model": cfg.embedder.model_name,
        "config": cfg,
    });
    let json_path = cfg.paths.output_dir.join("report.json");
    let txt_path = cfg.paths.output_dir.join("report.txt");
    let table = report.to_table();
    write_string(&json_path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    write_string(&txt_path, &table)?;
    let manifest = write_manifest(cfg, "evaluate", &inputs, &[json_path.clone(), txt_path.clone()])?;
    Ok(CommandOutput {
        stdout: table.trim_end().to_string(),
        artifacts: vec![json_path, txt_path, manifest],
    })
}

/// A grid file: the grid itself plus optional extra domains and embedders.
///
/// ```toml
/// [grid]
/// name = "k-sweep"
/// layout = "k-sweep"
/// ks = [1, 3, 5, 10, 20, 30]
///
/// [[domains]]
/// name = "music"
/// config = "music.toml"
///
/// [embedders.hashed-64]
/// provider = "hashed"
/// dimension = 64
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub grid: AblationGrid,
    /// Ingested domains to evaluate. Empty means the run config's own corpus.
    #[serde(default)]
    pub domains: Vec<DomainSource>,
    /// Embedders by tag. Empty means the run config's embedder, tagged by model name.
    #[serde(default)]
    pub embedders: BTreeMap<String, EmbedderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSource {
    pub name: String,
    /// Run config of the domain, relative to the grid file.
    pub config: PathBuf,
}

fn domain_data(name: &str, cfg: &RunConfig) -> Result<(DomainData, Vec<PathBuf>), CommandError> {
    let up = verify_upstream(cfg, "ingest")?;
    Ok((
        DomainData {
            name: name.to_string(),
            schema: load_ingested_schema(cfg)?,
            store: store_sentences(cfg)?,
            test: load_split(cfg, "test")?,
        },
        upstream_outputs(&up),
    ))
}

/// Runs every cell of the grid in `grid_path` and writes the table and JSON.
pub fn cmd_ablate(cfg: &RunConfig, grid_path: &Path) -> Result<CommandOutput, CommandError> {
    let text = io::read_to_string(grid_path)?;
    let file: GridFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: grid_path.display().to_string(),
        message: e.to_string(),
    })?;
    let base_dir = grid_path.parent().unwrap_or(Path::new("."));
    let mut inputs = vec![grid_path.to_path_buf()];
    let mut domains = Vec::new();
    if file.domains.is_empty() {
        let name = cfg
            .paths
            .corpus_dir
            .file_name()
            .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned());
        let (d, i) = domain_data(&name, cfg)?;
        domains.push(d);
        inputs.extend(i);
    } else {
        for src in &file.domains {
            let path = if src.config.is_relative() { base_dir.join(&src.config) } else { src.config.clone() };
            let (d, i) = domain_data(&src.name, &RunConfig::load(&path)?)?;
            domains.push(d);
            inputs.extend(i);
            inputs.push(path);
        }
    }
    let specs: Vec<(String, EmbedderSpec)> = if file.embedders.is_empty() {
        vec![(cfg.embedder.model_name.clone(), cfg.embedder.clone())]
    } else {
        file.embedders.clone().into_iter().collect()
    };
    let embedders = specs
        .into_iter()
        .map(|(tag, spec)| Ok((tag, Embedder::from_spec(spec)?)))
        .collect::<Result<Vec<_>, CommandError>>()?;
    let builder = builder(cfg);
    let result = run_ablation(
        &file.grid,
        &AblationInputs {
            domains: &domains,
            embedders: &embedders,
            base: &cfg.pipeline,
            builder: &builder,
            eval: cfg.eval,
        },
    )?;
    let table = result.to_table();
    let doc = json!({
        "grid": result.grid,
        "cells": result.cells,
        "config_fingerprint": cfg.fingerprint(),
        "seeds": {"seed": cfg.seed, "index": cfg.pipeline.index.seed, "augment": cfg.augment.seed},
        "template_id": builder.template_id(),
        "config": cfg,
    });
    let stem = format!("ablation-{}", file.grid.name);
    let json_path = cfg.paths.output_dir.join(format!("{stem}.json"));
    let txt_path = cfg.paths.output_dir.join(format!("{stem}.txt"));
    write_string(&json_path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    write_string(&txt_path, &table)?;
    let manifest = write_manifest(cfg, "ablate", &inputs, &[])?;
    Ok(CommandOutput {
        stdout: table.trim_end().to_string(),
        artifacts: vec![json_path, txt_path, manifest],
    })
}

/// A ready-to-run config for a synthetic domain under `dir`.
pub fn synth_config(domain: Domain, dim: usize) -> String {
    format!(
        r#"seed = 0

[paths]
corpus_dir = "."
schema = "schema.json"
work_dir = "work"
output_dir = "out"

[embedder]
provider = "hashed"
model_name = "hashed-{dim}"
dimension = {dim}

[store]
finetune_store_size = {store}

[pipeline.retriever]
k = 5
mode = "word-level"

[pipeline.generator]
backend = "mock-gold"
# {name}: {train}/{dev}/{test} sentences
"#,
        name = domain.name(),
        store = domain.sizes().train.min(500) / if domain.sizes().train > 1000 { 1 } else { 2 },
        train = domain.sizes().train,
        dev = domain.sizes().dev,
        test = domain.sizes().test,
    )
}

/// Writes synthetic BIO corpora plus a `ragner.toml` per domain.
pub fn cmd_synth(out: &Path, domains: &[Domain], seed: u64, dim: usize) -> Result<CommandOutput, CommandError> {
    let mut artifacts = Vec::new();
    for &d in domains {
        write_domain(out, &generate_domain(d, seed))?;
        let cfg = out.join(d.name()).join("ragner.toml");
        write_string(&cfg, &synth_config(d, dim))?;
        artifacts.push(cfg);
    }
    Ok(CommandOutput {
        stdout: json!({"domains": domains.iter().map(|d| d.name()).collect::<Vec<_>>(), "root": out.display().to_string()}).to_string(),
        artifacts,
    })
}

#[derive(Debug, Parser)]
#[command(name = "ragner", version, about = "Retrieval-augmented few-shot NER")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of in-prompt examples.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<RetrievalMode>,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Build the store from the train split only.
    #[arg(long)]
    pub train_only: bool,
}

fn parse_mode(s: &str) -> Result<RetrievalMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected word-level or sentence-level, got {s:?}"))
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected remote-completion, mock-gold or mock-echo-nearest, got {s:?}"))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CommandError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.k {
            cfg.pipeline.retriever.k = k;
        }
        if let Some(m) = self.mode {
            cfg.pipeline.retriever.mode = m;
        }
        if let Some(b) = self.backend {
            cfg.pipeline.generator.backend = b;
        }
        if let Some(p) = self.parallelism {
            cfg.pipeline.generator.parallelism = p;
        }
        if self.train_only {
            cfg.store.splits = vec!["train".into()];
        }
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the BIO corpus and schema.
    Ingest(ConfigArgs),
    /// Embed the store and build the indexes.
    Index(ConfigArgs),
    /// Show the examples retrieved for queries.
    Retrieve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        text: Vec<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the regularized finetuning JSONL.
    Augment(ConfigArgs),
    /// Predict entities for the test split or an input file.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score predictions.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Run a configuration grid.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Write synthetic corpora with ready configs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Domain names; default all six.
        #[arg(long)]
        domain: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        dim: usize,
    },
}

pub fn run(command: Command) -> Result<CommandOutput, CommandError> {
    match command {
        Command::Ingest(c) => cmd_ingest(&c.resolve()?),
        Command::Index(c) => cmd_index(&c.resolve()?),
        Command::Retrieve {
            config,
            text,
            input,
            output,
        } => cmd_retrieve(&config.resolve()?, &text, input.as_deref(), output.as_deref()),
        Command::Augment(c) => cmd_augment(&c.resolve()?),
        Command::Predict { config, input } => cmd_predict(&config.resolve()?, input.as_deref()),
        Command::Evaluate {
            config,
            predictions,
            gold,
        } => cmd_evaluate(&config.resolve()?, predictions.as_deref(), gold.as_deref()),
        Command::Ablate { config, grid } => cmd_ablate(&config.resolve()?, &grid),
        Command::Synth { out, domain, seed, dim } => {
            let domains = if domain.is_empty() {
                Domain::ALL.to_vec()
            } else {
                domain
                    .iter()
                    .map(|n| Domain::from_name(n).ok_or_else(|| CommandError::Usage(format!("unknown domain {n:?}"))))
                    .collect::<Result<_, _>>()?
            };
            cmd_synth(&out, &domains, seed, dim)
        }
    }
}

/// Parses `args`, runs the command, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(out) => {
            if !out.stdout.is_empty() {
                // A closed pipe (e.g. `| head`) is not a failure.
                let _ = writeln!(std::io::stdout(), "{}", out.stdout);
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_json_is_machine_readable() {
        let e = CommandError::MissingArtifact {
            path: "w/manifests/index.json".into(),
            hint: "run `ragner index` first".into(),
        };
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "missing-artifact");
        assert!(v["error"]["message"].as_str().unwrap().contains("ragner index"));
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn grid_file_parses() {
        let f: GridFile = toml::from_str(
            r#"
[grid]
name = "k"
layout = "k-sweep"
ks = [1, 3]
modes = ["word-level", "sentence-level"]
index_kinds = ["flat"]

[[grid.variants]]
label = "dropout"
[grid.variants.generator]
backend = "remote-completion"
endpoint = "http://localhost:1/v1"

[[domains]]
name = "music"
config = "m.toml"

[embedders.h]
provider = "hashed"
dimension = 8
"#,
        )
        .unwrap();
        assert_eq!(f.grid.ks, [1, 3]);
        assert_eq!(f.grid.variants[0].generator.as_ref().unwrap().backend, Backend::RemoteCompletion);
        assert_eq!(f.domains[0].config, Path::new("m.toml"));
        assert_eq!(f.embedders["h"].dimension, 8);
    }

    #[test]
    fn synth_config_is_a_valid_run_config() {
        let cfg = RunConfig::from_toml(&synth_config(Domain::Music, 32), Path::new("/d")).unwrap();
        assert_eq!(cfg.paths.corpus_dir, Path::new("/d/."));
        assert_eq!(cfg.embedder.dimension, 32);
    }

    #[test]
    fn cli_parses_overrides() {
        let cli = Cli::try_parse_from(["ragner", "predict", "-c", "x.toml", "--k", "3", "--mode", "sentence-level", "--train-only"]).unwrap();
        let Command::Predict { config, .. } = cli.command else { panic!() };
        assert_eq!(config.k, Some(3));
        assert_eq!(config.mode, Some(RetrievalMode::SentenceLevel));
        assert!(config.train_only);
        assert!(Cli::try_parse_from(["ragner", "predict", "-c", "x", "--mode", "phrase"]).is_err());
    }
}
