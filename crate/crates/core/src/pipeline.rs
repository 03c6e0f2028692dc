//! Retrieve → prompt → generate → parse, over a batch of query sentences.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{gold_output, CorpusError, EntitySchema, LabeledSentence, NerOutput};
use crate::embedder::{Embedder, WordFilter};
use crate::evaluation::PredictionRecord;
use crate::generation::{prompt_hash, GenerationRequest, Generator, GeneratorSpec, LatencySummary};
use crate::promptkit::{parse_output, ExampleOrder, Grounding, Prompt, PromptBuilder};
use crate::retriever::{ExampleStore, IndexSpec, RetrieveError, RetrievedExample, RetrieverConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub retriever: RetrieverConfig,
    /// Which store words get indexed for word-level retrieval.
    pub store_words: WordFilter,
    pub index: IndexSpec,
    pub example_order: ExampleOrder,
    pub grounding: Grounding,
    pub generator: GeneratorSpec,
    /// Never retrieve a query's own sentence id (for queries drawn from the store).
    pub exclude_self: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retriever: RetrieverConfig::default(),
            store_words: WordFilter::EntityOnly,
            index: IndexSpec::default(),
            example_order: ExampleOrder::AscendingSimilarity,
            grounding: Grounding::Off,
            generator: GeneratorSpec::default(),
            exclude_self: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub sentence_id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(flatten)]
    pub record: PredictionRecord,
    pub prompt_hash: String,
    pub completion: Option<String>,
    pub error: Option<String>,
    pub retrieved: Vec<RetrievedRef>,
    pub dropped_hallucinations: usize,
    /// Excluded from serialized predictions so reruns stay byte-identical.
    #[serde(skip)]
    pub latency_s: f64,
    #[serde(skip)]
    pub search_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    pub predictions: Vec<Prediction>,
    pub generation_latency: LatencySummary,
    pub search_latency: LatencySummary,
}

impl PredictionRun {
    pub fn records(&self) -> Vec<PredictionRecord> {
        self.predictions.iter().map(|p| p.record.clone()).collect()
    }
}

/// Everything needed to answer queries against one store.
#[derive(Debug)]
pub struct Pipeline<'a> {
    pub store: &'a ExampleStore,
    pub embedder: &'a Embedder,
    pub schema: &'a EntitySchema,
    pub builder: PromptBuilder,
    pub generator: &'a Generator,
    pub config: &'a PipelineConfig,
}

impl Pipeline<'_> {
    /// Prompt for one query plus the examples it used and the search time.
    pub fn prompt_for(
        &self,
        query: &LabeledSentence,
    ) -> Result<(Prompt, Vec<RetrievedExample>, f64), PipelineError> {
        let exclude = self.config.exclude_self.then_some(query.id);
        let start = Instant::now();
        let hits = match self.store.retrieve(query, exclude, self.embedder, &self.config.retriever) {
            Ok(h) => h,
            // A query of nothing but stop words still gets a (zero-shot) prompt.
            Err(RetrieveError::EmptyQueryAfterStopwords) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let search = start.elapsed().as_secs_f64();
        let mut examples = Vec::with_capacity(hits.len());
        for h in &hits {
            let s = self.store.sentence(h.sentence_id).expect("hit ids come from the store");
            examples.push((s.clone(), gold_output(s, self.schema)?));
        }
        let prompt = self
            .builder
            .build(self.schema, &examples, &query.text())
            .expect("example outputs follow the schema");
        Ok((prompt, hits, search))
    }

    /// Runs every query. Record-level failures land in `Prediction::error` and score as
    /// all-false-negative; only corpus errors abort.
    pub fn predict(&self, queries: &[LabeledSentence]) -> Result<PredictionRun, PipelineError> {
        let names = self.schema.names();
        let mut golds = Vec::with_capacity(queries.len());
        let mut prompts: Vec<Result<(Prompt, Vec<RetrievedExample>, f64), String>> = Vec::new();
        for q in queries {
            golds.push(gold_output(q, self.schema)?);
            prompts.push(match self.prompt_for(q) {
                Ok(p) => Ok(p),
                Err(PipelineError::Corpus(e)) => return Err(e.into()),
                Err(e) => Err(e.to_string()),
            });
        }

        let ok: Vec<usize> = (0..queries.len()).filter(|&i| prompts[i].is_ok()).collect();
        let reqs: Vec<GenerationRequest<'_>> = ok
            .iter()
            .map(|&i| GenerationRequest {
                prompt: &prompts[i].as_ref().expect("filtered").0,
                gold: Some(&golds[i]),
            })
            .collect();
        let mut generated: Vec<Option<_>> = (0..queries.len()).map(|_| None).collect();
        for (i, r) in ok.iter().zip(self.generator.generate_batch(&reqs)) {
            generated[*i] = Some(r);
        }

        let mut predictions = Vec::with_capacity(queries.len());
        let mut gen_lat = Vec::new();
        let mut search_lat = Vec::new();
        for (i, q) in queries.iter().enumerate() {
            let text = q.text();
            let mut p = Prediction {
                record: PredictionRecord {
                    sentence_id: q.id,
                    gold: golds[i].clone(),
                    predicted: NerOutput::empty(&names),
                    parse_failed: true,
                    tokens: q.tokens.clone(),
                },
                prompt_hash: String::new(),
                completion: None,
                error: None,
                retrieved: Vec::new(),
                dropped_hallucinations: 0,
                latency_s: 0.0,
                search_latency_s: 0.0,
            };
            match &prompts[i] {
                Err(e) => p.error = Some(e.clone()),
                Ok((prompt, hits, search)) => {
                    p.prompt_hash = prompt_hash(&prompt.rendered);
                    p.retrieved = hits
                        .iter()
                        .map(|h| RetrievedRef {
                            sentence_id: h.sentence_id,
                            score: h.score,
                        })
                        .collect();
                    p.search_latency_s = *search;
                    search_lat.push(*search);
                    match generated[i].take().expect("generated for every prompt") {
                        Err(e) => p.error = Some(e.to_string()),
                        Ok(g) => {
                            p.latency_s = g.latency_s;
                            gen_lat.push(g.latency_s);
                            match parse_output(&g.completion_text, self.schema, &text, self.config.grounding) {
                                Ok(parsed) => {
                                    p.record.predicted = parsed.output;
                                    p.record.parse_failed = false;
                                    p.dropped_hallucinations = parsed.dropped_hallucinations;
                                }
                                Err(e) => p.error = Some(e.to_string()),
                            }
                            p.completion = Some(g.completion_text);
                        }
                    }
                }
            }
            predictions.push(p);
        }
        Ok(PredictionRun {
            predictions,
            generation_latency: LatencySummary::from_latencies(&gen_lat),
            search_latency: LatencySummary::from_latencies(&search_lat),
        })
    }
}
