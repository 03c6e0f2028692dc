//! Retrieval-augmented few-shot named entity recognition.
//!
//! The crate covers every offline stage of a RAG-style NER system built around an
//! instruction-following LLM:
//!
//! * [`corpus`] parses BIO corpora and entity schemas into [`LabeledSentence`]s and
//!   produces the store/finetune split.
//! * [`embedder`] turns sentences into contextual word vectors (subword vectors averaged
//!   per word) or pooled sentence vectors, served by a remote service or a precomputed file.
//! * [`vector_index`] holds exact (flat) and IVF-Flat cosine indexes with a documented
//!   binary format.
//! * [`retriever`] selects in-prompt examples by word-level pooling or by sentence similarity.
//! * [`promptkit`] renders the four-section prompt and parses dictionary-shaped completions.
//! * [`augment`] produces the regularized finetuning JSONL (entity-type dropout and shuffling).
//! * [`generation`] sends prompts to a completion endpoint, or to deterministic mocks.
//! * [`evaluation`] scores predictions with micro-F1 and runs configuration-grid ablations.
//! * [`commands`] wires everything into the `ragner` subcommands.
//!
//! Each capability has a runnable program under `examples/`.

pub mod augment;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod embedder;
pub mod evaluation;
pub mod generation;
pub mod io;
pub mod pipeline;
pub mod promptkit;
pub mod retriever;
pub mod synth;
pub mod vector_index;

pub mod stub_server;

mod http;
mod sync;

pub use corpus::{CorpusSplit, EntitySchema, EntitySpan, EntityType, LabeledSentence, NerOutput};
pub use embedder::{Embedder, EmbedderSpec, SentenceEmbedding, WordEmbedding};
pub use evaluation::{EvalReport, PredictionRecord};
pub use promptkit::{Prompt, PromptBuilder};
pub use retriever::{ExampleStore, RetrievedExample, RetrieverConfig};
pub use vector_index::{SearchHit, VectorIndex, WordRecord};
