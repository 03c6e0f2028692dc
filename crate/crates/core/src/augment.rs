//! Finetuning data with entity-type dropout and entity-type shuffling.
//!
//! Every finetune sentence yields one record whose prompt carries retrieved store examples.
//! A `dropout_fraction` subset is additionally duplicated with some types deleted from the
//! definitions, the example outputs and the completion. A `shuffle_fraction` subset of the
//! original records gets its type order permuted.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{gold_output, CorpusError, EntitySchema, LabeledSentence, NerOutput};
use crate::embedder::Embedder;
use crate::promptkit::{render_output, PromptBuilder, PromptError};
use crate::retriever::{ExampleStore, RetrieveError, RetrieverConfig};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("schema has {0} types; dropout and shuffling need at least 2")]
    SchemaTooSmall(usize),
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub dropout_fraction: f64,
    pub shuffle_fraction: f64,
    pub min_removed: usize,
    /// `None` means `|schema| - 1`.
    pub max_removed: Option<usize>,
    /// Also permute type order inside dropout duplicates.
    pub shuffle_duplicates: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            dropout_fraction: 0.3,
            shuffle_fraction: 0.5,
            min_removed: 1,
            max_removed: None,
            shuffle_duplicates: false,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    fn removal_range(&self, schema_len: usize) -> Result<(usize, usize), AugmentError> {
        if schema_len < 2 {
            return Err(AugmentError::SchemaTooSmall(schema_len));
        }
        let max = self.max_removed.unwrap_or(schema_len - 1);
        if self.min_removed < 1 || self.min_removed > max || max >= schema_len {
            return Err(AugmentError::InvalidConfig(format!(
                "need 1 <= min_removed ({}) <= max_removed ({max}) < {schema_len}",
                self.min_removed
            )));
        }
        Ok((self.min_removed, max))
    }

    pub fn validate(&self, schema_len: usize) -> Result<(), AugmentError> {
        for (name, f) in [
            ("dropout_fraction", self.dropout_fraction),
            ("shuffle_fraction", self.shuffle_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(AugmentError::InvalidConfig(format!("{name} = {f} is outside [0, 1]")));
            }
        }
        if self.dropout_fraction > 0.0 || self.shuffle_fraction > 0.0 {
            self.removal_range(schema_len)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Dropout,
    Shuffle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sentence_id: u64,
    pub transforms: Vec<Transform>,
    pub removed_types: Vec<String>,
    /// Type order used in the prompt and the completion.
    pub schema_order: Vec<String>,
    pub retrieved: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub prompt: String,
    pub completion: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSentence {
    pub sentence_id: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FinetuneDataset {
    pub records: Vec<FinetuneRecord>,
    pub skipped: Vec<SkippedSentence>,
}

/// Removes `r ~ U[min_removed, max_removed]` distinct types, chosen uniformly.
///
/// Returns the reduced schema (original order), the reduced gold and the removed names.
pub fn drop_entity_types<R: Rng>(
    gold: &NerOutput,
    schema: &EntitySchema,
    rng: &mut R,
    cfg: &AugmentConfig,
) -> Result<(EntitySchema, NerOutput, Vec<String>), AugmentError> {
    let (lo, hi) = cfg.removal_range(schema.len())?;
    let r = rng.gen_range(lo..=hi);
    let names = schema.names();
    let mut removed: Vec<String> = names.choose_multiple(rng, r).cloned().collect();
    removed.sort_by_key(|n| names.iter().position(|m| m == n));
    let kept: Vec<String> = names.into_iter().filter(|n| !removed.contains(n)).collect();
    let reduced = schema.select(&kept)?;
    Ok((reduced, gold.project(&kept), removed))
}

/// A uniformly random permutation of the schema's types.
pub fn shuffle_entity_types<R: Rng>(schema: &EntitySchema, rng: &mut R) -> EntitySchema {
    let mut names = schema.names();
    names.shuffle(rng);
    schema.select(&names).expect("permutation of existing names")
}

fn sentence_rng(seed: u64, sentence_id: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sentence_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Exactly `round(n * fraction)` positions, chosen by a seeded shuffle.
fn select_subset(n: usize, fraction: f64, seed: u64, stream: u64) -> Vec<bool> {
    let count = ((n as f64) * fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    order.shuffle(&mut rng);
    let mut chosen = vec![false; n];
    for &i in &order[..count.min(n)] {
        chosen[i] = true;
    }
    chosen
}

/// Builds the finetuning records for `finetune` against a store built over the store split.
///
/// Sentences whose retrieval or rendering fails are skipped and reported.
#[allow(clippy::too_many_arguments)]
pub fn build_finetune_dataset(
    finetune: &[LabeledSentence],
    schema: &EntitySchema,
    store: &ExampleStore,
    embedder: &Embedder,
    retriever: &RetrieverConfig,
    builder: &PromptBuilder,
    cfg: &AugmentConfig,
) -> Result<FinetuneDataset, AugmentError> {
    cfg.validate(schema.len())?;
    let n = finetune.len();
    let dropout = select_subset(n, cfg.dropout_fraction, cfg.seed, 1);
    let shuffle = select_subset(n, cfg.shuffle_fraction, cfg.seed, 2);

    let mut out = FinetuneDataset::default();
    for (i, sentence) in finetune.iter().enumerate() {
        match records_for(sentence, schema, store, embedder, retriever, builder, cfg, dropout[i], shuffle[i]) {
            Ok(recs) => out.records.extend(recs),
            Err(e) => out.skipped.push(SkippedSentence {
                sentence_id: sentence.id,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn records_for(
    sentence: &LabeledSentence,
    schema: &EntitySchema,
    store: &ExampleStore,
    embedder: &Embedder,
    retriever: &RetrieverConfig,
    builder: &PromptBuilder,
    cfg: &AugmentConfig,
    with_dropout: bool,
    with_shuffle: bool,
) -> Result<Vec<FinetuneRecord>, AugmentError> {
    let gold = gold_output(sentence, schema)?;
    let hits = match store.retrieve(sentence, Some(sentence.id), embedder, retriever) {
        Ok(h) => h,
        // Same zero-example fallback as inference.
        Err(RetrieveError::EmptyQueryAfterStopwords) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut examples = Vec::with_capacity(hits.len());
    for h in &hits {
        let ex = store
            .sentence(h.sentence_id)
            .expect("retrieved ids come from the store");
        examples.push((ex.clone(), gold_output(ex, schema)?));
    }
    let retrieved: Vec<u64> = hits.iter().map(|h| h.sentence_id).collect();
    let text = sentence.text();

    let render = |schema: &EntitySchema, gold: &NerOutput, provenance: Provenance| {
        let names = schema.names();
        let projected: Vec<_> = examples
            .iter()
            .map(|(s, o)| (s.clone(), o.project(&names)))
            .collect();
        let prompt = builder.build(schema, &projected, &text)?;
        Ok::<_, AugmentError>(FinetuneRecord {
            prompt: prompt.rendered,
            completion: render_output(&gold.project(&names)),
            provenance,
        })
    };

    let mut records = Vec::with_capacity(2);
    let (base_schema, mut transforms) = if with_shuffle {
        let mut rng = sentence_rng(cfg.seed, sentence.id, 2);
        (shuffle_entity_types(schema, &mut rng), vec![Transform::Shuffle])
    } else {
        (schema.clone(), Vec::new())
    };
    records.push(render(
        &base_schema,
        &gold,
        Provenance {
            sentence_id: sentence.id,
            transforms: transforms.clone(),
            removed_types: Vec::new(),
            schema_order: base_schema.names(),
            retrieved: retrieved.clone(),
        },
    )?);

    if with_dropout {
        let mut rng = sentence_rng(cfg.seed, sentence.id, 1);
        let (mut reduced, reduced_gold, removed) = drop_entity_types(&gold, schema, &mut rng, cfg)?;
        transforms = vec![Transform::Dropout];
        if cfg.shuffle_duplicates && reduced.len() >= 2 {
            reduced = shuffle_entity_types(&reduced, &mut rng);
            transforms.push(Transform::Shuffle);
        }
        records.push(render(
            &reduced,
            &reduced_gold,
            Provenance {
                sentence_id: sentence.id,
                transforms,
                removed_types: removed,
                schema_order: reduced.names(),
                retrieved,
            },
        )?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(names: &[&str]) -> EntitySchema {
        let pairs: Vec<(&str, &str)> = names.iter().map(|n| (*n, "d")).collect();
        EntitySchema::from_pairs(&pairs).unwrap()
    }

    #[test]
    fn forced_single_removal() {
        let s = schema(&["person", "location"]);
        let gold = NerOutput {
            entries: vec![
                ("person".into(), vec!["Obama".into()]),
                ("location".into(), vec!["Paris".into()]),
            ],
            unrecognized: vec![],
        };
        let mut seen_person_only = false;
        for seed in 0..20 {
            let (reduced, g, removed) =
                drop_entity_types(&gold, &s, &mut ChaCha8Rng::seed_from_u64(seed), &AugmentConfig::default()).unwrap();
            assert_eq!(reduced.len(), 1);
            assert_eq!(removed.len(), 1);
            assert_eq!(g.keys(), reduced.names().iter().map(String::as_str).collect::<Vec<_>>());
            if removed == ["location"] {
                assert_eq!(g.entries, vec![("person".to_string(), vec!["Obama".to_string()])]);
                seen_person_only = true;
            }
        }
        assert!(seen_person_only);
    }

    #[test]
    fn schema_too_small() {
        let s = schema(&["person"]);
        let gold = NerOutput::empty(&["person"]);
        let err = drop_entity_types(&gold, &s, &mut ChaCha8Rng::seed_from_u64(0), &AugmentConfig::default());
        assert!(matches!(err, Err(AugmentError::SchemaTooSmall(1))));
    }

    #[test]
    fn removal_frequency_is_uniform() {
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i"];
        let s = schema(&names);
        let gold = NerOutput::empty(&names);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 9];
        let draws = 10_000;
        for _ in 0..draws {
            let (_, _, removed) = drop_entity_types(&gold, &s, &mut rng, &AugmentConfig::default()).unwrap();
            for r in removed {
                counts[names.iter().position(|n| *n == r).unwrap()] += 1;
            }
        }
        // E[r] / |S| with r ~ U[1, 8].
        let expected = 4.5 / 9.0;
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - expected).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn two_type_shuffle_is_fair() {
        let s = schema(&["x", "y"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let swaps = (0..10_000)
            .filter(|_| shuffle_entity_types(&s, &mut rng).names()[0] == "y")
            .count();
        assert!((swaps as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn six_type_permutations_look_uniform() {
        let names = ["a", "b", "c", "d", "e", "f"];
        let s = schema(&names);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut first = [0usize; 6];
        for _ in 0..10_000 {
            let p = shuffle_entity_types(&s, &mut rng);
            let mut sorted = p.names();
            sorted.sort();
            assert_eq!(sorted, names);
            first[names.iter().position(|n| *n == p.names()[0]).unwrap()] += 1;
        }
        for c in first {
            assert!((c as f64 / 10_000.0 - 1.0 / 6.0).abs() < 0.02);
        }
    }

    #[test]
    fn subset_sizes_are_exact() {
        for (n, f) in [(10_000, 0.3), (14_487, 0.3), (7, 0.5), (0, 0.3), (5, 1.0)] {
            let chosen = select_subset(n, f, 42, 1);
            assert_eq!(chosen.iter().filter(|c| **c).count(), ((n as f64) * f).round() as usize);
        }
    }

    #[test]
    fn config_validation() {
        let bad = AugmentConfig { dropout_fraction: 1.5, ..Default::default() };
        assert!(bad.validate(4).is_err());
        let bad = AugmentConfig { max_removed: Some(4), ..Default::default() };
        assert!(bad.validate(4).is_err());
        let off = AugmentConfig { dropout_fraction: 0.0, shuffle_fraction: 0.0, ..Default::default() };
        assert!(off.validate(1).is_ok());
    }
}
