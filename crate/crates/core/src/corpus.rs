//! Labeled sentences, entity schemas and BIO ingestion.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: expected `token tag`, found {fields} field(s): {content:?}")]
    MalformedLine {
        line: usize,
        fields: usize,
        content: String,
    },
    #[error("line {line}: unsupported tag {tag:?} (only O, B-X and I-X are accepted)")]
    InvalidTag { line: usize, tag: String },
    #[error("duplicate entity type name {0:?}")]
    DuplicateTypeName(String),
    #[error("entity type {0:?} has an empty definition")]
    EmptyDefinition(String),
    #[error("schema has no entity types")]
    EmptySchema,
    #[error("schema document is not valid: {0}")]
    SchemaFormat(String),
    #[error("sentence {sentence_id}: span type {entity_type:?} is not in the schema")]
    UnknownSpanType {
        sentence_id: u64,
        entity_type: String,
    },
    #[error("sentence {sentence_id}: invalid span: {reason}")]
    InvalidSpan { sentence_id: u64, reason: String },
    #[error("store size {store_size} exceeds corpus size {available}")]
    StoreSizeTooLarge { store_size: usize, available: usize },
}

/// A typed, contiguous token range. `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: u64,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub spans: Vec<EntitySpan>,
}

impl LabeledSentence {
    /// Builds a sentence from tokens and `(type, start, end)` triples, filling in surfaces.
    pub fn new(id: u64, tokens: Vec<String>, spans: &[(&str, usize, usize)]) -> Self {
        let spans = spans
            .iter()
            .map(|&(ty, start, end)| EntitySpan {
                entity_type: ty.to_string(),
                start,
                end,
                surface: tokens[start..end].join(" "),
            })
            .collect();
        Self { id, tokens, spans }
    }

    /// An unlabeled sentence from whitespace-separated text.
    pub fn from_text(id: u64, text: &str) -> Self {
        Self {
            id,
            tokens: text.split_whitespace().map(str::to_string).collect(),
            spans: Vec::new(),
        }
    }

    /// The sentence text: tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn without_spans(&self) -> Self {
        Self {
            id: self.id,
            tokens: self.tokens.clone(),
            spans: Vec::new(),
        }
    }

    /// Checks span ordering, bounds and surfaces.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: String| CorpusError::InvalidSpan {
            sentence_id: self.id,
            reason,
        };
        let mut prev_end = 0;
        for span in &self.spans {
            if span.start >= span.end {
                return Err(bad(format!("empty range {}..{}", span.start, span.end)));
            }
            if span.end > self.tokens.len() {
                return Err(bad(format!(
                    "range {}..{} exceeds {} tokens",
                    span.start,
                    span.end,
                    self.tokens.len()
                )));
            }
            if span.start < prev_end {
                return Err(bad(format!("span at {} overlaps or is unsorted", span.start)));
            }
            let joined = self.tokens[span.start..span.end].join(" ");
            if joined != span.surface {
                return Err(bad(format!("surface {:?} != {:?}", span.surface, joined)));
            }
            prev_end = span.end;
        }
        Ok(())
    }
}

/// Reassigns sequential ids starting at `start`.
pub fn renumber(sentences: &mut [LabeledSentence], start: u64) {
    for (i, s) in sentences.iter_mut().enumerate() {
        s.id = start + i as u64;
    }
}

/// Canonical key form: lowercase with whitespace and underscores removed.
pub fn fold_key(key: &str) -> String {
    key.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityType {
    pub name: String,
    pub definition: String,
    /// Alternative labels (e.g. BIO tag spellings) resolving to this type.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

/// Ordered entity types. Order is the prompt order and the output key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntitySchema {
    types: Vec<EntityType>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SchemaDocument {
    Wrapped { types: Vec<EntityType> },
    Bare(Vec<EntityType>),
}

impl<'de> Deserialize<'de> for EntitySchema {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let types = match SchemaDocument::deserialize(d)? {
            SchemaDocument::Wrapped { types } | SchemaDocument::Bare(types) => types,
        };
        EntitySchema::new(types).map_err(serde::de::Error::custom)
    }
}

impl EntitySchema {
    pub fn new(types: Vec<EntityType>) -> Result<Self, CorpusError> {
        if types.is_empty() {
            return Err(CorpusError::EmptySchema);
        }
        let mut seen = HashSet::new();
        for t in &types {
            if t.definition.trim().is_empty() {
                return Err(CorpusError::EmptyDefinition(t.name.clone()));
            }
            if !seen.insert(t.name.to_lowercase()) {
                return Err(CorpusError::DuplicateTypeName(t.name.clone()));
            }
        }
        Ok(Self { types })
    }

    /// Convenience constructor from `(name, definition)` pairs.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<Self, CorpusError> {
        Self::new(
            pairs
                .iter()
                .map(|(n, d)| EntityType {
                    name: n.to_string(),
                    definition: d.to_string(),
                    aliases: Vec::new(),
                })
                .collect(),
        )
    }

    pub fn types(&self) -> &[EntityType] {
        &self.types
    }

    pub fn names(&self) -> Vec<String> {
        self.types.iter().map(|t| t.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Finds the type whose name or alias folds to the same key as `label`.
    pub fn resolve(&self, label: &str) -> Option<&EntityType> {
        let key = fold_key(label);
        self.types.iter().find(|t| {
            fold_key(&t.name) == key || t.aliases.iter().any(|a| fold_key(a) == key)
        })
    }

    /// A schema with the given types, in the given order. Names must resolve.
    pub fn select(&self, names: &[String]) -> Result<Self, CorpusError> {
        let mut types = Vec::with_capacity(names.len());
        for n in names {
            let t = self
                .resolve(n)
                .ok_or_else(|| CorpusError::UnknownSpanType {
                    sentence_id: 0,
                    entity_type: n.clone(),
                })?;
            types.push(t.clone());
        }
        Self::new(types)
    }

    /// Rewrites every span type to its canonical schema name and validates spans.
    pub fn canonicalize(&self, sentences: &mut [LabeledSentence]) -> Result<(), CorpusError> {
        for s in sentences.iter_mut() {
            s.validate()?;
            for span in &mut s.spans {
                let t = self
                    .resolve(&span.entity_type)
                    .ok_or_else(|| CorpusError::UnknownSpanType {
                        sentence_id: s.id,
                        entity_type: span.entity_type.clone(),
                    })?;
                span.entity_type = t.name.clone();
            }
        }
        Ok(())
    }
}

/// Parses a schema document: a JSON array of `{name, definition}` objects, or an object
/// with that array under `types`.
pub fn load_schema(document: &str) -> Result<EntitySchema, CorpusError> {
    let raw: SchemaDocument =
        serde_json::from_str(document).map_err(|e| CorpusError::SchemaFormat(e.to_string()))?;
    match raw {
        SchemaDocument::Wrapped { types } | SchemaDocument::Bare(types) => EntitySchema::new(types),
    }
}

/// Result of parsing a BIO document.
#[derive(Debug, Clone, PartialEq)]
pub struct BioDocument {
    pub sentences: Vec<LabeledSentence>,
    /// Count of `I-X` tags that did not continue an open `X` span and were read as `B-X`.
    pub dangling_inside: usize,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, ty) = tag.split_at_checked(2)?;
    if ty.is_empty() {
        return None;
    }
    match prefix {
        "B-" => Some(Tag::Begin(ty)),
        "I-" => Some(Tag::Inside(ty)),
        _ => None,
    }
}

struct SentenceBuilder {
    tokens: Vec<String>,
    spans: Vec<EntitySpan>,
    open: Option<(String, usize)>,
}

impl SentenceBuilder {
    fn new() -> Self {
        Self {
            tokens: Vec::new(),
            spans: Vec::new(),
            open: None,
        }
    }

    fn close(&mut self) {
        if let Some((ty, start)) = self.open.take() {
            let end = self.tokens.len();
            self.spans.push(EntitySpan {
                surface: self.tokens[start..end].join(" "),
                entity_type: ty,
                start,
                end,
            });
        }
    }

    fn finish(mut self, id: u64) -> LabeledSentence {
        self.close();
        LabeledSentence {
            id,
            tokens: self.tokens,
            spans: self.spans,
        }
    }
}

/// Parses a `token<whitespace>tag` document with blank-line sentence breaks.
///
/// `-DOCSTART-` lines are skipped. An `I-X` that does not continue an open `X` span starts
/// a new span and is tallied in [`BioDocument::dangling_inside`].
pub fn parse_bio(text: &str) -> Result<BioDocument, CorpusError> {
    let mut sentences = Vec::new();
    let mut dangling_inside = 0;
    let mut cur = SentenceBuilder::new();

    let flush = |cur: &mut SentenceBuilder, sentences: &mut Vec<LabeledSentence>| {
        let done = std::mem::replace(cur, SentenceBuilder::new());
        if !done.tokens.is_empty() {
            sentences.push(done.finish(sentences.len() as u64));
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut cur, &mut sentences);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(CorpusError::MalformedLine {
                line: i + 1,
                fields: fields.len(),
                content: line.to_string(),
            });
        }
        let (token, tag) = (fields[0], fields[1]);
        if token == "-DOCSTART-" {
            continue;
        }
        let parsed = parse_tag(tag).ok_or_else(|| CorpusError::InvalidTag {
            line: i + 1,
            tag: tag.to_string(),
        })?;
        match parsed {
            Tag::Outside => cur.close(),
            Tag::Begin(ty) => {
                cur.close();
                cur.open = Some((ty.to_string(), cur.tokens.len()));
            }
            Tag::Inside(ty) => {
                let continues = matches!(&cur.open, Some((open, _)) if open == ty);
                if !continues {
                    dangling_inside += 1;
                    cur.close();
                    cur.open = Some((ty.to_string(), cur.tokens.len()));
                }
            }
        }
        cur.tokens.push(token.to_string());
    }
    flush(&mut cur, &mut sentences);
    Ok(BioDocument {
        sentences,
        dangling_inside,
    })
}

/// Renders sentences back to BIO text. Whitespace inside type names becomes `_`.
pub fn render_bio(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for (si, s) in sentences.iter().enumerate() {
        if si > 0 {
            out.push('\n');
        }
        let mut tags = vec![String::from("O"); s.tokens.len()];
        for span in &s.spans {
            let label: String = span
                .entity_type
                .chars()
                .map(|c| if c.is_whitespace() { '_' } else { c })
                .collect();
            for (j, tag) in tags.iter_mut().enumerate().take(span.end).skip(span.start) {
                let prefix = if j == span.start { "B-" } else { "I-" };
                *tag = format!("{prefix}{label}");
            }
        }
        for (tok, tag) in s.tokens.iter().zip(&tags) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
    }
    out
}

/// Entity-type → surface-strings mapping, in schema order.
///
/// `unrecognized` collects keys a model produced that are not in the schema.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NerOutput {
    pub entries: Vec<(String, Vec<String>)>,
    pub unrecognized: Vec<(String, Vec<String>)>,
}

impl NerOutput {
    /// All keys present with empty value lists.
    pub fn empty<S: AsRef<str>>(keys: &[S]) -> Self {
        Self {
            entries: keys
                .iter()
                .map(|k| (k.as_ref().to_string(), Vec::new()))
                .collect(),
            unrecognized: Vec::new(),
        }
    }

    pub fn keys(&self) -> Vec<&str> {
        self.entries.iter().map(|(k, _)| k.as_str()).collect()
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Vec<String>> {
        self.entries
            .iter_mut()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn is_all_empty(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.is_empty())
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// Re-keys onto `keys`: values of matching keys carry over, other keys are empty.
    pub fn project<S: AsRef<str>>(&self, keys: &[S]) -> Self {
        Self {
            entries: keys
                .iter()
                .map(|k| {
                    let k = k.as_ref();
                    (k.to_string(), self.get(k).map(<[_]>::to_vec).unwrap_or_default())
                })
                .collect(),
            unrecognized: Vec::new(),
        }
    }
}

impl Serialize for NerOutput {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NerOutput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct OrderedVisitor;
        impl<'de> Visitor<'de> for OrderedVisitor {
            type Value = NerOutput;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from entity type to a list of strings")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<NerOutput, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, Vec<String>>()? {
                    entries.push((k, v));
                }
                Ok(NerOutput {
                    entries,
                    unrecognized: Vec::new(),
                })
            }
        }
        d.deserialize_map(OrderedVisitor)
    }
}

/// The generation target of a labeled sentence: one key per schema type, values in span order.
pub fn gold_output(
    sentence: &LabeledSentence,
    schema: &EntitySchema,
) -> Result<NerOutput, CorpusError> {
    let mut out = NerOutput::empty(&schema.names());
    for span in &sentence.spans {
        let t = schema
            .resolve(&span.entity_type)
            .ok_or_else(|| CorpusError::UnknownSpanType {
                sentence_id: sentence.id,
                entity_type: span.entity_type.clone(),
            })?;
        out.get_mut(&t.name)
            .expect("schema key present")
            .push(span.surface.clone());
    }
    Ok(out)
}

/// Store and finetune partitions of a source-domain corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub store: Vec<LabeledSentence>,
    pub finetune: Vec<LabeledSentence>,
    pub seed: u64,
}

/// Draws a uniformly random store subset of exactly `store_size` sentences.
///
/// Both partitions keep the input order.
pub fn split_store_finetune(
    sentences: &[LabeledSentence],
    store_size: usize,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if store_size > sentences.len() {
        return Err(CorpusError::StoreSizeTooLarge {
            store_size,
            available: sentences.len(),
        });
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_store = vec![false; sentences.len()];
    for &i in &order[..store_size] {
        in_store[i] = true;
    }
    let (mut store, mut finetune) = (Vec::new(), Vec::new());
    for (s, keep) in sentences.iter().zip(in_store) {
        if keep {
            store.push(s.clone());
        } else {
            finetune.push(s.clone());
        }
    }
    Ok(CorpusSplit {
        store,
        finetune,
        seed,
    })
}
