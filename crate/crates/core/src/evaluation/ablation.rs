//! Configuration-grid evaluation.
//!
//! A grid names values for each axis; every combination is one cell, evaluated end to end
//! with the same seeds. Results print as one of four table layouts and serialize to JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::corpus::{EntitySchema, LabeledSentence};
use crate::embedder::Embedder;
use crate::generation::{Generator, GeneratorSpec, LatencySummary};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::promptkit::PromptBuilder;
use crate::retriever::{ExampleStore, IndexKind, RetrievalMode};

use super::{score, EvalOptions, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableLayout {
    /// One row per configuration, one F1 column per domain plus the average.
    #[default]
    Domains,
    /// One row per configuration with the average F1.
    Single,
    /// One row per k: per-domain F1, average and median generation latency.
    KSweep,
    /// One row per index type: similarity, average F1 and median search latency.
    Index,
}

/// A row of the regularization table: typically a separately finetuned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    /// Replaces the base generator for this variant.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    /// The augmentation used to produce that model, recorded for provenance.
    #[serde(default)]
    pub augment: Option<AugmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationGrid {
    pub name: String,
    pub layout: TableLayout,
    /// Empty means every domain supplied to the runner.
    pub domains: Vec<String>,
    /// Empty axes take the base pipeline config's value.
    pub modes: Vec<RetrievalMode>,
    pub ks: Vec<usize>,
    pub index_kinds: Vec<IndexKind>,
    /// Embedder tags; empty means every embedder supplied to the runner.
    pub embedders: Vec<String>,
    /// Empty means one variant, `base`, with the base generator.
    pub variants: Vec<Variant>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            name: "ablation".into(),
            layout: TableLayout::Domains,
            domains: Vec::new(),
            modes: Vec::new(),
            ks: Vec::new(),
            index_kinds: Vec::new(),
            embedders: Vec::new(),
            variants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainData {
    pub name: String,
    pub schema: EntitySchema,
    pub store: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

/// Inputs the grid draws from.
#[derive(Debug)]
pub struct AblationInputs<'a> {
    pub domains: &'a [DomainData],
    pub embedders: &'a [(String, Embedder)],
    pub base: &'a PipelineConfig,
    pub builder: &'a PromptBuilder,
    pub eval: EvalOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub variant: String,
    pub embedder: String,
    pub index: String,
    pub mode: String,
    pub k: usize,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub generation_latency: LatencySummary,
    pub search_latency: LatencySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub grid: AblationGrid,
    /// Column order of the tables: grid order, else the order the domains were supplied.
    pub domains: Vec<String>,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AblationError {
    #[error("grid names unknown {axis} {value:?}")]
    UnknownAxisValue { axis: &'static str, value: String },
    #[error("grid axis {0} is empty")]
    EmptyAxis(&'static str),
}

fn index_label(k: IndexKind) -> &'static str {
    match k {
        IndexKind::Flat => "flat",
        IndexKind::Ivf => "ivf-flat",
    }
}

fn or_base<T: Clone>(v: &[T], base: T) -> Vec<T> {
    if v.is_empty() {
        vec![base]
    } else {
        v.to_vec()
    }
}

/// Evaluates every cell. Cell failures are recorded, not raised.
pub fn run_ablation(grid: &AblationGrid, inputs: &AblationInputs<'_>) -> Result<AblationResult, AblationError> {
    let domains: Vec<&DomainData> = if grid.domains.is_empty() {
        inputs.domains.iter().collect()
    } else {
        grid.domains
            .iter()
            .map(|n| {
                inputs.domains.iter().find(|d| &d.name == n).ok_or(AblationError::UnknownAxisValue {
                    axis: "domain",
                    value: n.clone(),
                })
            })
            .collect::<Result<_, _>>()?
    };
    let embedders: Vec<&(String, Embedder)> = if grid.embedders.is_empty() {
        inputs.embedders.iter().collect()
    } else {
        grid.embedders
            .iter()
            .map(|n| {
                inputs.embedders.iter().find(|(t, _)| t == n).ok_or(AblationError::UnknownAxisValue {
                    axis: "embedder",
                    value: n.clone(),
                })
            })
            .collect::<Result<_, _>>()?
    };
    for (axis, empty) in [("domains", domains.is_empty()), ("embedders", embedders.is_empty())] {
        if empty {
            return Err(AblationError::EmptyAxis(axis));
        }
    }
    let modes: Vec<RetrievalMode> = or_base(&grid.modes, inputs.base.retriever.mode);
    let ks: Vec<usize> = or_base(&grid.ks, inputs.base.retriever.k);
    let index_kinds: Vec<IndexKind> = or_base(&grid.index_kinds, inputs.base.index.kind);
    let variants = if grid.variants.is_empty() {
        vec![Variant {
            label: "base".into(),
            generator: None,
            augment: None,
        }]
    } else {
        grid.variants.clone()
    };

    let mut cells = Vec::new();
    for (tag, embedder) in &embedders {
        for &kind in &index_kinds {
            for domain in &domains {
                let mut index = inputs.base.index.clone();
                index.kind = kind;
                let store = ExampleStore::build(domain.store.clone(), embedder, inputs.base.store_words, &index);
                for variant in &variants {
                    for &mode in &modes {
                        for &k in &ks {
                            let key = CellKey {
                                variant: variant.label.clone(),
                                embedder: tag.clone(),
                                index: index_label(kind).into(),
                                mode: mode.label().into(),
                                k,
                                domain: domain.name.clone(),
                            };
                            let mut cfg = inputs.base.clone();
                            cfg.index = index.clone();
                            cfg.retriever.mode = mode;
                            cfg.retriever.k = k;
                            if let Some(g) = &variant.generator {
                                cfg.generator = g.clone();
                            }
                            let outcome = store
                                .as_ref()
                                .map_err(|e| e.to_string())
                                .and_then(|store| run_cell(store, embedder, domain, &cfg, inputs));
                            cells.push(match outcome {
                                Ok((report, generation_latency, search_latency)) => CellResult {
                                    key,
                                    report: Some(report),
                                    error: None,
                                    generation_latency,
                                    search_latency,
                                },
                                Err(error) => CellResult {
                                    key,
                                    report: None,
                                    error: Some(error),
                                    generation_latency: LatencySummary::default(),
                                    search_latency: LatencySummary::default(),
                                },
                            });
                        }
                    }
                }
            }
        }
    }
    cells.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(AblationResult {
        grid: grid.clone(),
        domains: domains.iter().map(|d| d.name.clone()).collect(),
        cells,
    })
}

fn run_cell(
    store: &ExampleStore,
    embedder: &Embedder,
    domain: &DomainData,
    cfg: &PipelineConfig,
    inputs: &AblationInputs<'_>,
) -> Result<(EvalReport, LatencySummary, LatencySummary), String> {
    let generator = Generator::new(cfg.generator.clone()).map_err(|e| e.to_string())?;
    let pipeline = Pipeline {
        store,
        embedder,
        schema: &domain.schema,
        builder: inputs.builder.clone(),
        generator: &generator,
        config: cfg,
    };
    let run = pipeline.predict(&domain.test).map_err(|e| e.to_string())?;
    let report = score(&run.records(), inputs.eval).map_err(|e| e.to_string())?;
    Ok((report, run.generation_latency, run.search_latency))
}

impl AblationResult {
    fn domains(&self) -> Vec<String> {
        self.domains.clone()
    }

    /// Row label from the axes that take more than one value (excluding `skip`).
    fn row_label(&self, key: &CellKey, skip: &[&str]) -> String {
        let mut parts = Vec::new();
        let varied = |f: &dyn Fn(&CellKey) -> String| {
            let mut vals: Vec<String> = self.cells.iter().map(|c| f(&c.key)).collect();
            vals.sort();
            vals.dedup();
            vals.len() > 1
        };
        let axes: [(&str, Box<dyn Fn(&CellKey) -> String>); 5] = [
            ("variant", Box::new(|k: &CellKey| k.variant.clone())),
            ("embedder", Box::new(|k: &CellKey| k.embedder.clone())),
            ("index", Box::new(|k: &CellKey| k.index.clone())),
            ("mode", Box::new(|k: &CellKey| k.mode.clone())),
            ("k", Box::new(|k: &CellKey| format!("k={}", k.k))),
        ];
        for (name, f) in &axes {
            if !skip.contains(name) && varied(f.as_ref()) {
                parts.push(f(key));
            }
        }
        if parts.is_empty() {
            key.variant.clone()
        } else {
            parts.join(" / ")
        }
    }

    /// Rows keyed by label, in first-seen order, each mapping domain → cell.
    fn rows(&self, skip: &[&str]) -> Vec<(String, BTreeMap<String, &CellResult>)> {
        let mut rows: Vec<(String, BTreeMap<String, &CellResult>)> = Vec::new();
        for c in &self.cells {
            let label = self.row_label(&c.key, skip);
            match rows.iter_mut().find(|(l, _)| *l == label) {
                Some((_, m)) => {
                    m.insert(c.key.domain.clone(), c);
                }
                None => rows.push((label, BTreeMap::from([(c.key.domain.clone(), c)]))),
            }
        }
        rows
    }

    pub fn to_table(&self) -> String {
        match self.grid.layout {
            TableLayout::Domains => self.domains_table(),
            TableLayout::Single => self.single_table(),
            TableLayout::KSweep => self.k_table(),
            TableLayout::Index => self.index_table(),
        }
    }

    fn domains_table(&self) -> String {
        let domains = self.domains();
        let rows = self.rows(&[]);
        let mut header = vec!["Model".to_string()];
        header.extend(domains.iter().cloned());
        header.push("Average".into());
        let body = rows
            .iter()
            .map(|(label, cells)| {
                let mut r = vec![label.clone()];
                r.extend(domains.iter().map(|d| f1_cell(cells.get(d).copied())));
                r.push(average(cells.values().copied()));
                r
            })
            .collect();
        render(&header, body)
    }

    fn single_table(&self) -> String {
        let rows = self.rows(&[]);
        let header = vec!["Model".to_string(), "F1".to_string()];
        let body = rows
            .iter()
            .map(|(label, cells)| vec![label.clone(), average(cells.values().copied())])
            .collect();
        render(&header, body)
    }

    fn k_table(&self) -> String {
        let domains = self.domains();
        let rows = self.rows(&[]);
        let mut header = vec!["k".to_string()];
        header.extend(domains.iter().cloned());
        header.push("Average".into());
        header.push("Median Latency (s)".into());
        let body = rows
            .iter()
            .map(|(label, cells)| {
                let k = cells.values().next().map_or(0, |c| c.key.k);
                let mut r = vec![if label.starts_with("k=") { k.to_string() } else { label.clone() }];
                r.extend(domains.iter().map(|d| f1_cell(cells.get(d).copied())));
                r.push(average(cells.values().copied()));
                r.push(median_of(cells.values().map(|c| c.generation_latency.median_s)));
                r
            })
            .collect();
        render(&header, body)
    }

    fn index_table(&self) -> String {
        let rows = self.rows(&[]);
        let header = vec![
            "Vector DB / Index".to_string(),
            "Similarity".to_string(),
            "F1".to_string(),
            "Search Latency (s)".to_string(),
        ];
        let body = rows
            .iter()
            .map(|(label, cells)| {
                vec![
                    label.clone(),
                    "cosine".into(),
                    average(cells.values().copied()),
                    median_of(cells.values().map(|c| c.search_latency.median_s)),
                ]
            })
            .collect();
        render(&header, body)
    }
}

fn f1_cell(c: Option<&CellResult>) -> String {
    match c.and_then(|c| c.report.as_ref()) {
        Some(r) => format!("{:.2}", r.f1_percent()),
        None => "ERR".into(),
    }
}

fn average<'a>(cells: impl Iterator<Item = &'a CellResult>) -> String {
    let mut sum = 0.0;
    let mut n = 0;
    for c in cells {
        match &c.report {
            Some(r) => {
                sum += r.f1_percent();
                n += 1;
            }
            None => return "ERR".into(),
        }
    }
    if n == 0 {
        "ERR".into()
    } else {
        format!("{:.2}", sum / n as f64)
    }
}

fn median_of(values: impl Iterator<Item = f64>) -> String {
    let v: Vec<f64> = values.collect();
    format!("{:.4}", LatencySummary::from_latencies(&v).median_s)
}

fn render(header: &[String], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let mut s = String::new();
    let _ = writeln!(s, "{}", line(header));
    let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(s, "|-{}-|", sep.join("-|-"));
    for r in &rows {
        let _ = writeln!(s, "{}", line(r));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::WordFilter;
    use crate::generation::Backend;
    use crate::retriever::IndexSpec;
    use crate::synth::{contrast_corpus, hashed_embedder};

    fn contrast(n: usize) -> DomainData {
        let c = contrast_corpus(n, 1);
        DomainData {
            name: "contrast".into(),
            schema: c.schema,
            store: c.store,
            test: c.queries,
        }
    }

    fn base() -> PipelineConfig {
        PipelineConfig {
            generator: GeneratorSpec::mock(Backend::MockEchoNearest),
            store_words: WordFilter::EntityOnly,
            index: IndexSpec::flat(),
            ..Default::default()
        }
    }

    #[test]
    fn k_axis_gives_one_row_per_k() {
        let domains = vec![contrast(12)];
        let embedders = vec![("hashed".to_string(), hashed_embedder(32, 0))];
        let base = base();
        let grid = AblationGrid {
            layout: TableLayout::KSweep,
            ks: vec![1, 3, 5],
            ..Default::default()
        };
        let inputs = AblationInputs {
            domains: &domains,
            embedders: &embedders,
            base: &base,
            builder: &PromptBuilder::default(),
            eval: EvalOptions::default(),
        };
        let res = run_ablation(&grid, &inputs).unwrap();
        assert_eq!(res.cells.len(), 3);
        let table = res.to_table();
        assert_eq!(table.lines().count(), 2 + 3, "{table}");
        assert!(table.contains("Median Latency (s)"));
        assert!(table.lines().nth(2).unwrap().starts_with("| 1 "), "{table}");
    }

    #[test]
    fn word_mode_beats_sentence_mode_on_contrast_corpus() {
        let domains = vec![contrast(20)];
        let embedders = vec![("hashed".to_string(), hashed_embedder(64, 0))];
        let base = base();
        let grid = AblationGrid {
            layout: TableLayout::Single,
            modes: vec![RetrievalMode::WordLevel, RetrievalMode::SentenceLevel],
            ..Default::default()
        };
        let inputs = AblationInputs {
            domains: &domains,
            embedders: &embedders,
            base: &base,
            builder: &PromptBuilder::default(),
            eval: EvalOptions::default(),
        };
        let res = run_ablation(&grid, &inputs).unwrap();
        let f1 = |mode: &str| {
            res.cells
                .iter()
                .find(|c| c.key.mode == mode)
                .unwrap()
                .report
                .as_ref()
                .unwrap()
                .f1_percent()
        };
        assert!(f1("word-level") > f1("sentence-level"), "{}", res.to_table());
        assert!(res.to_table().contains("word-level"));
    }

    #[test]
    fn failed_cells_are_marked() {
        let domains = vec![contrast(4)];
        let embedders = vec![("hashed".to_string(), hashed_embedder(16, 0))];
        let base = base();
        let grid = AblationGrid {
            variants: vec![Variant {
                label: "broken".into(),
                generator: Some(GeneratorSpec {
                    parallelism: 0,
                    ..GeneratorSpec::default()
                }),
                augment: None,
            }],
            ..Default::default()
        };
        let inputs = AblationInputs {
            domains: &domains,
            embedders: &embedders,
            base: &base,
            builder: &PromptBuilder::default(),
            eval: EvalOptions::default(),
        };
        let res = run_ablation(&grid, &inputs).unwrap();
        assert!(res.cells[0].error.is_some());
        assert!(res.to_table().contains("ERR"));
    }

    #[test]
    fn unknown_axis_values() {
        let domains = vec![contrast(2)];
        let embedders = vec![("hashed".to_string(), hashed_embedder(16, 0))];
        let base = base();
        let inputs = AblationInputs {
            domains: &domains,
            embedders: &embedders,
            base: &base,
            builder: &PromptBuilder::default(),
            eval: EvalOptions::default(),
        };
        let grid = AblationGrid {
            domains: vec!["nope".into()],
            ..Default::default()
        };
        assert!(matches!(run_ablation(&grid, &inputs), Err(AblationError::UnknownAxisValue { .. })));
        let none: Vec<(String, Embedder)> = Vec::new();
        let inputs = AblationInputs {
            embedders: &none,
            ..inputs
        };
        assert_eq!(run_ablation(&AblationGrid::default(), &inputs).unwrap_err(), AblationError::EmptyAxis("embedders"));
    }
}
