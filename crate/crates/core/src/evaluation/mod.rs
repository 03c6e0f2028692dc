//! Micro-F1 over predicted entity strings.
//!
//! The default comparison is a multiset over `(type, normalized string)`: lowercase, whitespace
//! collapsed, multiplicities kept. `MatchMode::Positional` grounds each string to the first
//! unused occurrence in the sentence and compares `(type, start, end)` instead.

pub mod ablation;

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::NerOutput;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction records to score")]
    Empty,
    #[error("sentence {sentence_id}: keys {found:?} differ from {expected:?}")]
    SchemaMismatchAcrossRecords {
        sentence_id: u64,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("positional matching needs tokens for sentence {0}")]
    MissingTokens(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence_id: u64,
    pub gold: NerOutput,
    pub predicted: NerOutput,
    #[serde(default)]
    pub parse_failed: bool,
    /// Sentence tokens; only needed for positional matching.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    #[default]
    Multiset,
    Positional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub mode: MatchMode,
    /// Count each distinct `(type, string)` once per sentence.
    pub dedupe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for Score {
    fn from(counts: Counts) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub entity_type: String,
    #[serde(flatten)]
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro: Score,
    /// Schema order.
    pub per_type: Vec<TypeScore>,
    pub n_sentences: usize,
    pub n_parse_failures: usize,
}

impl EvalReport {
    pub fn f1_percent(&self) -> f64 {
        self.micro.f1 * 100.0
    }

    /// Fixed-width text table, percentages to two decimals.
    pub fn to_table(&self) -> String {
        let width = self
            .per_type
            .iter()
            .map(|t| t.entity_type.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>6} {:>6} {:>6}  {:>7} {:>7} {:>7}",
            "type", "tp", "fp", "fn", "P", "R", "F1"
        );
        let mut row = |name: &str, sc: &Score| {
            let _ = writeln!(
                s,
                "{:<width$}  {:>6} {:>6} {:>6}  {:>7.2} {:>7.2} {:>7.2}",
                name,
                sc.counts.tp,
                sc.counts.fp,
                sc.counts.fn_,
                sc.precision * 100.0,
                sc.recall * 100.0,
                sc.f1 * 100.0
            );
        };
        for t in &self.per_type {
            row(&t.entity_type, &t.score);
        }
        row("micro", &self.micro);
        let _ = writeln!(
            s,
            "{} sentences, {} parse failures",
            self.n_sentences, self.n_parse_failures
        );
        s
    }
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// `(type, normalized string) → count`. Empty strings are ignored.
pub fn to_multiset(output: &NerOutput) -> HashMap<(String, String), usize> {
    let mut m = HashMap::new();
    for (t, vals) in &output.entries {
        for v in vals {
            let n = normalize(v);
            if !n.is_empty() {
                *m.entry((t.clone(), n)).or_insert(0) += 1;
            }
        }
    }
    m
}

/// Keys for positional matching: `(type, "start:end")` for grounded strings and a unique
/// `(type, "?n")` for strings that do not occur.
fn positional_keys(output: &NerOutput, tokens: &[String], side: &str) -> HashMap<(String, String), usize> {
    let norm_tokens: Vec<String> = tokens.iter().map(|t| normalize(t)).collect();
    let mut used: Vec<(usize, usize)> = Vec::new();
    let mut m = HashMap::new();
    let mut ungrounded = 0;
    for (t, vals) in &output.entries {
        for v in vals {
            let want: Vec<String> = normalize(v).split(' ').map(String::from).collect();
            if want.iter().all(String::is_empty) {
                continue;
            }
            let found = (0..norm_tokens.len().saturating_sub(want.len() - 1)).find(|&i| {
                let span = (i, i + want.len());
                norm_tokens[span.0..span.1] == want[..] && !used.contains(&span)
            });
            let key = match found {
                Some(i) => {
                    used.push((i, i + want.len()));
                    format!("{i}:{}", i + want.len())
                }
                None => {
                    ungrounded += 1;
                    format!("?{side}{ungrounded}")
                }
            };
            *m.entry((t.clone(), key)).or_insert(0) += 1;
        }
    }
    m
}

/// Per-type counts for one sentence.
fn sentence_counts(rec: &PredictionRecord, opts: EvalOptions) -> Result<HashMap<String, Counts>, EvalError> {
    let (mut gold, mut pred) = match opts.mode {
        MatchMode::Multiset => (to_multiset(&rec.gold), to_multiset(&rec.predicted)),
        MatchMode::Positional => {
            if rec.tokens.is_empty() && rec.gold.total_values() + rec.predicted.total_values() > 0 {
                return Err(EvalError::MissingTokens(rec.sentence_id));
            }
            (
                positional_keys(&rec.gold, &rec.tokens, "g"),
                positional_keys(&rec.predicted, &rec.tokens, "p"),
            )
        }
    };
    if rec.parse_failed {
        pred.clear();
    }
    if opts.dedupe {
        gold.values_mut().for_each(|c| *c = 1);
        pred.values_mut().for_each(|c| *c = 1);
    }
    let mut out: HashMap<String, Counts> = HashMap::new();
    for ((t, s), &g) in &gold {
        let p = pred.get(&(t.clone(), s.clone())).copied().unwrap_or(0);
        let c = out.entry(t.clone()).or_default();
        c.tp += g.min(p);
        c.fn_ += g.saturating_sub(p);
    }
    for ((t, s), &p) in &pred {
        let g = gold.get(&(t.clone(), s.clone())).copied().unwrap_or(0);
        out.entry(t.clone()).or_default().fp += p.saturating_sub(g);
    }
    Ok(out)
}

fn sorted_keys(o: &NerOutput) -> Vec<String> {
    let mut k: Vec<String> = o.keys().into_iter().map(String::from).collect();
    k.sort();
    k
}

/// Micro-averaged precision, recall and F1 over all records, plus per-type scores.
///
/// A parse failure scores every gold item of its sentence as a false negative.
pub fn score(records: &[PredictionRecord], opts: EvalOptions) -> Result<EvalReport, EvalError> {
    let first = records.first().ok_or(EvalError::Empty)?;
    let order: Vec<String> = first.gold.keys().into_iter().map(String::from).collect();
    let expected = sorted_keys(&first.gold);
    let mut per_type: HashMap<String, Counts> = order.iter().map(|k| (k.clone(), Counts::default())).collect();
    let mut failures = 0;
    for rec in records {
        for found in [sorted_keys(&rec.gold), sorted_keys(&rec.predicted)] {
            if found != expected && !(rec.parse_failed && rec.predicted.entries.is_empty()) {
                return Err(EvalError::SchemaMismatchAcrossRecords {
                    sentence_id: rec.sentence_id,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        failures += usize::from(rec.parse_failed);
        for (t, c) in sentence_counts(rec, opts)? {
            per_type.entry(t).or_default().add(c);
        }
    }
    let mut micro = Counts::default();
    let per_type: Vec<TypeScore> = order
        .iter()
        .map(|t| {
            let c = per_type[t];
            micro.add(c);
            TypeScore {
                entity_type: t.clone(),
                score: c.into(),
            }
        })
        .collect();
    Ok(EvalReport {
        micro: micro.into(),
        per_type,
        n_sentences: records.len(),
        n_parse_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(pairs: &[(&str, &[&str])]) -> NerOutput {
        NerOutput {
            entries: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
            unrecognized: vec![],
        }
    }

    fn rec(id: u64, gold: NerOutput, predicted: NerOutput) -> PredictionRecord {
        PredictionRecord {
            sentence_id: id,
            gold,
            predicted,
            parse_failed: false,
            tokens: vec![],
        }
    }

    #[test]
    fn multiset_normalization() {
        let m = to_multiset(&out(&[("person", &["Obama", "obama"])]));
        assert_eq!(m[&("person".to_string(), "obama".to_string())], 2);
        assert!(to_multiset(&out(&[("person", &[])])).is_empty());
        let m = to_multiset(&out(&[("person", &["Barack  Obama"])]));
        assert_eq!(m[&("person".to_string(), "barack obama".to_string())], 1);
    }

    #[test]
    fn hand_computed_case() {
        let r = score(
            &[rec(0, out(&[("person", &["obama"])]), out(&[("person", &["obama", "biden"])]))],
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.micro.counts, Counts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(r.micro.precision, 0.5);
        assert_eq!(r.micro.recall, 1.0);
        assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_type_is_fp_and_fn() {
        let r = score(
            &[rec(0, out(&[("person", &["Paris"]), ("location", &[])]), out(&[("person", &[]), ("location", &["Paris"])]))],
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.micro.counts, Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r.per_type[0].entity_type, "person");
        assert_eq!(r.per_type[0].score.counts.fn_, 1);
        assert_eq!(r.per_type[1].score.counts.fp, 1);
    }

    #[test]
    fn parse_failure_is_all_fn() {
        let mut r = rec(0, out(&[("person", &["a", "b"])]), out(&[("person", &["a"])]));
        r.parse_failed = true;
        let rep = score(&[r], EvalOptions::default()).unwrap();
        assert_eq!(rep.micro.counts, Counts { tp: 0, fp: 0, fn_: 2 });
        assert_eq!(rep.n_parse_failures, 1);
    }

    #[test]
    fn empty_and_mismatch() {
        assert_eq!(score(&[], EvalOptions::default()), Err(EvalError::Empty));
        let a = rec(0, out(&[("person", &[])]), out(&[("person", &[])]));
        let b = rec(1, out(&[("location", &[])]), out(&[("location", &[])]));
        assert!(matches!(
            score(&[a, b], EvalOptions::default()),
            Err(EvalError::SchemaMismatchAcrossRecords { sentence_id: 1, .. })
        ));
    }

    #[test]
    fn all_empty_predictions_give_zero() {
        let r = score(&[rec(0, out(&[("person", &["x"])]), out(&[("person", &[])]))], EvalOptions::default()).unwrap();
        assert_eq!(r.micro.f1, 0.0);
        assert_eq!(r.micro.precision, 0.0);
    }

    #[test]
    fn dedupe() {
        let r = rec(0, out(&[("person", &["Bob", "Bob"])]), out(&[("person", &["Bob"])]));
        let plain = score(std::slice::from_ref(&r), EvalOptions::default()).unwrap();
        assert_eq!(plain.micro.counts, Counts { tp: 1, fp: 0, fn_: 1 });
        let d = score(&[r], EvalOptions { dedupe: true, ..Default::default() }).unwrap();
        assert_eq!(d.micro.counts, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn positional_mode() {
        let tokens: Vec<String> = "Bob met Bob in Paris".split(' ').map(String::from).collect();
        let mut r = rec(
            0,
            out(&[("person", &["Bob", "Bob"]), ("location", &["Paris"])]),
            out(&[("person", &["bob", "Alice"]), ("location", &["Paris"])]),
        );
        r.tokens = tokens;
        let opts = EvalOptions { mode: MatchMode::Positional, ..Default::default() };
        let rep = score(std::slice::from_ref(&r), opts).unwrap();
        assert_eq!(rep.micro.counts, Counts { tp: 2, fp: 1, fn_: 1 });
        r.tokens.clear();
        assert_eq!(score(&[r], opts), Err(EvalError::MissingTokens(0)));
    }

    #[test]
    fn table_has_two_decimals() {
        let r = score(
            &[rec(0, out(&[("person", &["obama"])]), out(&[("person", &["obama", "biden"])]))],
            EvalOptions::default(),
        )
        .unwrap();
        let t = r.to_table();
        assert!(t.contains("66.67"), "{t}");
        assert!(t.contains("50.00"));
    }
}
