use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{l2_normalize, EmbedError, Encoding, EmbeddingProvider, TokenVector};

/// One line of a precomputed embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingRecord {
    pub text: String,
    pub tokens: Vec<TokenVector>,
    pub sentence_vector: Vec<f32>,
}

/// Serves encodings by exact sentence text. All vectors are normalized at load time.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedProvider {
    entries: HashMap<String, Encoding>,
}

impl PrecomputedProvider {
    pub fn from_records(records: Vec<EncodingRecord>) -> Result<Self, EmbedError> {
        let mut entries = HashMap::with_capacity(records.len());
        for mut rec in records {
            for t in &mut rec.tokens {
                if t.end_char < t.start_char {
                    return Err(EmbedError::Format(format!(
                        "token {:?} in {:?} has end before start",
                        t.text, rec.text
                    )));
                }
                if !l2_normalize(&mut t.vector) {
                    return Err(EmbedError::Format(format!(
                        "zero vector for token {:?} in {:?}",
                        t.text, rec.text
                    )));
                }
            }
            if !l2_normalize(&mut rec.sentence_vector) {
                return Err(EmbedError::Format(format!(
                    "zero sentence vector for {:?}",
                    rec.text
                )));
            }
            entries.entry(rec.text).or_insert(Encoding {
                tokens: rec.tokens,
                sentence_vector: rec.sentence_vector,
            });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, text: &str) -> bool {
        self.entries.contains_key(text)
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn encode(&self, text: &str) -> Result<Encoding, EmbedError> {
        self.entries
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::MissingEntry(text.to_string()))
    }
}

/// Loads a JSON-lines embedding file: one `{text, tokens, sentence_vector}` per line.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedProvider, EmbedError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EmbedError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EncodingRecord = serde_json::from_str(line)
            .map_err(|e| EmbedError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    PrecomputedProvider::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::l2_norm;
    use std::io::Write;

    fn line(text: &str, scale: f32) -> String {
        serde_json::to_string(&EncodingRecord {
            text: text.into(),
            tokens: vec![TokenVector {
                text: text.into(),
                start_char: 0,
                end_char: text.chars().count(),
                vector: vec![scale, 2.0 * scale, -scale],
            }],
            sentence_vector: vec![scale * 3.0, 0.5, 1.0],
        })
        .unwrap()
    }

    #[test]
    fn loads_and_normalizes() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (t, s) in [("alpha", 2.0), ("beta", 7.5), ("gamma", 0.01)] {
            writeln!(f, "{}", line(t, s)).unwrap();
        }
        let p = load_precomputed(f.path()).unwrap();
        assert_eq!(p.len(), 3);
        for t in ["alpha", "beta", "gamma"] {
            let enc = p.encode(t).unwrap();
            assert!((l2_norm(&enc.sentence_vector) - 1.0).abs() < 1e-6);
            assert!((l2_norm(&enc.tokens[0].vector) - 1.0).abs() < 1e-6);
        }
        assert!(matches!(p.encode("delta"), Err(EmbedError::MissingEntry(_))));
    }

    #[test]
    fn format_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"text\": 1}}").unwrap();
        assert!(matches!(load_precomputed(f.path()), Err(EmbedError::Format(_))));

        let mut z = tempfile::NamedTempFile::new().unwrap();
        writeln!(z, "{}", line("zero", 0.0).replace("0.5", "0.0").replace("1.0", "0.0")).unwrap();
        assert!(matches!(load_precomputed(z.path()), Err(EmbedError::Format(_))));

        assert!(matches!(
            load_precomputed(Path::new("/nonexistent/emb.jsonl")),
            Err(EmbedError::ProviderUnavailable(_))
        ));
    }
}
