//! The run configuration shared by every subcommand.
//!
//! One TOML file; relative paths resolve against the file's directory.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! corpus_dir = "data/music"      # train.txt, dev.txt, test.txt
//! schema = "data/music/schema.json"
//! work_dir = "work/music"
//! output_dir = "out/music"
//!
//! [embedder]
//! provider = "hashed"
//! dimension = 64
//!
//! [pipeline.retriever]
//! k = 5
//! mode = "word-level"
//!
//! [pipeline.generator]
//! backend = "mock-gold"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::corpus::{load_schema, EntitySchema};
use crate::embedder::{parse_stopword_list, EmbedderSpec, ProviderSpec};
use crate::evaluation::EvalOptions;
use crate::io::sha256_hex;
use crate::pipeline::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: invalid config: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `train.txt`, `dev.txt` (optional) and `test.txt` in BIO format.
    pub corpus_dir: PathBuf,
    pub schema: PathBuf,
    /// Parsed corpus, indexes and manifests.
    pub work_dir: PathBuf,
    /// Predictions, finetune data and reports.
    pub output_dir: PathBuf,
    /// Replaces the embedder's stop-word list; one word per line.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Splits that make up the retrieval store.
    pub splits: Vec<String>,
    /// Store size for the store/finetune split used by `augment`.
    pub finetune_store_size: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            splits: vec!["train".into(), "dev".into()],
            finetune_store_size: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub embedder: EmbedderSpec,
    #[serde(default)]
    pub store: StoreConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    /// Drives the index k-means, the store/finetune split and augmentation.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Parses `text` and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        cfg.resolve(base)?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) -> Result<(), ConfigError> {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.paths.corpus_dir);
        abs(&mut self.paths.schema);
        abs(&mut self.paths.work_dir);
        abs(&mut self.paths.output_dir);
        if let Some(p) = &mut self.paths.stopwords {
            abs(p);
            let text = std::fs::read_to_string(&*p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            self.embedder.stopwords = parse_stopword_list(&text);
        }
        if let ProviderSpec::PrecomputedFile { path } = &mut self.embedder.provider {
            abs(path);
        }
        self.apply_seed();
        self.validate()
    }

    /// Copies the top-level seed into every seeded stage.
    pub fn apply_seed(&mut self) {
        self.pipeline.index.seed = self.seed;
        self.augment.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pipeline.retriever.k == 0 {
            return Err(ConfigError::Invalid("pipeline.retriever.k must be at least 1".into()));
        }
        if self.embedder.dimension == 0 {
            return Err(ConfigError::Invalid("embedder.dimension must be at least 1".into()));
        }
        for s in &self.store.splits {
            if !["train", "dev", "test"].contains(&s.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown store split {s:?}")));
            }
        }
        if self.store.splits.is_empty() {
            return Err(ConfigError::Invalid("store.splits is empty".into()));
        }
        self.pipeline
            .generator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load_schema(&self) -> Result<EntitySchema, ConfigError> {
        let text = std::fs::read_to_string(&self.paths.schema).map_err(|e| ConfigError::Read {
            path: self.paths.schema.display().to_string(),
            message: e.to_string(),
        })?;
        load_schema(&text).map_err(|e| ConfigError::Parse {
            path: self.paths.schema.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`].
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::Backend;
    use crate::retriever::RetrievalMode;

    const MINIMAL: &str = r#"
seed = 3
[paths]
corpus_dir = "c"
schema = "c/schema.json"
work_dir = "w"
output_dir = "/abs/out"
[embedder]
provider = "hashed"
dimension = 16
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.paths.corpus_dir, Path::new("/base/c"));
        assert_eq!(cfg.paths.output_dir, Path::new("/abs/out"));
        assert_eq!(cfg.pipeline.retriever.k, 5);
        assert_eq!(cfg.pipeline.retriever.mode, RetrievalMode::WordLevel);
        assert_eq!(cfg.pipeline.generator.backend, Backend::MockGold);
        assert_eq!(cfg.store.splits, ["train", "dev"]);
        assert_eq!(cfg.augment.seed, 3);
        assert_eq!(cfg.pipeline.index.seed, 3);
        assert_eq!(cfg.augment.dropout_fraction, 0.3);
    }

    #[test]
    fn nested_overrides() {
        let text = format!(
            "{MINIMAL}\n[pipeline.retriever]\nk = 10\nmode = \"sentence-level\"\n[pipeline.generator]\nbackend = \"mock-echo-nearest\"\n[eval]\ndedupe = true\n"
        );
        let cfg = RunConfig::from_toml(&text, Path::new("/")).unwrap();
        assert_eq!(cfg.pipeline.retriever.k, 10);
        assert_eq!(cfg.pipeline.retriever.mode, RetrievalMode::SentenceLevel);
        assert_eq!(cfg.pipeline.generator.backend, Backend::MockEchoNearest);
        assert!(cfg.eval.dedupe);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let text = format!("{MINIMAL}\n[store]\nsplits = [\"validation\"]\n");
        assert!(matches!(RunConfig::from_toml(&text, Path::new("/")), Err(ConfigError::Invalid(_))));
        let text = MINIMAL.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(matches!(RunConfig::from_toml(&text, Path::new("/")), Err(ConfigError::Parse { .. })));
        let text = format!("{MINIMAL}\n[pipeline.retriever]\nk = 0\n");
        assert!(RunConfig::from_toml(&text, Path::new("/")).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::from_toml(MINIMAL, Path::new("/x")).unwrap();
        let b = RunConfig::from_toml(MINIMAL, Path::new("/x")).unwrap();
        let c = RunConfig::from_toml(&MINIMAL.replace("seed = 3", "seed = 4"), Path::new("/x")).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
