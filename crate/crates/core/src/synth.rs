//! Deterministic stand-ins for data and models that are not available offline.
//!
//! * [`Domain`] corpora with the CoNLL-2003 / CrossNER split sizes and type inventories,
//!   generated from per-type lexicons (including surfaces with commas, quotes, brackets and
//!   apostrophes) and written in the CrossNER BIO layout.
//! * [`HashedEncoder`], a contextual subword encoder built from seeded hash vectors.
//! * [`fig3_fixture`], a hand-assigned 8-d embedding file for the "13-inch macbook" example.
//! * [`contrast_corpus`], a store where word-level and sentence-level retrieval disagree.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{fold_key, load_schema, render_bio, EntitySchema, LabeledSentence};
use crate::embedder::{
    default_stopwords, EmbedError, Embedder, EmbedderSpec, EmbeddingProvider, Encoding, EncodingRecord,
    PrecomputedProvider, ProviderSpec, TokenVector,
};
use crate::io::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Conll2003,
    Politics,
    Science,
    Music,
    Literature,
    Ai,
}

/// Train / dev / test sentence counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::Conll2003,
        Domain::Politics,
        Domain::Science,
        Domain::Music,
        Domain::Literature,
        Domain::Ai,
    ];
    pub const CROSSNER: [Domain; 5] = [
        Domain::Politics,
        Domain::Science,
        Domain::Music,
        Domain::Literature,
        Domain::Ai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Conll2003 => "conll2003",
            Domain::Politics => "politics",
            Domain::Science => "science",
            Domain::Music => "music",
            Domain::Literature => "literature",
            Domain::Ai => "ai",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name.to_lowercase())
    }

    pub fn sizes(self) -> SplitSizes {
        let (train, dev, test) = match self {
            Domain::Conll2003 => (14987, 3466, 3684),
            Domain::Politics => (200, 541, 651),
            Domain::Science => (200, 450, 543),
            Domain::Music => (100, 380, 456),
            Domain::Literature => (100, 400, 416),
            Domain::Ai => (100, 350, 431),
        };
        SplitSizes { train, dev, test }
    }

    pub fn schema_json(self) -> &'static str {
        match self {
            Domain::Conll2003 => include_str!("../data/schemas/conll2003.json"),
            Domain::Politics => include_str!("../data/schemas/politics.json"),
            Domain::Science => include_str!("../data/schemas/science.json"),
            Domain::Music => include_str!("../data/schemas/music.json"),
            Domain::Literature => include_str!("../data/schemas/literature.json"),
            Domain::Ai => include_str!("../data/schemas/ai.json"),
        }
    }

    pub fn schema(self) -> EntitySchema {
        load_schema(self.schema_json()).expect("bundled schema is valid")
    }

    /// Tag spelling used in the BIO files (`PER`, `politicalparty`, `programlang`, ...).
    pub fn bio_label(self, type_name: &str) -> String {
        if self == Domain::Conll2003 {
            return match type_name {
                "person" => "PER",
                "organisation" => "ORG",
                "location" => "LOC",
                _ => "MISC",
            }
            .to_string();
        }
        let schema = self.schema();
        let t = schema.resolve(type_name);
        t.and_then(|t| t.aliases.first().cloned())
            .unwrap_or_else(|| fold_key(type_name))
    }

    fn fillers(self) -> &'static [&'static str] {
        match self {
            Domain::Conll2003 => &[
                "said", "on", "shares", "percent", "market", "Tuesday", "reported", "after", "officials",
                "traded", "points", "week", "talks", "against", "told", "newspaper", "results", "second",
                "half", "division", "won", "beat", "police", "government", "prices", "rose", "fell",
            ],
            Domain::Politics => &[
                "campaigned", "against", "the", "bill", "vote", "seat", "parliament", "leader", "elected",
                "coalition", "minister", "served", "as", "during", "opposition", "won", "majority", "term",
                "reform", "policy", "member", "of", "supported",
            ],
            Domain::Science => &[
                "discovered", "studied", "the", "structure", "of", "published", "in", "experiment",
                "measured", "observed", "catalyses", "reaction", "binds", "researchers", "at", "found",
                "orbit", "surface", "molecule", "was", "awarded", "for", "work", "on",
            ],
            Domain::Music => &[
                "released", "the", "single", "recorded", "album", "toured", "with", "played", "on",
                "featured", "chart", "performed", "at", "signed", "to", "produced", "by", "debut",
                "vocals", "guitar", "lyrics", "live", "in",
            ],
            Domain::Literature => &[
                "wrote", "the", "novel", "published", "in", "translated", "into", "won", "essay",
                "collection", "of", "stories", "poet", "reviewed", "by", "author", "first", "edition",
                "set", "character", "narrator", "appeared",
            ],
            Domain::Ai => &[
                "proposed", "the", "method", "trained", "on", "dataset", "achieves", "state", "of", "art",
                "using", "model", "network", "evaluated", "with", "presented", "at", "implemented", "in",
                "learning", "benchmark", "accuracy", "improves",
            ],
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "ri", "ven", "tor", "mi", "sa", "bel", "dra", "nu", "qua", "zen", "ar", "lis", "mo",
    "ter", "vi", "don", "hal", "ru", "pe", "xan", "or", "git", "fel", "ba", "cho", "wen", "ly", "sto",
];

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    if let Some(first) = w.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    w
}

fn seed_surfaces(type_name: &str) -> &'static [&'static str] {
    match type_name {
        "person" => &["Maria Lopez", "O'Brien", "Smith, Jr.", "Chen Wei", "Anna"],
        "politician" => &["Angela Merkel", "Tony Blair", "Nelson Mandela", "Jacinda Ardern"],
        "organisation" => &["United Nations", "Reuters", "World Bank", "Red Cross", "AT&T"],
        "political party" => &["Labour Party", "Green Party", "Christian Democratic Union"],
        "event" => &["Yalta Conference", "Woodstock", "World Cup", "Solvay Conference"],
        "election" => &["1997 general election", "2016 referendum", "presidential election"],
        "country" => &["Germany", "Brazil", "Japan", "Canada", "Nigeria", "Côte d'Ivoire"],
        "location" => &["Paris", "Lake Victoria", "Westminster", "Carnegie Hall", "São Paulo"],
        "misc" => &["German", "[Remastered]", "Conservative", "Olympic", "{draft}"],
        "scientist" => &["Marie Curie", "Alan Turing", "Rosalind Franklin", "Niels Bohr"],
        "university" => &["University of Cambridge", "MIT", "Stanford University", "ETH Zurich"],
        "discipline" => &["organic chemistry", "astrophysics", "genetics", "topology"],
        "enzyme" => &["lactase", "DNA polymerase", "lysozyme", "catalase"],
        "protein" => &["hemoglobin", "insulin", "collagen", "p53"],
        "chemical compound" => &["sodium chloride", "ethanol", "benzene", "H2O"],
        "chemical element" => &["helium", "carbon", "uranium", "iron"],
        "astronomical object" => &["Andromeda Galaxy", "Mars", "Halley's Comet", "Sirius"],
        "academic journal" => &["Nature", "Physical Review Letters", "The Lancet"],
        "award" => &["Nobel Prize in Physics", "Grammy Award", "Booker Prize", "Turing Award"],
        "theory" => &["general relativity", "Bell's theorem", "string theory"],
        "music genre" => &["jazz", "hip hop", "rock 'n' roll", "bossa nova"],
        "song" => &["\"Heroes\"", "Bohemian Rhapsody", "Yesterday", "Hey Jude"],
        "band" => &["The Beatles", "Radiohead", "Earth, Wind & Fire", "ABBA"],
        "album" => &["Abbey Road", "OK Computer", "Kind of Blue", "Thriller"],
        "musical artist" => &["Nina Simone", "David Bowie", "Miles Davis", "Björk"],
        "musical instrument" => &["cello", "guitar", "sitar", "trumpet"],
        "book" => &["Middlemarch", "Dr. No: Redux", "War and Peace", "Beloved"],
        "writer" => &["Toni Morrison", "Chinua Achebe", "Virginia Woolf", "Jorge Luis Borges"],
        "poem" => &["The Raven", "Ozymandias", "The Waste Land"],
        "magazine" => &["The New Yorker", "Granta", "The Paris Review"],
        "literary genre" => &["science fiction", "magical realism", "gothic novel"],
        "field" => &["machine learning", "computer vision", "natural language processing"],
        "task" => &["image classification", "named entity recognition", "speech recognition"],
        "product" => &["AlphaGo", "TensorFlow", "Siri", "Watson"],
        "algorithm" => &["backpropagation", "k-means", "random forest", "Q-learning"],
        "researcher" => &["Geoffrey Hinton", "Yann LeCun", "Fei-Fei Li", "Judea Pearl"],
        "metrics" => &["F1 score", "BLEU", "mean squared error", "accuracy"],
        "programming language" => &["Python", "C++", "Lisp", "C#"],
        "conference" => &["NeurIPS", "ICML", "ACL", "AAAI"],
        _ => &["Thing"],
    }
}

fn generated_surface<R: Rng>(type_name: &str, rng: &mut R) -> String {
    let n = pseudo_word(rng);
    let low = n.to_lowercase();
    let year = rng.gen_range(1950..2024);
    match type_name {
        "person" | "politician" | "scientist" | "writer" | "researcher" | "musical artist" => {
            format!("{n} {}", pseudo_word(rng))
        }
        "organisation" => format!("{n} {}", ["Group", "Institute", "Corporation", "Agency"].choose(rng).expect("non-empty")),
        "political party" => format!("{n} Party"),
        "election" => format!("{year} {n} election"),
        "event" => format!("{n} {}", ["Summit", "Festival", "Accord", "Games"].choose(rng).expect("non-empty")),
        "country" => format!("{n}ia"),
        "location" => [n.clone(), format!("{n} City"), format!("Lake {n}")].choose(rng).expect("non-empty").clone(),
        "misc" => format!("{n}ian"),
        "university" => format!("University of {n}"),
        "discipline" => format!("{low}ology"),
        "enzyme" => format!("{low}ase"),
        "protein" => format!("{low}in"),
        "chemical compound" => format!("{low}ium {}ide", pseudo_word(rng).to_lowercase()),
        "chemical element" => format!("{low}ium"),
        "astronomical object" => format!("{n} Nebula"),
        "academic journal" => format!("Journal of {n} Studies"),
        "award" => format!("{n} {}", ["Prize", "Medal", "Award"].choose(rng).expect("non-empty")),
        "theory" => format!("{n}'s law"),
        "music genre" => format!("{low} rock"),
        "song" => format!("{n} Nights"),
        "band" => format!("The {n}s"),
        "album" => format!("{n} Sessions"),
        "musical instrument" => format!("{low} harp"),
        "book" => format!("The {n} of {}", pseudo_word(rng)),
        "poem" => format!("Ode to {n}"),
        "magazine" => format!("The {n} Review"),
        "literary genre" => format!("{low} fiction"),
        "field" => format!("{low} learning"),
        "task" => format!("{low} detection"),
        "product" => format!("{n}Net"),
        "algorithm" => format!("{n}-{}", rng.gen_range(2..100)),
        "metrics" => format!("{n} score"),
        "programming language" => format!("{n}Script"),
        "conference" => format!("{} {year}", n.to_uppercase()),
        _ => n,
    }
}

fn surface_for<R: Rng>(type_name: &str, rng: &mut R) -> String {
    if rng.gen_bool(0.6) {
        seed_surfaces(type_name).choose(rng).expect("non-empty").to_string()
    } else {
        generated_surface(type_name, rng)
    }
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// `n` labeled sentences for `domain`, ids `0..n`.
pub fn generate_sentences(domain: Domain, n: usize, seed: u64) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[domain.name().as_bytes(), &seed.to_le_bytes()]));
    let schema = domain.schema();
    let types = schema.names();
    let fillers = domain.fillers();
    let glue = ["the", "of", "in", "and", "a", "with", "to"];
    (0..n as u64)
        .map(|id| {
            let n_entities = *[0, 1, 1, 1, 2, 2, 2, 3, 3, 4].choose(&mut rng).expect("non-empty");
            let mut tokens: Vec<String> = Vec::new();
            let mut spans: Vec<(String, usize, usize)> = Vec::new();
            let mut last: Option<(String, String)> = None;
            for _ in 0..n_entities {
                for _ in 0..rng.gen_range(1..=3) {
                    let w = if rng.gen_bool(0.3) { glue.choose(&mut rng) } else { fillers.choose(&mut rng) };
                    tokens.push(w.expect("non-empty").to_string());
                }
                // Occasional repeated mention of the previous entity.
                let (t, surface) = match &last {
                    Some(prev) if rng.gen_bool(0.08) => prev.clone(),
                    _ => {
                        let t = types.choose(&mut rng).expect("non-empty").clone();
                        let s = surface_for(&t, &mut rng);
                        (t, s)
                    }
                };
                let start = tokens.len();
                tokens.extend(surface.split_whitespace().map(String::from));
                spans.push((t.clone(), start, tokens.len()));
                last = Some((t, surface));
            }
            for _ in 0..rng.gen_range(1..=4) {
                tokens.push(fillers.choose(&mut rng).expect("non-empty").to_string());
            }
            tokens.push(".".to_string());
            let refs: Vec<(&str, usize, usize)> = spans.iter().map(|(t, a, b)| (t.as_str(), *a, *b)).collect();
            LabeledSentence::new(id, tokens, &refs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub domain: Domain,
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

/// A full train/dev/test corpus with the domain's split sizes.
pub fn generate_domain(domain: Domain, seed: u64) -> SyntheticDomain {
    let sizes = domain.sizes();
    let split = |name: &str, n| generate_sentences(domain, n, hash64(&[name.as_bytes(), &seed.to_le_bytes()]));
    SyntheticDomain {
        domain,
        train: split("train", sizes.train),
        dev: split("dev", sizes.dev),
        test: split("test", sizes.test),
    }
}

fn relabel(domain: Domain, sentences: &[LabeledSentence]) -> Vec<LabeledSentence> {
    sentences
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for span in &mut s.spans {
                span.entity_type = domain.bio_label(&span.entity_type);
            }
            s
        })
        .collect()
}

/// Writes `<root>/<domain>/{train,dev,test}.txt` (BIO) and `<root>/<domain>/schema.json`.
pub fn write_domain(root: &Path, corpus: &SyntheticDomain) -> Result<(), IoError> {
    let dir = root.join(corpus.domain.name());
    for (name, sentences) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        io::write_string(&dir.join(format!("{name}.txt")), &render_bio(&relabel(corpus.domain, sentences)))?;
    }
    io::write_string(&dir.join("schema.json"), corpus.domain.schema_json())
}

/// Deterministic contextual encoder for offline runs.
///
/// Each word longer than six characters is split into four-character pieces. A piece vector
/// mixes hash vectors of the word (dominant), the piece, and the neighbouring words, so the
/// same word in different sentences has a high but not perfect cosine. A zero-length `[CLS]`
/// token carries no word. The sentence vector is the mean of the piece vectors.
#[derive(Debug, Clone, Copy)]
pub struct HashedEncoder {
    dim: usize,
    seed: u64,
}

impl HashedEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    fn hash_vector(&self, kind: &str, key: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[&self.seed.to_le_bytes(), kind.as_bytes(), key.as_bytes()]));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl EmbeddingProvider for HashedEncoder {
    fn encode(&self, text: &str) -> Result<Encoding, EmbedError> {
        let words: Vec<&str> = text.split(' ').collect();
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let mut tokens = vec![TokenVector {
            text: "[CLS]".into(),
            start_char: 0,
            end_char: 0,
            vector: self.hash_vector("cls", "").iter().map(|&x| x as f32).collect(),
        }];
        let mut sentence = vec![0f64; self.dim];
        let mut pos = 0usize;
        for (i, w) in words.iter().enumerate() {
            let chars: Vec<char> = w.chars().collect();
            let word_vec = self.hash_vector("w", &lower[i]);
            let prev = if i > 0 { lower[i - 1].as_str() } else { "<s>" };
            let next = lower.get(i + 1).map_or("</s>", String::as_str);
            let ctx = self.hash_vector("c", &format!("{prev}|{next}"));
            let pieces: Vec<(usize, usize)> = if chars.len() > 6 {
                (0..chars.len()).step_by(4).map(|s| (s, (s + 4).min(chars.len()))).collect()
            } else {
                vec![(0, chars.len())]
            };
            for (a, b) in pieces {
                if a == b {
                    continue;
                }
                let piece: String = chars[a..b].iter().collect::<String>().to_lowercase();
                let pv = self.hash_vector("p", &piece);
                let v: Vec<f64> = (0..self.dim)
                    .map(|d| 0.85 * word_vec[d] + 0.3 * pv[d] + 0.3 * ctx[d])
                    .collect();
                for (s, x) in sentence.iter_mut().zip(&v) {
                    *s += x;
                }
                tokens.push(TokenVector {
                    text: piece,
                    start_char: pos + a,
                    end_char: pos + b,
                    vector: v.iter().map(|&x| x as f32).collect(),
                });
            }
            pos += chars.len() + 1;
        }
        let n = (tokens.len() - 1).max(1) as f64;
        Ok(Encoding {
            tokens,
            sentence_vector: sentence.iter().map(|x| (x / n) as f32).collect(),
        })
    }
}

/// An embedder over [`HashedEncoder`] with the default stop-word list.
pub fn hashed_embedder(dim: usize, seed: u64) -> Embedder {
    Embedder::from_spec(EmbedderSpec {
        provider: ProviderSpec::Hashed { seed },
        model_name: format!("hashed-{dim}"),
        dimension: dim,
        stopwords: default_stopwords(),
    })
    .expect("hashed provider needs no I/O")
}

fn schema_product_time() -> EntitySchema {
    EntitySchema::from_pairs(&[
        ("product", "An item that can be bought or sold. E.g. 13-inch macbook."),
        ("time", "A time expression. E.g. tomorrow."),
    ])
    .expect("valid schema")
}

/// The "13-inch macbook" retrieval example as a precomputed 8-d embedding file.
#[derive(Debug, Clone)]
pub struct Fig3Fixture {
    pub schema: EntitySchema,
    pub query: LabeledSentence,
    /// Candidate 1 ("... table from store") and candidate 2 ("Show me a 15-inch macbook").
    pub store: Vec<LabeledSentence>,
    pub records: Vec<EncodingRecord>,
}

impl Fig3Fixture {
    pub fn embedder(&self) -> Embedder {
        let spec = EmbedderSpec {
            provider: ProviderSpec::PrecomputedFile { path: "fig3.jsonl".into() },
            model_name: "fig3-fixture".into(),
            dimension: 8,
            stopwords: default_stopwords(),
        };
        let provider = PrecomputedProvider::from_records(self.records.clone()).expect("fixture vectors are non-zero");
        Embedder::with_provider(spec, std::sync::Arc::new(provider)).expect("dimension 8")
    }
}

/// Axes: 0 purchase, 1 shop, 2 laptop, 3 size, 4 furniture, 5 request, 6 function word,
/// 7 context. Words shared across sentences differ on the context axis.
pub fn fig3_fixture() -> Fig3Fixture {
    fn v(pairs: &[(usize, f64)]) -> [f64; 8] {
        let mut out = [0.0; 8];
        for &(i, x) in pairs {
            out[i] = x;
        }
        out
    }
    let sentences: [(&str, Vec<(&str, [f64; 8])>, (usize, usize)); 3] = [
        (
            "query",
            vec![
                ("I", v(&[(6, 1.0)])),
                ("want", v(&[(0, 1.0), (6, 0.3)])),
                ("to", v(&[(6, 1.0), (7, 0.1)])),
                ("buy", v(&[(0, 1.0), (7, 0.2)])),
                ("a", v(&[(6, 1.0), (7, 0.2)])),
                ("13-inch", v(&[(2, 0.3), (3, 1.0)])),
                ("macbook", v(&[(2, 1.0), (3, 0.2), (7, 0.1)])),
                ("from", v(&[(1, 0.3), (6, 1.0)])),
                ("store", v(&[(0, 0.2), (1, 1.0)])),
            ],
            (5, 7),
        ),
        (
            "candidate 1",
            vec![
                ("I", v(&[(6, 1.0)])),
                ("want", v(&[(0, 1.0), (6, 0.3), (7, 0.7)])),
                ("to", v(&[(6, 1.0), (7, 0.1)])),
                ("buy", v(&[(0, 1.0), (7, 0.8)])),
                ("a", v(&[(6, 1.0), (7, 0.2)])),
                ("table", v(&[(4, 1.0)])),
                ("from", v(&[(1, 0.3), (6, 1.0)])),
                ("store", v(&[(0, 0.2), (1, 1.0), (7, 0.6)])),
            ],
            (5, 6),
        ),
        (
            "candidate 2",
            vec![
                ("Show", v(&[(5, 1.0)])),
                ("me", v(&[(5, 0.3), (6, 1.0)])),
                ("a", v(&[(6, 1.0), (7, 0.2)])),
                ("15-inch", v(&[(2, 0.3), (3, 1.0), (7, 0.3)])),
                ("macbook", v(&[(2, 1.0), (3, 0.2), (7, 0.35)])),
            ],
            (3, 5),
        ),
    ];
    let pieces = |w: &str| -> Vec<&'static str> {
        match w {
            "13-inch" => vec!["13", "-", "inch"],
            "15-inch" => vec!["15", "-", "inch"],
            "macbook" => vec!["mac", "book"],
            _ => vec![""],
        }
    };

    let mut records = Vec::new();
    let mut labeled = Vec::new();
    for (id, (_, words, (a, b))) in sentences.iter().enumerate() {
        let tokens: Vec<String> = words.iter().map(|(w, _)| w.to_string()).collect();
        let s = LabeledSentence::new(id as u64, tokens, &[("product", *a, *b)]);
        let mut toks = vec![TokenVector {
            text: "[CLS]".into(),
            start_char: 0,
            end_char: 0,
            vector: v(&[(6, 0.5), (7, 0.5)]).iter().map(|&x| x as f32).collect(),
        }];
        let mut sum = [0.0f64; 8];
        let mut pos = 0;
        for (w, vec) in words {
            for (d, x) in sum.iter_mut().enumerate() {
                *x += vec[d];
            }
            let ps = pieces(w);
            let mut off = 0;
            for (k, p) in ps.iter().enumerate() {
                let text = if p.is_empty() { w.to_string() } else { p.to_string() };
                let len = text.chars().count();
                // Pieces wobble on the furniture axis; the wobble cancels in the word mean.
                let wobble = 0.05 * (k as f64 - (ps.len() - 1) as f64 / 2.0);
                let mut pv = *vec;
                pv[4] += wobble;
                toks.push(TokenVector {
                    text,
                    start_char: pos + off,
                    end_char: pos + off + len,
                    vector: pv.iter().map(|&x| x as f32).collect(),
                });
                off += len;
            }
            pos += w.chars().count() + 1;
        }
        records.push(EncodingRecord {
            text: s.text(),
            tokens: toks,
            sentence_vector: sum.iter().map(|&x| x as f32).collect(),
        });
        labeled.push(s);
    }
    let query = labeled.remove(0);
    Fig3Fixture {
        schema: schema_product_time(),
        query,
        store: labeled,
        records,
    }
}

/// Store and queries where the nearest sentence and the nearest entity disagree.
#[derive(Debug, Clone)]
pub struct ContrastCorpus {
    pub schema: EntitySchema,
    /// `"I want to buy a <F> from store"` and `"Show me a <P>"` for each pair, ids from 0.
    pub store: Vec<LabeledSentence>,
    /// `"I want to buy a <P> from store"`, ids from 0.
    pub queries: Vec<LabeledSentence>,
}

pub fn contrast_corpus(pairs: usize, seed: u64) -> ContrastCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[b"contrast", &seed.to_le_bytes()]));
    let mut used = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        // One encoder piece, so the entity does not dominate the pooled sentence vector.
        let w: String = pseudo_word(rng).chars().take(6).collect();
        if used.insert(w.clone()) {
            return w;
        }
    };
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    let mut store = Vec::new();
    let mut queries = Vec::new();
    for i in 0..pairs {
        let f = fresh(&mut rng);
        let p = fresh(&mut rng);
        store.push(LabeledSentence::new(
            store.len() as u64,
            words(&format!("I want to buy a {f} from store")),
            &[("product", 5, 6)],
        ));
        store.push(LabeledSentence::new(store.len() as u64, words(&format!("Show me a {p}")), &[("product", 3, 4)]));
        queries.push(LabeledSentence::new(
            i as u64,
            words(&format!("I want to buy a {p} from store")),
            &[("product", 5, 6)],
        ));
    }
    ContrastCorpus {
        schema: schema_product_time(),
        store,
        queries,
    }
}
