//! Inflection corpora: SIGMORPHON-style parsing, the lemma-copy variant,
//! nonce-word generation and synthetic languages with planted rules.

mod nonce;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::phonology::{
    split_segments, Feature, FeatureTable, PhonClass, PhonemeInventory, PhonologyError,
};

pub use nonce::{generate_nonce, NonceConfig, NonceLexicon, NONCE_TEMPLATES};
pub use synth::{synth_language, Rule, SynthRules, SYNTH_CONSONANTS, SYNTH_VOWELS};

/// Tag that replaces every morphosyntactic attribute in the copy task.
pub const COPY_TAG: &str = "COPY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("could not balance harmony labels for {feature} ({class}) within the draw budget")]
    BalanceFailure { feature: Feature, class: PhonClass },
    #[error("configuration error: {0}")]
    Config(String),
}

/// One (lemma, tags, inflected form) triple, phonemes already segmented.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InflectionExample {
    pub lemma: Vec<String>,
    pub tags: Vec<String>,
    pub target: Vec<String>,
}

impl InflectionExample {
    pub fn new(
        lemma: Vec<String>,
        tags: Vec<String>,
        target: Vec<String>,
    ) -> Result<Self, CorpusError> {
        if lemma.is_empty() || target.is_empty() || tags.is_empty() {
            return Err(CorpusError::Precondition(
                "lemma, tags and target must be non-empty".into(),
            ));
        }
        Ok(Self {
            lemma,
            tags,
            target,
        })
    }
}

/// A language's inflection data with its derived inventory and tag set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    language: String,
    examples: Vec<InflectionExample>,
    inventory: PhonemeInventory,
    tags: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus whose inventory and tag set are the unions over `examples`.
    pub fn new(
        language: impl Into<String>,
        examples: Vec<InflectionExample>,
    ) -> Result<Self, CorpusError> {
        if examples.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut inventory = PhonemeInventory::default();
        let mut tags = BTreeSet::new();
        for ex in &examples {
            for p in ex.lemma.iter().chain(&ex.target) {
                inventory.insert(p.clone());
            }
            tags.extend(ex.tags.iter().cloned());
        }
        Ok(Self {
            language: language.into(),
            examples,
            inventory,
            tags,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn examples(&self) -> &[InflectionExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    pub fn tag_vocabulary(&self) -> &BTreeSet<String> {
        &self.tags
    }

    /// True when every example is a copy example (`COPY` tags, target == lemma).
    pub fn is_copy_task(&self) -> bool {
        self.examples
            .iter()
            .all(|e| e.target == e.lemma && e.tags.iter().all(|t| t == COPY_TAG))
    }

    /// SIGMORPHON TSV text: `lemma\ttarget\tTAG;TAG` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&e.lemma.concat());
            out.push('\t');
            out.push_str(&e.target.concat());
            out.push('\t');
            out.push_str(&e.tags.join(";"));
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_tsv()).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Hex SHA-256 over the language code and TSV serialization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.language.as_bytes());
        h.update([0u8]);
        h.update(self.to_tsv().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every phoneme must be covered by `table`.
    pub fn check_against(&self, table: &FeatureTable) -> Result<(), CorpusError> {
        match self.inventory.missing_from(table).into_iter().next() {
            Some(p) => Err(PhonologyError::MissingPhoneme(p).into()),
            None => Ok(()),
        }
    }

    /// Seeded split by example index: `dev_fraction` of the examples (at least
    /// one) go to the second corpus. Both halves keep the full inventory and
    /// tag set.
    pub fn split(&self, dev_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
        if self.examples.len() < 2 {
            return Err(CorpusError::Precondition(
                "need at least two examples to split".into(),
            ));
        }
        let mut idx: Vec<usize> = (0..self.examples.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_dev = ((self.examples.len() as f64 * dev_fraction).round() as usize)
            .clamp(1, self.examples.len() - 1);
        let (dev_idx, train_idx) = idx.split_at(n_dev);
        let mut dev_idx = dev_idx.to_vec();
        let mut train_idx = train_idx.to_vec();
        dev_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |ids: &[usize]| Corpus {
            language: self.language.clone(),
            examples: ids.iter().map(|&i| self.examples[i].clone()).collect(),
            inventory: self.inventory.clone(),
            tags: self.tags.clone(),
        };
        Ok((pick(&train_idx), pick(&dev_idx)))
    }
}

/// Grapheme → IPA substitution table applied by longest match.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphemeMap {
    map: BTreeMap<String, String>,
    longest: usize,
}

impl GraphemeMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let map: BTreeMap<String, String> = pairs.into_iter().collect();
        let longest = map.keys().map(|k| k.chars().count()).max().unwrap_or(0);
        Self { map, longest }
    }

    /// Parses `<grapheme>\t<IPA>` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(g), Some(ipa), None) if !g.is_empty() => {
                    pairs.push((g.to_string(), ipa.to_string()))
                }
                _ => {
                    return Err(CorpusError::Parse {
                        line: i + 1,
                        message: "expected <grapheme>\\t<IPA>".into(),
                    })
                }
            }
        }
        Ok(Self::new(pairs))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&read_text(path)?)
    }

    pub fn apply(&self, text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut i = 0;
        while i < chars.len() {
            let max = self.longest.min(chars.len() - i);
            let hit = (1..=max).rev().find_map(|len| {
                let cand: String = chars[i..i + len].iter().collect();
                self.map.get(&cand).map(|ipa| (ipa, len))
            });
            match hit {
                Some((ipa, len)) => {
                    out.push_str(ipa);
                    i += len;
                }
                None => {
                    out.push(chars[i]);
                    i += 1;
                }
            }
        }
        out
    }
}

/// How raw IPA strings become phoneme sequences.
#[derive(Debug, Clone, Default)]
pub enum Segmenter {
    /// Base character plus attached diacritics and modifier letters.
    #[default]
    Clusters,
    /// Greedy longest match against the segments of a feature table.
    Table(FeatureTable),
}

impl Segmenter {
    pub fn segment(&self, text: &str) -> Result<Vec<String>, CorpusError> {
        match self {
            Segmenter::Clusters => Ok(split_segments(text)),
            Segmenter::Table(t) => Ok(t.tokenize(text)?),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub language: String,
    pub segmenter: Segmenter,
    pub grapheme_map: Option<GraphemeMap>,
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a three-column SIGMORPHON file (`lemma`, `form`, `TAG;TAG`).
pub fn parse_sigmorphon(path: &Path, options: &ParseOptions) -> Result<Corpus, CorpusError> {
    parse_sigmorphon_str(&read_text(path)?, options)
}

pub fn parse_sigmorphon_str(text: &str, options: &ParseOptions) -> Result<Corpus, CorpusError> {
    let mut examples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let convert = |s: &str| -> Result<Vec<String>, CorpusError> {
            let ipa = match &options.grapheme_map {
                Some(m) => m.apply(s.trim()),
                None => s.trim().to_string(),
            };
            options
                .segmenter
                .segment(&ipa)
                .map_err(|e| CorpusError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })
        };
        let lemma = convert(cols[0])?;
        let target = convert(cols[1])?;
        let tags: Vec<String> = cols[2]
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();
        let ex = InflectionExample::new(lemma, tags, target).map_err(|_| CorpusError::Parse {
            line: line_no,
            message: "empty lemma, form or tag column".into(),
        })?;
        examples.push(ex);
    }
    Corpus::new(options.language.clone(), examples)
}

/// Lemma-copy variant: each tag becomes `COPY` and the target becomes the
/// lemma. The inventory of the source corpus is kept.
pub fn to_copy_task(corpus: &Corpus) -> Corpus {
    let examples = corpus
        .examples
        .iter()
        .map(|e| InflectionExample {
            lemma: e.lemma.clone(),
            tags: vec![COPY_TAG.to_string(); e.tags.len()],
            target: e.lemma.clone(),
        })
        .collect();
    Corpus {
        language: corpus.language.clone(),
        examples,
        inventory: corpus.inventory.clone(),
        tags: [COPY_TAG.to_string()].into_iter().collect(),
    }
}
