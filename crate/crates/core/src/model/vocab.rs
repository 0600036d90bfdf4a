use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::{Corpus, COPY_TAG};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const COPY: usize = 4;
pub const SPECIALS: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", COPY_TAG];

/// Dense ids for specials, then phonemes, then tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    phonemes: Vec<String>,
    tags: Vec<String>,
    phoneme_ids: HashMap<String, usize>,
    tag_ids: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    phonemes: Vec<String>,
    tags: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::new(r.phonemes, r.tags)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            phonemes: v.phonemes,
            tags: v.tags,
        }
    }
}

impl Vocabulary {
    /// Duplicates are dropped; `COPY` among `tags` maps to the special id.
    pub fn new(phonemes: Vec<String>, tags: Vec<String>) -> Self {
        let mut ps: Vec<String> = Vec::new();
        for p in phonemes {
            if !ps.contains(&p) {
                ps.push(p);
            }
        }
        let mut ts: Vec<String> = Vec::new();
        for t in tags {
            if t != COPY_TAG && !ts.contains(&t) {
                ts.push(t);
            }
        }
        let base = SPECIALS.len();
        let phoneme_ids = ps
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), base + i))
            .collect();
        let mut tag_ids: HashMap<String, usize> = ts
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), base + ps.len() + i))
            .collect();
        tag_ids.insert(COPY_TAG.to_string(), COPY);
        Self {
            phonemes: ps,
            tags: ts,
            phoneme_ids,
            tag_ids,
        }
    }

    /// Sorted inventory and tag set of `corpus`.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(
            corpus.inventory().iter().map(String::from).collect(),
            corpus.tag_vocabulary().iter().cloned().collect(),
        )
    }

    pub fn len(&self) -> usize {
        SPECIALS.len() + self.phonemes.len() + self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn phonemes(&self) -> &[String] {
        &self.phonemes
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn phoneme_id(&self, p: &str) -> Result<usize, ModelError> {
        self.phoneme_ids
            .get(p)
            .copied()
            .ok_or_else(|| ModelError::Vocabulary(p.to_string()))
    }

    pub fn tag_id(&self, t: &str) -> Result<usize, ModelError> {
        self.tag_ids
            .get(t)
            .copied()
            .ok_or_else(|| ModelError::Vocabulary(t.to_string()))
    }

    pub fn is_phoneme_id(&self, id: usize) -> bool {
        id >= SPECIALS.len() && id < SPECIALS.len() + self.phonemes.len()
    }

    /// Symbol for any id.
    pub fn symbol(&self, id: usize) -> Option<&str> {
        if id < SPECIALS.len() {
            return Some(SPECIALS[id]);
        }
        let i = id - SPECIALS.len();
        match self.phonemes.get(i) {
            Some(p) => Some(p),
            None => self.tags.get(i - self.phonemes.len()).map(String::as_str),
        }
    }
}
