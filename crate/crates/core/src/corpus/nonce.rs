use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::phonology::{harmony_label, Feature, FeatureTable, PhonClass, PhonemeInventory};

/// Syllable templates words are assembled from.
pub const NONCE_TEMPLATES: [&str; 5] = ["CV", "CVC", "CVCV", "CVCCV", "CVCVC"];

/// Draw budget per requested word before balancing is declared impossible.
const DRAWS_PER_WORD: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonceConfig {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Harmony labels to balance across `+`, `−` and `0`.
    pub balance: Vec<(Feature, PhonClass)>,
}

impl NonceConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            min_len: 3,
            max_len: 8,
            seed,
            balance: Vec::new(),
        }
    }

    pub fn balanced_for(mut self, feature: Feature, class: PhonClass) -> Self {
        self.balance.push((feature, class));
        self
    }

    pub fn lengths(mut self, min_len: usize, max_len: usize) -> Self {
        self.min_len = min_len;
        self.max_len = max_len;
        self
    }
}

/// Generated pseudo-words over a language's inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonceLexicon {
    pub words: Vec<Vec<String>>,
    pub generator_seed: u64,
    pub length_range: (usize, usize),
}

impl NonceLexicon {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn draw_word(
    rng: &mut ChaCha8Rng,
    vowels: &[String],
    consonants: &[String],
    min_len: usize,
    max_len: usize,
) -> Option<Vec<String>> {
    let mut shape = String::new();
    loop {
        shape.push_str(NONCE_TEMPLATES.choose(rng).expect("templates"));
        if shape.len() >= min_len {
            break;
        }
    }
    if shape.len() > max_len {
        return None;
    }
    Some(
        shape
            .chars()
            .map(|c| {
                let pool = if c == 'V' { vowels } else { consonants };
                pool.choose(rng).expect("non-empty class").clone()
            })
            .collect(),
    )
}

/// Samples `config.count` nonce words from CV templates with phonemes drawn
/// uniformly within their class. Templates are concatenated until the word
/// reaches `min_len`; words longer than `max_len` are redrawn. When
/// `config.balance` is non-empty, words are accepted only while their harmony
/// label's quota (`count / 3`, remainder to `+` then `−`) is open for every
/// balanced feature.
pub fn generate_nonce(
    inventory: &PhonemeInventory,
    table: &FeatureTable,
    config: &NonceConfig,
) -> Result<NonceLexicon, CorpusError> {
    let vowels = inventory.members(PhonClass::Vowel, table)?;
    let consonants = inventory.members(PhonClass::Consonant, table)?;
    if vowels.is_empty() || consonants.is_empty() {
        return Err(CorpusError::Precondition(
            "nonce generation needs at least one vowel and one consonant".into(),
        ));
    }
    if config.count == 0 {
        return Err(CorpusError::Precondition(
            "nonce count must be positive".into(),
        ));
    }
    if config.min_len == 0 || config.min_len > config.max_len || config.max_len < 2 {
        return Err(CorpusError::Precondition(format!(
            "invalid nonce length range {}..={}",
            config.min_len, config.max_len
        )));
    }

    let mut quota = [config.count / 3; 3];
    for slot in quota.iter_mut().take(config.count % 3) {
        *slot += 1;
    }
    let mut filled = vec![[0usize; 3]; config.balance.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut words = Vec::with_capacity(config.count);
    let budget = DRAWS_PER_WORD * config.count;
    let mut draws = 0;
    while words.len() < config.count {
        if draws >= budget {
            // Name the first balanced feature whose quota is still open.
            let (feature, class) = config
                .balance
                .iter()
                .zip(&filled)
                .find(|(_, f)| f.iter().zip(&quota).any(|(a, b)| a < b))
                .map(|(fc, _)| *fc)
                .unwrap_or(config.balance[0]);
            return Err(CorpusError::BalanceFailure { feature, class });
        }
        draws += 1;
        let Some(word) = draw_word(
            &mut rng,
            &vowels,
            &consonants,
            config.min_len,
            config.max_len,
        ) else {
            continue;
        };
        let mut labels = Vec::with_capacity(config.balance.len());
        for &(feature, class) in &config.balance {
            labels.push(harmony_label(&word, feature, class, table)?.class_index());
        }
        if labels.iter().zip(&filled).all(|(&l, f)| f[l] < quota[l]) {
            for (&l, f) in labels.iter().zip(filled.iter_mut()) {
                f[l] += 1;
            }
            words.push(word);
        }
    }
    Ok(NonceLexicon {
        words,
        generator_seed: config.seed,
        length_range: (config.min_len, config.max_len),
    })
}
