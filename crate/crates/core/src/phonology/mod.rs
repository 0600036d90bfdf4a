//! Ternary phonological features, segment classification and harmony labels.

mod features;
mod table;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{Feature, FeatureVector, Ternary, NUM_FEATURES};
pub use table::FeatureTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhonologyError {
    #[error("phoneme {0:?} is not in the feature table")]
    MissingPhoneme(String),
    #[error("word has no {0} segments")]
    NoClassMember(PhonClass),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature table line {line}: {message}")]
    TableParse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Segment class that a harmony process ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhonClass {
    Vowel,
    Consonant,
}

impl std::fmt::Display for PhonClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhonClass::Vowel => "vowel",
            PhonClass::Consonant => "consonant",
        })
    }
}

/// Vowels are `syl+`; everything else (including `syl0`) counts as a consonant.
pub fn class_of(vector: &FeatureVector) -> PhonClass {
    match vector.get(Feature::Syllabic) {
        Ternary::Plus => PhonClass::Vowel,
        _ => PhonClass::Consonant,
    }
}

/// A language's set of phonemes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeInventory {
    phonemes: BTreeSet<String>,
}

impl PhonemeInventory {
    pub fn new<I, S>(phonemes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            phonemes: phonemes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn insert(&mut self, phoneme: impl Into<String>) {
        self.phonemes.insert(phoneme.into());
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.phonemes.contains(phoneme)
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    /// Phonemes in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.phonemes.iter().map(String::as_str)
    }

    /// Members of `class`, in sorted order.
    pub fn members(
        &self,
        class: PhonClass,
        table: &FeatureTable,
    ) -> Result<Vec<String>, PhonologyError> {
        let mut out = Vec::new();
        for p in &self.phonemes {
            if class_of(&table.lookup(p)?) == class {
                out.push(p.clone());
            }
        }
        Ok(out)
    }

    /// Phonemes of the inventory that the table does not cover.
    pub fn missing_from(&self, table: &FeatureTable) -> Vec<String> {
        self.phonemes
            .iter()
            .filter(|p| !table.contains(p))
            .cloned()
            .collect()
    }
}

impl<S: Into<String>> FromIterator<S> for PhonemeInventory {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self::new(iter)
    }
}

/// Harmony value of `word` for `feature` over segments of `class`.
///
/// `+` when every class member is `+` or `0` and at least one is `+`; `−`
/// symmetrically; `0` when both `+` and `−` occur or when every value is `0`.
pub fn harmony_label<S: AsRef<str>>(
    word: &[S],
    feature: Feature,
    class: PhonClass,
    table: &FeatureTable,
) -> Result<Ternary, PhonologyError> {
    let mut any_member = false;
    let mut plus = false;
    let mut minus = false;
    for p in word {
        let v = table.lookup(p.as_ref())?;
        if class_of(&v) != class {
            continue;
        }
        any_member = true;
        match v.get(feature) {
            Ternary::Plus => plus = true,
            Ternary::Minus => minus = true,
            Ternary::Zero => {}
        }
    }
    if !any_member {
        return Err(PhonologyError::NoClassMember(class));
    }
    Ok(match (plus, minus) {
        (true, false) => Ternary::Plus,
        (false, true) => Ternary::Minus,
        _ => Ternary::Zero,
    })
}

/// Features with at least two `+` and at least two `−` members of `class`.
pub fn trainable_features(
    inventory: &PhonemeInventory,
    class: PhonClass,
    table: &FeatureTable,
) -> Result<BTreeSet<Feature>, PhonologyError> {
    let members: Vec<FeatureVector> = inventory
        .members(class, table)?
        .iter()
        .map(|p| table.lookup(p))
        .collect::<Result<_, _>>()?;
    Ok(Feature::ALL
        .iter()
        .copied()
        .filter(|&f| {
            let plus = members.iter().filter(|v| v.get(f) == Ternary::Plus).count();
            let minus = members
                .iter()
                .filter(|v| v.get(f) == Ternary::Minus)
                .count();
            plus >= 2 && minus >= 2
        })
        .collect())
}

/// Splits text into segments of one base character followed by any combining
/// diacritics or spacing modifier letters (length marks, aspiration, ...).
/// Tie bars join the following base character too.
pub fn split_segments(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut join_next = false;
    for c in text.chars() {
        if c.is_whitespace() {
            join_next = false;
            continue;
        }
        let is_tie = matches!(c, '\u{0361}' | '\u{035C}');
        let attaches = is_tie
            || ('\u{0300}'..='\u{036F}').contains(&c)
            || ('\u{02B0}'..='\u{02FF}').contains(&c)
            || ('\u{1DC0}'..='\u{1DFF}').contains(&c);
        match out.last_mut() {
            Some(last) if attaches || join_next => last.push(c),
            _ => out.push(c.to_string()),
        }
        join_next = is_tie;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        FeatureTable::bundled()
    }

    fn word(s: &str) -> Vec<String> {
        table().tokenize(s).unwrap()
    }

    /// Rows of the reference table for Turkish "köpek" (ö transcribed œ).
    #[test]
    fn kopek_vowel_and_consonant_harmony_rows() {
        let t = table();
        let w = word("kœpek");
        let vowel_row = "++-+---0+--0-0----00-";
        let consonant_row = "--+----0---0-000-0-0-";
        let expect_v = FeatureVector::parse(vowel_row).unwrap();
        let expect_c = FeatureVector::parse(consonant_row).unwrap();
        for f in Feature::ALL {
            assert_eq!(
                harmony_label(&w, f, PhonClass::Vowel, &t).unwrap(),
                expect_v.get(f),
                "vowel harmony {f}"
            );
            assert_eq!(
                harmony_label(&w, f, PhonClass::Consonant, &t).unwrap(),
                expect_c.get(f),
                "consonant harmony {f}"
            );
        }
    }

    #[test]
    fn spot_values() {
        let t = table();
        let w = word("kœpek");
        assert_eq!(
            harmony_label(&w, Feature::Back, PhonClass::Vowel, &t).unwrap(),
            Ternary::Minus
        );
        assert_eq!(
            harmony_label(&w, Feature::Round, PhonClass::Vowel, &t).unwrap(),
            Ternary::Zero
        );
        assert_eq!(
            harmony_label(&w, Feature::Labial, PhonClass::Consonant, &t).unwrap(),
            Ternary::Zero
        );
        assert_eq!(
            harmony_label(&["u"], Feature::Back, PhonClass::Vowel, &t).unwrap(),
            Ternary::Plus
        );
    }

    #[test]
    fn word_without_class_member() {
        let t = table();
        assert_eq!(
            harmony_label(&["t", "k"], Feature::Back, PhonClass::Vowel, &t),
            Err(PhonologyError::NoClassMember(PhonClass::Vowel))
        );
    }

    #[test]
    fn trainability_rule() {
        let t = table();
        let inv = PhonemeInventory::new(["a", "o", "e", "i"]);
        assert!(trainable_features(&inv, PhonClass::Vowel, &t)
            .unwrap()
            .contains(&Feature::Back));
        let inv = PhonemeInventory::new(["a", "o", "e"]);
        assert!(!trainable_features(&inv, PhonClass::Vowel, &t)
            .unwrap()
            .contains(&Feature::Back));
    }

    #[test]
    fn turkish_vowel_system() {
        let t = table();
        let inv = PhonemeInventory::new(["i", "y", "ɯ", "u", "e", "œ", "a", "o"]);
        let got = trainable_features(&inv, PhonClass::Vowel, &t).unwrap();
        // Enumerated by hand: back {ɯ,u,a,o | i,y,e,œ}, round {y,u,œ,o | i,ɯ,e,a},
        // hi {i,y,ɯ,u | e,œ,a,o}, tense {i,y,ɯ,u,e,a,o | œ}; lo has a single +.
        let expected: BTreeSet<Feature> = [Feature::Back, Feature::Round, Feature::High]
            .into_iter()
            .collect();
        assert!(expected.is_subset(&got));
        assert!(!got.contains(&Feature::Low));
        assert!(!got.contains(&Feature::Tense));
    }

    #[test]
    fn segment_splitting_keeps_diacritics() {
        assert_eq!(split_segments("kaːpʰ"), vec!["k", "aː", "pʰ"]);
        assert_eq!(split_segments("t͡ʃa"), vec!["t͡ʃ", "a"]);
        assert_eq!(split_segments("a b"), vec!["a", "b"]);
    }

    #[test]
    fn feature_names_parse() {
        assert_eq!("voi".parse::<Feature>().unwrap(), Feature::Voice);
        assert_eq!("VOICE".parse::<Feature>().unwrap(), Feature::Voice);
        assert_eq!("back".parse::<Feature>().unwrap(), Feature::Back);
        assert!("bogus".parse::<Feature>().is_err());
        assert_eq!(Feature::ALL.len(), NUM_FEATURES);
    }
}
