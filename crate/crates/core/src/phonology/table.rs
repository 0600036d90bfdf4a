use std::collections::BTreeMap;
use std::path::Path;

use super::features::{Feature, FeatureVector, NUM_FEATURES};
use super::PhonologyError;

const BUNDLED: &str = include_str!("../../data/features.tsv");

/// Mapping from IPA segment to its 21-slot feature vector.
///
/// Text format: UTF-8, tab-separated, `#` comment lines, a header row whose
/// last 21 fields are the feature names in [`Feature::ALL`] order, then one
/// row per segment: `<ipa>\t<21 symbols>` (symbols either tab-separated or
/// written as one 21-character field).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    entries: BTreeMap<String, FeatureVector>,
    longest_key: usize,
}

impl FeatureTable {
    /// The table shipped with the crate, covering the segments used by the
    /// synthetic test languages and a general-purpose IPA inventory.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled feature table is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, PhonologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhonologyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PhonologyError> {
        let mut entries = BTreeMap::new();
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !saw_header {
                let names = &fields[fields.len().saturating_sub(NUM_FEATURES)..];
                let expected: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
                if names != expected.as_slice() {
                    return Err(PhonologyError::TableParse {
                        line: line_no,
                        message: format!(
                            "header must end with the features {}",
                            expected.join(",")
                        ),
                    });
                }
                saw_header = true;
                continue;
            }
            let segment = fields[0].trim();
            if segment.is_empty() {
                return Err(PhonologyError::TableParse {
                    line: line_no,
                    message: "empty segment".into(),
                });
            }
            let vector = FeatureVector::parse(&fields[1..].concat()).ok_or_else(|| {
                PhonologyError::TableParse {
                    line: line_no,
                    message: format!(
                        "expected {NUM_FEATURES} values from {{+,-,0}} for {segment:?}"
                    ),
                }
            })?;
            if entries.insert(segment.to_string(), vector).is_some() {
                return Err(PhonologyError::TableParse {
                    line: line_no,
                    message: format!("duplicate segment {segment:?}"),
                });
            }
        }
        if !saw_header {
            return Err(PhonologyError::TableParse {
                line: 0,
                message: "missing header row".into(),
            });
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: BTreeMap<String, FeatureVector>) -> Self {
        let longest_key = entries.keys().map(|k| k.chars().count()).max().unwrap_or(0);
        Self {
            entries,
            longest_key,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("ipa");
        for f in Feature::ALL {
            out.push('\t');
            out.push_str(f.name());
        }
        out.push('\n');
        for (seg, vec) in &self.entries {
            out.push_str(seg);
            for v in vec.values() {
                out.push('\t');
                out.push(v.symbol());
            }
            out.push('\n');
        }
        out
    }

    pub fn lookup(&self, phoneme: &str) -> Result<FeatureVector, PhonologyError> {
        self.entries
            .get(phoneme)
            .copied()
            .ok_or_else(|| PhonologyError::MissingPhoneme(phoneme.to_string()))
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.entries.contains_key(phoneme)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Splits `text` into table segments by greedy longest match. Whitespace
    /// is skipped.
    pub fn tokenize(&self, text: &str) -> Result<Vec<String>, PhonologyError> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let max = self.longest_key.min(chars.len() - i);
            let found = (1..=max).rev().find_map(|len| {
                let cand: String = chars[i..i + len].iter().collect();
                self.entries.contains_key(&cand).then_some((cand, len))
            });
            match found {
                Some((seg, len)) => {
                    out.push(seg);
                    i += len;
                }
                None => {
                    // Report the whole base+diacritic cluster that failed to match.
                    let cluster = super::split_segments(&chars[i..].iter().collect::<String>())
                        .into_iter()
                        .next()
                        .unwrap_or_else(|| chars[i].to_string());
                    return Err(PhonologyError::MissingPhoneme(cluster));
                }
            }
        }
        Ok(out)
    }
}
