use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PhonologyError;

/// Three-valued feature specification. `Zero` means the feature is irrelevant
/// for the segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ternary {
    Plus,
    Minus,
    Zero,
}

impl Ternary {
    pub const ALL: [Ternary; 3] = [Ternary::Plus, Ternary::Minus, Ternary::Zero];

    /// Class index used by probes: `+` → 0, `−` → 1, `0` → 2.
    pub fn class_index(self) -> usize {
        match self {
            Ternary::Plus => 0,
            Ternary::Minus => 1,
            Ternary::Zero => 2,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            Ternary::Plus => '+',
            Ternary::Minus => '-',
            Ternary::Zero => '0',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '+' => Some(Ternary::Plus),
            '-' | '−' => Some(Ternary::Minus),
            '0' => Some(Ternary::Zero),
            _ => None,
        }
    }
}

impl fmt::Display for Ternary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

macro_rules! features {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The 21 phonological features, in table column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Feature {
            $($variant),+
        }

        impl Feature {
            pub const ALL: [Feature; 21] = [$(Feature::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name),+
                }
            }
        }
    };
}

features! {
    Syllabic => "syl",
    Sonorant => "son",
    Consonantal => "cons",
    Continuant => "cont",
    DelayedRelease => "delrel",
    Lateral => "lat",
    Nasal => "nas",
    Strident => "strid",
    Voice => "voi",
    SpreadGlottis => "sg",
    ConstrictedGlottis => "cg",
    Anterior => "ant",
    Coronal => "cor",
    Distributed => "distr",
    Labial => "lab",
    High => "hi",
    Low => "lo",
    Back => "back",
    Round => "round",
    Tense => "tense",
    Long => "long",
}

pub const NUM_FEATURES: usize = 21;

impl Feature {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = PhonologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let alias = match lower.as_str() {
            "voice" => "voi",
            "continuant" => "cont",
            "high" => "hi",
            "low" => "lo",
            "rounded" => "round",
            "labial" => "lab",
            "nasal" => "nas",
            "lateral" => "lat",
            "syllabic" => "syl",
            "sonorant" => "son",
            "consonantal" => "cons",
            "strident" => "strid",
            "anterior" => "ant",
            "coronal" => "cor",
            "distributed" => "distr",
            other => other,
        };
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == alias)
            .ok_or_else(|| PhonologyError::UnknownFeature(s.to_string()))
    }
}

/// One ternary value per [`Feature`], in [`Feature::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector([Ternary; NUM_FEATURES]);

impl FeatureVector {
    pub fn new(values: [Ternary; NUM_FEATURES]) -> Self {
        Self(values)
    }

    pub fn get(&self, feature: Feature) -> Ternary {
        self.0[feature.index()]
    }

    pub fn values(&self) -> &[Ternary; NUM_FEATURES] {
        &self.0
    }

    /// Parses 21 symbols from `{+, -, 0}`, ignoring whitespace.
    pub fn parse(symbols: &str) -> Option<Self> {
        let vals: Vec<Ternary> = symbols
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(Ternary::from_symbol)
            .collect::<Option<_>>()?;
        let arr: [Ternary; NUM_FEATURES] = vals.try_into().ok()?;
        Some(Self(arr))
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}
