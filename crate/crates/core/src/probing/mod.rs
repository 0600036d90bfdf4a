//! Probe datasets over phoneme embeddings and encoder states, online-coding
//! description lengths, compression scores and shuffled-label controls.

mod dataset;
mod mdl;
mod suite;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::phonology::{Feature, PhonClass, PhonologyError, Ternary};

pub use dataset::{build_harmony_probe, build_phoneme_probe, control_shuffle, HarmonyMode};
pub use mdl::{
    align_schedule, has_leakage, make_schedule, make_schedule_with, online_code, online_code_with,
    FixedProbe, MdlSchedule, MlpTrainer, OnlineCodingResult, Predictor, ProbeConfig, ProbeTrainer,
    UniformProbe, SCHEDULE_FRACTIONS,
};
pub use suite::{
    embeddings_csv, evaluate_suite, report_csv, report_json, LanguageBundle, ReportRow,
    SuiteSettings, REPORT_HEADER,
};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("degenerate dataset for {feature}: {message}")]
    Degenerate { feature: String, message: String },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("probe training diverged in segment {segment}")]
    Divergence { segment: usize },
    #[error("missing inputs: {0}")]
    Missing(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeKind {
    Phoneme,
    HarmonyVowel,
    HarmonyConsonant,
}

impl ProbeKind {
    pub fn harmony(class: PhonClass) -> Self {
        match class {
            PhonClass::Vowel => ProbeKind::HarmonyVowel,
            PhonClass::Consonant => ProbeKind::HarmonyConsonant,
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Phoneme => "PHONEME",
            ProbeKind::HarmonyVowel => "HARMONY_VOWEL",
            ProbeKind::HarmonyConsonant => "HARMONY_CONSONANT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Inflection,
    Copy,
    Control,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Inflection => "INFLECTION",
            ModelKind::Copy => "COPY",
            ModelKind::Control => "CONTROL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub vector: Vec<f64>,
    pub label: Ternary,
    /// Phoneme or word the vector came from.
    pub source: String,
    pub seed_of_origin: u64,
    /// Copies of one underlying instance share this id.
    pub id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub language: String,
    pub feature: Feature,
    pub probe_kind: ProbeKind,
    pub model_kind: ModelKind,
    pub classes: usize,
}

/// Instances in coding order. Copies of an instance are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub instances: Vec<ProbeInstance>,
    pub meta: ProbeMeta,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Counts of `+`, `−`, `0` labels.
    pub fn label_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for i in &self.instances {
            c[i.label.class_index()] += 1;
        }
        c
    }

    pub fn distinct_labels(&self) -> usize {
        self.label_counts().iter().filter(|&&c| c > 0).count()
    }
}
