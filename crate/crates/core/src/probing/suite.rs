use std::fmt::Write as _;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::dataset::{build_harmony_probe, build_phoneme_probe, control_shuffle, HarmonyMode};
use super::mdl::{
    align_schedule, make_schedule, make_schedule_with, online_code_with, MlpTrainer, ProbeConfig,
};
use super::{ModelKind, ProbeDataset, ProbeError, ProbeKind};
use crate::corpus::{generate_nonce, CorpusError, NonceConfig};
use crate::model::Checkpoint;
use crate::numerics::NUM_CLASSES;
use crate::par::{self, Exec};
use crate::phonology::{trainable_features, Feature, FeatureTable, PhonClass, PhonemeInventory};

pub const REPORT_HEADER: &str = "language,model_kind,probe_kind,feature,n,L_bits,compression";

/// Everything probed for one language.
#[derive(Debug, Clone)]
pub struct LanguageBundle {
    pub language: String,
    /// One checkpoint per seed, in seed order.
    pub inflection: Vec<Checkpoint>,
    pub copy: Vec<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSettings {
    pub probe: ProbeConfig,
    pub oversample: usize,
    pub shuffle_seed: u64,
    pub control_seed: u64,
    pub nonce_count: usize,
    pub nonce_seed: u64,
    pub nonce_min_len: usize,
    pub nonce_max_len: usize,
    pub harmony_mode: HarmonyMode,
    pub phoneme_probes: bool,
    pub harmony_probes: bool,
    /// Replaces the default schedule fractions.
    pub schedule_fractions: Option<Vec<(usize, usize)>>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::default(),
            oversample: 3,
            shuffle_seed: 0,
            control_seed: 1,
            nonce_count: 300,
            nonce_seed: 0,
            nonce_min_len: 3,
            nonce_max_len: 8,
            harmony_mode: HarmonyMode::Pooled,
            phoneme_probes: true,
            harmony_probes: true,
            schedule_fractions: None,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub language: String,
    pub model_kind: ModelKind,
    pub probe_kind: ProbeKind,
    pub feature: String,
    pub n: usize,
    #[serde(rename = "L_bits")]
    pub l_bits: f64,
    pub compression: f64,
}

/// Keeps a dataset, skips degenerate ones, propagates anything else.
fn usable(r: Result<ProbeDataset, ProbeError>) -> Result<Option<ProbeDataset>, ProbeError> {
    match r {
        Ok(d) => Ok(Some(d)),
        Err(ProbeError::Degenerate { feature, message }) => {
            warn!("skipping {feature}: {message}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Pushes the real datasets and the control of the first one.
fn with_control(
    jobs: &mut Vec<ProbeDataset>,
    real: Vec<Option<ProbeDataset>>,
    control_seed: u64,
) -> Result<(), ProbeError> {
    let control = match real.first() {
        Some(Some(d)) => Some(control_shuffle(d, control_seed)?),
        _ => None,
    };
    jobs.extend(real.into_iter().flatten());
    jobs.extend(control);
    Ok(())
}

fn phoneme_jobs(
    bundle: &LanguageBundle,
    table: &FeatureTable,
    s: &SuiteSettings,
    jobs: &mut Vec<ProbeDataset>,
) -> Result<(), ProbeError> {
    let infl: Vec<&Checkpoint> = bundle.inflection.iter().collect();
    let copy: Vec<&Checkpoint> = bundle.copy.iter().collect();
    for feature in Feature::ALL {
        let real = [(&infl, ModelKind::Inflection), (&copy, ModelKind::Copy)]
            .into_iter()
            .map(|(cks, kind)| {
                usable(build_phoneme_probe(
                    cks,
                    table,
                    feature,
                    &bundle.language,
                    kind,
                    s.oversample,
                    s.shuffle_seed,
                ))
            })
            .collect::<Result<Vec<_>, _>>()?;
        with_control(jobs, real, s.control_seed)?;
    }
    Ok(())
}

fn harmony_jobs(
    bundle: &LanguageBundle,
    table: &FeatureTable,
    s: &SuiteSettings,
    jobs: &mut Vec<ProbeDataset>,
) -> Result<(), ProbeError> {
    let infl = &bundle.inflection[0];
    let copy = &bundle.copy[0];
    let inventory: PhonemeInventory = infl.model.vocab().phonemes().iter().cloned().collect();
    for class in [PhonClass::Vowel, PhonClass::Consonant] {
        for feature in trainable_features(&inventory, class, table)? {
            let cfg = NonceConfig::new(s.nonce_count, s.nonce_seed)
                .lengths(s.nonce_min_len, s.nonce_max_len)
                .balanced_for(feature, class);
            let nonce = match generate_nonce(&inventory, table, &cfg) {
                Ok(n) => n,
                Err(CorpusError::BalanceFailure { .. }) => {
                    warn!(
                        "skipping {class:?} harmony for {}: labels cannot be balanced",
                        feature.name()
                    );
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let real = [(infl, ModelKind::Inflection), (copy, ModelKind::Copy)]
                .into_iter()
                .map(|(ck, kind)| {
                    usable(build_harmony_probe(
                        ck,
                        &nonce,
                        table,
                        feature,
                        class,
                        s.harmony_mode,
                        &bundle.language,
                        kind,
                        s.shuffle_seed,
                    ))
                })
                .collect::<Result<Vec<_>, _>>()?;
            with_control(jobs, real, s.control_seed)?;
        }
    }
    Ok(())
}

/// Compression scores for every (probe kind, eligible feature, model kind).
/// Controls shuffle the inflection model's labels. Harmony probes use the
/// first checkpoint of each regime.
pub fn evaluate_suite(
    bundle: &LanguageBundle,
    table: &FeatureTable,
    settings: &SuiteSettings,
) -> Result<Vec<ReportRow>, ProbeError> {
    let mut missing = Vec::new();
    if bundle.inflection.is_empty() {
        missing.push("inflection checkpoints");
    }
    if bundle.copy.is_empty() {
        missing.push("copy checkpoints");
    }
    if !missing.is_empty() {
        return Err(ProbeError::Missing(missing.join(", ")));
    }
    let mut jobs = Vec::new();
    if settings.phoneme_probes {
        phoneme_jobs(bundle, table, settings, &mut jobs)?;
    }
    if settings.harmony_probes {
        harmony_jobs(bundle, table, settings, &mut jobs)?;
    }
    info!("{}: {} probe evaluations", bundle.language, jobs.len());
    let trainer = MlpTrainer {
        config: settings.probe.clone(),
    };
    par::try_map(settings.exec, &jobs, |d| {
        let raw = match &settings.schedule_fractions {
            Some(f) => make_schedule_with(d.len(), NUM_CLASSES, f)?,
            None => make_schedule(d.len(), NUM_CLASSES)?,
        };
        let schedule = align_schedule(&raw, d)?;
        let r = online_code_with(d, &schedule, &trainer, settings.exec)?;
        Ok(ReportRow {
            language: d.meta.language.clone(),
            model_kind: d.meta.model_kind,
            probe_kind: d.meta.probe_kind,
            feature: d.meta.feature.name().to_string(),
            n: r.n,
            l_bits: r.total_bits,
            compression: r.compression,
        })
    })
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.language, r.model_kind, r.probe_kind, r.feature, r.n, r.l_bits, r.compression
        );
    }
    out
}

pub fn report_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

/// `seed,phoneme,e0,…` with one row per checkpoint and phoneme.
pub fn embeddings_csv(checkpoints: &[Checkpoint]) -> Result<String, ProbeError> {
    let Some(first) = checkpoints.first() else {
        return Err(ProbeError::Missing("no checkpoints to export".into()));
    };
    let d = first.model.config().embed_dim;
    let mut out = String::from("seed,phoneme");
    for i in 0..d {
        let _ = write!(out, ",e{i}");
    }
    out.push('\n');
    for ck in checkpoints {
        if ck.model.config().embed_dim != d {
            return Err(ProbeError::Precondition(
                "checkpoints differ in embedding width".into(),
            ));
        }
        for p in ck.model.vocab().phonemes() {
            let _ = write!(out, "{},{p}", ck.metadata.seed);
            for v in ck.model.embedding_of(p)? {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}
