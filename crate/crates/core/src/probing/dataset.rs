use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelKind, ProbeDataset, ProbeError, ProbeInstance, ProbeKind, ProbeMeta};
use crate::corpus::NonceLexicon;
use crate::model::Checkpoint;
use crate::numerics::NUM_CLASSES;
use crate::phonology::{
    class_of, harmony_label, trainable_features, Feature, FeatureTable, PhonClass, PhonemeInventory,
};

/// Encoder batch size for nonce words.
const ENCODE_CHUNK: usize = 64;

/// How a harmony probe turns per-position encoder states into instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonyMode {
    /// Mean over the word's phoneme positions, BOS and EOS excluded.
    #[default]
    Pooled,
    /// One instance per phoneme position, all carrying the word's label.
    PerToken,
}

/// Shuffles groups of instances and lays each group's members out
/// contiguously, ids in original group order.
fn shuffle_groups(groups: Vec<Vec<ProbeInstance>>, seed: u64) -> Vec<ProbeInstance> {
    let mut groups: Vec<(usize, Vec<ProbeInstance>)> = groups.into_iter().enumerate().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    groups
        .into_iter()
        .flat_map(|(id, g)| {
            g.into_iter().map(move |mut i| {
                i.id = id;
                i
            })
        })
        .collect()
}

fn non_degenerate(ds: ProbeDataset) -> Result<ProbeDataset, ProbeError> {
    if ds.distinct_labels() < 2 {
        return Err(ProbeError::Degenerate {
            feature: ds.meta.feature.name().to_string(),
            message: format!("label counts {:?}", ds.label_counts()),
        });
    }
    Ok(ds)
}

/// One instance per (checkpoint, phoneme): the shared-table embedding row
/// labeled with the phoneme's value for `feature`. Instances from all seeds
/// are pooled, shuffled with `shuffle_seed`, and every instance is then
/// repeated `oversample` times in place.
pub fn build_phoneme_probe(
    checkpoints: &[&Checkpoint],
    table: &FeatureTable,
    feature: Feature,
    language: &str,
    model_kind: ModelKind,
    oversample: usize,
    shuffle_seed: u64,
) -> Result<ProbeDataset, ProbeError> {
    let Some(first) = checkpoints.first() else {
        return Err(ProbeError::Missing(
            "no checkpoints for the phoneme probe".into(),
        ));
    };
    if oversample == 0 {
        return Err(ProbeError::Precondition(
            "oversampling factor must be positive".into(),
        ));
    }
    let vocab = first.model.vocab();
    if checkpoints.iter().any(|c| c.model.vocab() != vocab) {
        return Err(ProbeError::Precondition(
            "checkpoints do not share a vocabulary".into(),
        ));
    }
    let mut groups = Vec::with_capacity(checkpoints.len() * vocab.phonemes().len());
    for ck in checkpoints {
        for p in vocab.phonemes() {
            let label = table.lookup(p)?.get(feature);
            let inst = ProbeInstance {
                vector: ck.model.embedding_of(p)?,
                label,
                source: p.clone(),
                seed_of_origin: ck.metadata.seed,
                id: 0,
            };
            groups.push(vec![inst; oversample]);
        }
    }
    non_degenerate(ProbeDataset {
        instances: shuffle_groups(groups, shuffle_seed),
        meta: ProbeMeta {
            language: language.to_string(),
            feature,
            probe_kind: ProbeKind::Phoneme,
            model_kind,
            classes: NUM_CLASSES,
        },
    })
}

/// Encoder states of nonce words (framed `BOS + word + EOS`, no tags)
/// labeled with the word's harmony value. Words without a member of `class`
/// are skipped.
#[allow(clippy::too_many_arguments)]
pub fn build_harmony_probe(
    checkpoint: &Checkpoint,
    nonce: &NonceLexicon,
    table: &FeatureTable,
    feature: Feature,
    class: PhonClass,
    mode: HarmonyMode,
    language: &str,
    model_kind: ModelKind,
    shuffle_seed: u64,
) -> Result<ProbeDataset, ProbeError> {
    if nonce.is_empty() {
        return Err(ProbeError::Precondition("empty nonce lexicon".into()));
    }
    let inventory: PhonemeInventory = checkpoint
        .model
        .vocab()
        .phonemes()
        .iter()
        .cloned()
        .collect();
    if !trainable_features(&inventory, class, table)?.contains(&feature) {
        return Err(ProbeError::Precondition(format!(
            "{} is not trainable for {class:?} harmony in this inventory",
            feature.name()
        )));
    }
    let mut words = Vec::new();
    let mut labels = Vec::new();
    for w in &nonce.words {
        let has_member = w
            .iter()
            .map(|p| table.lookup(p).map(|v| class_of(&v) == class))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .any(|m| m);
        if !has_member {
            warn!("skipping nonce word {} with no {class:?}", w.concat());
            continue;
        }
        labels.push(harmony_label(w, feature, class, table)?);
        words.push(w.clone());
    }
    let mut states = Vec::with_capacity(words.len());
    for chunk in words.chunks(ENCODE_CHUNK) {
        states.extend(checkpoint.model.encode_untagged_batch(chunk)?);
    }
    let seed = checkpoint.metadata.seed;
    let groups: Vec<Vec<ProbeInstance>> = words
        .iter()
        .zip(labels)
        .zip(&states)
        .map(|((w, label), s)| {
            let rows = 1..s.rows() - 1;
            let make = |vector: Vec<f64>| ProbeInstance {
                vector,
                label,
                source: w.concat(),
                seed_of_origin: seed,
                id: 0,
            };
            match mode {
                HarmonyMode::Pooled => {
                    let mut mean = vec![0.0; s.cols()];
                    for r in rows.clone() {
                        for (m, x) in mean.iter_mut().zip(s.row(r)) {
                            *m += x;
                        }
                    }
                    let n = rows.len() as f64;
                    mean.iter_mut().for_each(|m| *m /= n);
                    vec![make(mean)]
                }
                HarmonyMode::PerToken => rows.map(|r| make(s.row(r).to_vec())).collect(),
            }
        })
        .collect();
    non_degenerate(ProbeDataset {
        instances: shuffle_groups(groups, shuffle_seed),
        meta: ProbeMeta {
            language: language.to_string(),
            feature,
            probe_kind: ProbeKind::harmony(class),
            model_kind,
            classes: NUM_CLASSES,
        },
    })
}

/// Shuffled-label control over the same vectors. Phoneme probes permute the
/// phoneme-to-label assignment, so every copy of a phoneme still shares one
/// label; harmony probes permute labels across words.
pub fn control_shuffle(dataset: &ProbeDataset, seed: u64) -> Result<ProbeDataset, ProbeError> {
    let dataset = non_degenerate(dataset.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset;
    match out.meta.probe_kind {
        ProbeKind::Phoneme => {
            let types: BTreeMap<String, _> = out
                .instances
                .iter()
                .map(|i| (i.source.clone(), i.label))
                .collect();
            let mut labels: Vec<_> = types.values().copied().collect();
            labels.shuffle(&mut rng);
            let assigned: BTreeMap<String, _> = types.into_keys().zip(labels).collect();
            for i in &mut out.instances {
                i.label = assigned[&i.source];
            }
        }
        ProbeKind::HarmonyVowel | ProbeKind::HarmonyConsonant => {
            let mut group_labels: BTreeMap<usize, _> = BTreeMap::new();
            for i in &out.instances {
                group_labels.entry(i.id).or_insert(i.label);
            }
            let mut labels: Vec<_> = group_labels.values().copied().collect();
            labels.shuffle(&mut rng);
            let assigned: BTreeMap<usize, _> = group_labels.keys().copied().zip(labels).collect();
            for i in &mut out.instances {
                i.label = assigned[&i.id];
            }
        }
    }
    out.meta.model_kind = ModelKind::Control;
    Ok(out)
}
