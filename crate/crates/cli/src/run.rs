use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use phonoprobe::corpus::{
    parse_sigmorphon, synth_language, to_copy_task, Corpus, GraphemeMap, ParseOptions, Segmenter,
    SynthRules,
};
use phonoprobe::model::{train as train_model, Checkpoint, Regime, Transformer, Vocabulary};
use phonoprobe::par;
use phonoprobe::phonology::FeatureTable;
use phonoprobe::probing::{
    embeddings_csv, evaluate_suite, report_csv, report_json, LanguageBundle,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_regime, RunConfig};
use crate::error::{io_error, CliError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub regime: Regime,
    pub seed: u64,
    /// Relative to the output directory.
    pub file: String,
    pub sha256: String,
    /// Hash of the corpus this checkpoint was trained on (the copy task
    /// for copy checkpoints).
    pub corpus_hash: String,
    pub epoch: usize,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub language: String,
    /// Hash of the parsed source corpus.
    pub corpus_hash: String,
    pub checkpoints: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))
}

fn feature_table(cfg: &RunConfig) -> Result<FeatureTable, CliError> {
    Ok(match &cfg.feature_table {
        Some(p) => FeatureTable::load(p)?,
        None => FeatureTable::bundled(),
    })
}

fn load_corpus(cfg: &RunConfig, table: &FeatureTable) -> Result<Corpus, CliError> {
    let grapheme_map = cfg
        .grapheme_map
        .as_deref()
        .map(GraphemeMap::load)
        .transpose()?;
    let options = ParseOptions {
        language: cfg.language.clone(),
        segmenter: Segmenter::Table(table.clone()),
        grapheme_map,
    };
    let corpus = parse_sigmorphon(cfg.corpus_path()?, &options)?;
    corpus.check_against(table)?;
    Ok(corpus)
}

fn checkpoint_name(regime: Regime, seed: u64) -> String {
    format!(
        "checkpoints/{}_seed{seed}.ckpt",
        regime.to_string().to_lowercase()
    )
}

pub fn train(config_path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let table = feature_table(&cfg)?;
    let corpus = load_corpus(&cfg, &table)?;
    let corpora: BTreeMap<Regime, Corpus> = cfg
        .regime_list()?
        .into_iter()
        .map(|r| {
            let c = match r {
                Regime::Copy => to_copy_task(&corpus),
                Regime::Inflection => corpus.clone(),
            };
            (r, c)
        })
        .collect();
    let jobs: Vec<(Regime, u64)> = corpora
        .keys()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let params = cfg.train_params();
    let out = cfg.output_dir.clone();
    write(&out.join("train.resolved.toml"), cfg.to_toml())?;
    info!("{}: training {} checkpoints", cfg.language, jobs.len());
    let results = pool(&cfg)?.install(|| {
        par::try_map(
            cfg.exec(),
            &jobs,
            |&(regime, seed)| -> Result<_, CliError> {
                let data = &corpora[&regime];
                let model =
                    Transformer::build(cfg.model_config(seed), Vocabulary::from_corpus(data))?;
                let (ck, report) = train_model(model, data, regime, &params)?;
                info!(
                    "{regime} seed {seed}: dev exact match {:.4} after {} epochs",
                    report.dev_accuracy, report.epochs_run
                );
                Ok((ck, report))
            },
        )
    })?;
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    for (&(regime, seed), (ck, report)) in jobs.iter().zip(results) {
        let file = checkpoint_name(regime, seed);
        let bytes = ck.to_bytes();
        write(&out.join(&file), &bytes)?;
        entries.push(ManifestEntry {
            regime,
            seed,
            file,
            sha256: sha256_hex(&bytes),
            corpus_hash: ck.metadata.corpus_hash.clone(),
            epoch: ck.metadata.epoch,
            dev_accuracy: ck.metadata.dev_accuracy,
        });
        reports.push(serde_json::json!({
            "regime": regime,
            "seed": seed,
            "epochs_run": report.epochs_run,
            "best_epoch": report.best_epoch,
            "steps": report.steps,
            "dev_history": report.dev_history,
        }));
    }
    let manifest = Manifest {
        language: cfg.language.clone(),
        corpus_hash: corpus.content_hash(),
        checkpoints: entries,
    };
    write(
        &out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    write(
        &out.join("train_report.json"),
        serde_json::to_string_pretty(&reports).expect("report serializes"),
    )?;
    Ok(())
}

/// Reads the manifest and the checkpoints it lists for the configured
/// seeds, verifying every hash.
fn load_checkpoints(
    cfg: &RunConfig,
    regimes: &[Regime],
) -> Result<BTreeMap<Regime, Vec<Checkpoint>>, CliError> {
    let path = cfg.output_dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::State(format!("{}: {e} (run `train` first)", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::State(format!("{}: {e}", path.display())))?;
    if manifest.language != cfg.language {
        return Err(CliError::State(format!(
            "manifest is for language {:?}, config says {:?}",
            manifest.language, cfg.language
        )));
    }
    let mut out = BTreeMap::new();
    for &regime in regimes {
        let mut cks = Vec::new();
        for &seed in &cfg.seeds {
            let entry = manifest
                .checkpoints
                .iter()
                .find(|e| e.regime == regime && e.seed == seed)
                .ok_or_else(|| {
                    CliError::State(format!(
                        "manifest has no {regime} checkpoint for seed {seed}"
                    ))
                })?;
            let file = cfg.output_dir.join(&entry.file);
            let bytes = std::fs::read(&file)
                .map_err(|e| CliError::State(format!("{}: {e}", file.display())))?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(CliError::State(format!(
                    "{} does not match its manifest hash",
                    file.display()
                )));
            }
            let ck = Checkpoint::from_bytes(&bytes)
                .map_err(|e| CliError::State(format!("{}: {e}", file.display())))?;
            if ck.metadata.corpus_hash != entry.corpus_hash
                || ck.metadata.seed != seed
                || ck.metadata.regime != regime
            {
                return Err(CliError::State(format!(
                    "{} disagrees with the manifest",
                    file.display()
                )));
            }
            cks.push(ck);
        }
        out.insert(regime, cks);
    }
    if cfg.corpus.as_ref().is_some_and(|p| p.is_file()) {
        let table = feature_table(cfg)?;
        let hash = load_corpus(cfg, &table)?.content_hash();
        if hash != manifest.corpus_hash {
            return Err(CliError::State(
                "corpus changed since the checkpoints were trained".into(),
            ));
        }
    }
    Ok(out)
}

pub fn probe(config_path: &Path, embeddings: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let table = feature_table(&cfg)?;
    let mut cks = load_checkpoints(&cfg, &[Regime::Inflection, Regime::Copy])?;
    let bundle = LanguageBundle {
        language: cfg.language.clone(),
        inflection: cks.remove(&Regime::Inflection).unwrap_or_default(),
        copy: cks.remove(&Regime::Copy).unwrap_or_default(),
    };
    let settings = cfg.suite_settings();
    let out = &cfg.output_dir;
    write(&out.join("probe.resolved.toml"), cfg.to_toml())?;
    let rows = pool(&cfg)?.install(|| evaluate_suite(&bundle, &table, &settings))?;
    write(&out.join("report.csv"), report_csv(&rows))?;
    write(&out.join("report.json"), report_json(&rows))?;
    if embeddings {
        write(
            &out.join("embeddings.csv"),
            embeddings_csv(&bundle.inflection)?,
        )?;
    }
    info!("wrote {} report rows to {}", rows.len(), out.display());
    Ok(())
}

pub fn export_embeddings(
    config_path: &Path,
    regime: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let regime = parse_regime(regime)?;
    let mut cks = load_checkpoints(&cfg, &[regime])?;
    let csv = embeddings_csv(&cks.remove(&regime).unwrap_or_default())?;
    let path = out
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.join("embeddings.csv"));
    write(&path, csv)
}

pub fn synth(rules: &str, size: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let corpus = synth_language(&SynthRules::parse(rules)?, size, seed)?;
    match out {
        Some(p) => write(p, corpus.to_tsv()),
        None => {
            print!("{}", corpus.to_tsv());
            Ok(())
        }
    }
}
