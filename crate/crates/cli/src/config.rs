use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use phonoprobe::model::{ModelConfig, Preset, Regime, TrainParams};
use phonoprobe::par::Exec;
use phonoprobe::probing::{HarmonyMode, ProbeConfig, SuiteSettings};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ENV_OUT_DIR: &str = "PHONOPROBE_OUT_DIR";
pub const ENV_WORKERS: &str = "PHONOPROBE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub language: String,
    /// SIGMORPHON-style `lemma\tform\tTAGS` file.
    pub corpus: Option<PathBuf>,
    /// Bundled table when absent.
    pub feature_table: Option<PathBuf>,
    pub grapheme_map: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    pub seeds: Vec<u64>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<String>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub probe: ProbeSection,
}

fn default_preset() -> Preset {
    Preset::Desk
}

fn default_regimes() -> Vec<String> {
    vec!["inflection".into(), "copy".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub stop_at_perfect: bool,
    pub dev_fraction: f64,
    pub dropout: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let p = TrainParams::default();
        Self {
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            clip_norm: p.clip_norm,
            max_epochs: p.max_epochs,
            patience: p.patience,
            stop_at_perfect: p.stop_at_perfect,
            dev_fraction: p.dev_fraction,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
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
    /// `[[numerator, denominator], ...]` in increasing order.
    pub schedule: Option<Vec<(usize, usize)>>,
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let s = SuiteSettings::default();
        let p = ProbeConfig::default();
        Self {
            oversample: s.oversample,
            shuffle_seed: s.shuffle_seed,
            control_seed: s.control_seed,
            nonce_count: s.nonce_count,
            nonce_seed: s.nonce_seed,
            nonce_min_len: s.nonce_min_len,
            nonce_max_len: s.nonce_max_len,
            harmony_mode: s.harmony_mode,
            phoneme_probes: s.phoneme_probes,
            harmony_probes: s.harmony_probes,
            schedule: None,
            hidden: p.hidden,
            max_epochs: p.max_epochs,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            patience: p.patience,
            seed: p.seed,
        }
    }
}

pub fn parse_regime(s: &str) -> Result<Regime, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "inflection" => Ok(Regime::Inflection),
        "copy" => Ok(Regime::Copy),
        other => Err(CliError::Input(format!("unknown regime {other:?}"))),
    }
}

impl RunConfig {
    /// Reads the file and applies environment overrides. Relative paths
    /// resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_error(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.corpus,
            &mut cfg.feature_table,
            &mut cfg.grapheme_map,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        resolve(&mut cfg.output_dir);
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            let n = w.parse().map_err(|_| {
                CliError::Input(format!("{ENV_WORKERS}={w:?} is not a worker count"))
            })?;
            cfg.workers = Some(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.language.trim().is_empty() {
            return bad("language must be non-empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad(format!("seeds must be distinct: {:?}", self.seeds));
        }
        if self.regimes.is_empty() {
            return bad("at least one regime is required".into());
        }
        self.regime_list()?;
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        for p in [&self.feature_table, &self.grapheme_map]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        let t = &self.train;
        if !(t.learning_rate > 0.0) || t.batch_size == 0 || !(t.clip_norm > 0.0) {
            return bad("train: learning_rate, batch_size and clip_norm must be positive".into());
        }
        if !(0.0..1.0).contains(&t.dev_fraction) || t.dev_fraction == 0.0 {
            return bad(format!(
                "train: dev_fraction {} outside (0, 1)",
                t.dev_fraction
            ));
        }
        if let Some(d) = t.dropout {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("train: dropout {d} outside [0, 1)"));
            }
        }
        let p = &self.probe;
        if p.oversample == 0 || p.nonce_count == 0 || p.batch_size == 0 || p.max_epochs == 0 {
            return bad(
                "probe: oversample, nonce_count, batch_size and max_epochs must be positive".into(),
            );
        }
        if p.nonce_min_len == 0 || p.nonce_min_len > p.nonce_max_len {
            return bad("probe: need 0 < nonce_min_len <= nonce_max_len".into());
        }
        if let Some(s) = &p.schedule {
            let ok = !s.is_empty()
                && s.iter().all(|&(a, b)| a > 0 && a <= b)
                && s.windows(2).all(|w| w[0].0 * w[1].1 < w[1].0 * w[0].1);
            if !ok {
                return bad(format!(
                    "probe: schedule {s:?} must be increasing fractions in (0, 1]"
                ));
            }
        }
        Ok(())
    }

    /// Requires the corpus path to exist.
    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        match &self.corpus {
            Some(p) if p.is_file() => Ok(p),
            Some(p) => Err(CliError::Input(format!(
                "corpus {} does not exist",
                p.display()
            ))),
            None => Err(CliError::Input("config has no corpus".into())),
        }
    }

    pub fn regime_list(&self) -> Result<Vec<Regime>, CliError> {
        let mut out: Vec<Regime> = Vec::new();
        for r in &self.regimes {
            let r = parse_regime(r)?;
            if out.contains(&r) {
                return Err(CliError::Input(format!("regime {r} listed twice")));
            }
            out.push(r);
        }
        Ok(out)
    }

    pub fn exec(&self) -> Exec {
        if self.workers == Some(1) {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        let mut c = match self.preset {
            Preset::Desk => ModelConfig::desk(seed),
            Preset::Paper => ModelConfig::paper(seed),
            Preset::Tiny => ModelConfig::tiny(seed),
        };
        if let Some(d) = self.train.dropout {
            c.dropout = d;
        }
        c
    }

    pub fn train_params(&self) -> TrainParams {
        let t = &self.train;
        TrainParams {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            clip_norm: t.clip_norm,
            max_epochs: t.max_epochs,
            patience: t.patience,
            stop_at_perfect: t.stop_at_perfect,
            dev_fraction: t.dev_fraction,
            exec: self.exec(),
            ..TrainParams::default()
        }
    }

    pub fn suite_settings(&self) -> SuiteSettings {
        let p = &self.probe;
        SuiteSettings {
            probe: ProbeConfig {
                hidden: p.hidden.clone(),
                max_epochs: p.max_epochs,
                batch_size: p.batch_size,
                learning_rate: p.learning_rate,
                patience: p.patience,
                seed: p.seed,
                ..ProbeConfig::default()
            },
            oversample: p.oversample,
            shuffle_seed: p.shuffle_seed,
            control_seed: p.control_seed,
            nonce_count: p.nonce_count,
            nonce_seed: p.nonce_seed,
            nonce_min_len: p.nonce_min_len,
            nonce_max_len: p.nonce_max_len,
            harmony_mode: p.harmony_mode,
            phoneme_probes: p.phoneme_probes,
            harmony_probes: p.harmony_probes,
            schedule_fractions: p.schedule.clone(),
            exec: self.exec(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RunConfig {
        toml::from_str(
            r#"
            language = "x"
            output_dir = "out"
            seeds = [0, 1]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = minimal();
        assert_eq!(c.preset, Preset::Desk);
        assert_eq!(
            c.regime_list().unwrap(),
            vec![Regime::Inflection, Regime::Copy]
        );
        assert_eq!(c.probe.oversample, 3);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = minimal();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.probe.schedule = Some(vec![(1, 2), (1, 4)]);
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.regimes = vec!["copy".into(), "COPY".into()];
        assert!(c.validate().is_err());
        assert!(
            toml::from_str::<RunConfig>("language='x'\noutput_dir='o'\nseeds=[1]\nbogus=1")
                .is_err()
        );
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = minimal();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
