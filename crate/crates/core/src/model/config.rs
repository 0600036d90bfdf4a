use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::par::Exec;

/// Transformer shape and regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Longest phoneme sequence (lemma or target) the model accepts.
    pub max_len: usize,
    pub seed: u64,
    /// Share the embedding table with the output projection.
    pub tie_output: bool,
}

impl ModelConfig {
    /// 2+2 layers, 4 heads, width 128, feed-forward 512, dropout 0.3.
    pub fn desk(seed: u64) -> Self {
        Self {
            embed_dim: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ff_dim: 512,
            dropout: 0.3,
            max_len: 64,
            seed,
            tie_output: true,
        }
    }

    /// 4+4 layers, 4 heads, width 256, feed-forward 1024, dropout 0.3.
    pub fn paper(seed: u64) -> Self {
        Self {
            embed_dim: 256,
            encoder_layers: 4,
            decoder_layers: 4,
            heads: 4,
            ff_dim: 1024,
            ..Self::desk(seed)
        }
    }

    /// Small model for smoke tests.
    pub fn tiny(seed: u64) -> Self {
        Self {
            embed_dim: 32,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            ff_dim: 64,
            dropout: 0.1,
            ..Self::desk(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self, ModelError> {
        Ok(name.parse::<Preset>()?.config(seed))
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.embed_dim == 0 || self.heads == 0 || self.ff_dim == 0 || self.max_len == 0 {
            return fail("dimensions must be positive".into());
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("need at least one encoder and one decoder layer".into());
        }
        if self.embed_dim % self.heads != 0 {
            return fail(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
    Tiny,
}

impl Preset {
    pub fn config(self, seed: u64) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(seed),
            Preset::Paper => ModelConfig::paper(seed),
            Preset::Tiny => ModelConfig::tiny(seed),
        }
    }
}

impl FromStr for Preset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            "tiny" => Ok(Preset::Tiny),
            other => Err(ModelError::Config(format!(
                "unknown preset {other:?} (expected desk, paper or tiny)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
            Preset::Tiny => "tiny",
        })
    }
}

/// Which task a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Inflection,
    Copy,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Inflection => "INFLECTION",
            Regime::Copy => "COPY",
        })
    }
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Dev evaluations without improvement before stopping.
    pub patience: usize,
    /// Stop as soon as dev exact match reaches 1.0.
    pub stop_at_perfect: bool,
    /// Examples per gradient work unit. Fixed so results do not depend on
    /// thread count.
    pub chunk_size: usize,
    pub dev_fraction: f64,
    pub exec: Exec,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            clip_norm: 1.0,
            max_epochs: 60,
            patience: 5,
            stop_at_perfect: true,
            chunk_size: 8,
            dev_fraction: 0.1,
            exec: Exec::Parallel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dim_and_validation() {
        let c = ModelConfig::desk(0);
        assert_eq!(c.head_dim(), 32);
        c.validate().unwrap();
        let bad = ModelConfig {
            embed_dim: 130,
            ..c.clone()
        };
        assert!(matches!(bad.validate(), Err(ModelError::Config(_))));
        let bad = ModelConfig { dropout: 1.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(ModelConfig::preset("paper", 1).unwrap().embed_dim, 256);
        assert!(ModelConfig::preset("huge", 1).is_err());
    }
}
