use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input window length `L`.
    pub seq_len: usize,
    /// Patch length `P`; `L mod P` trailing steps are dropped.
    pub patch_len: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Logits kept per attention row.
    pub top_k: usize,
    /// FFN hidden width as a multiple of `d_model`.
    pub ffn_mult: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    pub n_features: usize,
    /// Input column that is forecast.
    pub target_index: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            seq_len: 48,
            patch_len: 12,
            d_model: 32,
            heads: 4,
            top_k: 5,
            ffn_mult: 4,
            horizon: 24,
            n_features: 1,
            target_index: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_len < 1 || self.seq_len < self.patch_len {
            return Err(Error::Config(format!(
                "patch_len ({}) must be between 1 and seq_len ({})",
                self.patch_len, self.seq_len
            )));
        }
        self.attention().validate()?;
        if self.ffn_mult < 1 {
            return Err(Error::Config("ffn_mult must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.n_features < 1 {
            return Err(Error::Config("n_features must be at least 1".into()));
        }
        if self.target_index >= self.n_features {
            return Err(Error::Config(format!(
                "target_index ({}) must be below n_features ({})",
                self.target_index, self.n_features
            )));
        }
        Ok(())
    }

    /// Number of patches `floor(L / P)`.
    pub fn num_patches(&self) -> usize {
        self.seq_len / self.patch_len
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            d_model: self.d_model,
            heads: self.heads,
            top_k: self.top_k,
        }
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_mult * self.d_model
    }

    /// Field-by-field comparison, returning the first differing field name
    /// with both values.
    pub fn first_difference(&self, other: &ModelConfig) -> Option<(&'static str, usize, usize)> {
        let fields = [
            ("seq_len", self.seq_len, other.seq_len),
            ("patch_len", self.patch_len, other.patch_len),
            ("d_model", self.d_model, other.d_model),
            ("heads", self.heads, other.heads),
            ("top_k", self.top_k, other.top_k),
            ("ffn_mult", self.ffn_mult, other.ffn_mult),
            ("horizon", self.horizon, other.horizon),
            ("n_features", self.n_features, other.n_features),
            ("target_index", self.target_index, other.target_index),
        ];
        fields.into_iter().find(|(_, a, b)| a != b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_with_four_patches() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_patches(), 4);
        assert_eq!(cfg.attention().head_dim(), 8);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = ModelConfig::default();
        for bad in [
            ModelConfig {
                patch_len: 49,
                ..base
            },
            ModelConfig {
                patch_len: 0,
                ..base
            },
            ModelConfig { heads: 3, ..base },
            ModelConfig { top_k: 0, ..base },
            ModelConfig { horizon: 0, ..base },
            ModelConfig {
                n_features: 0,
                ..base
            },
            ModelConfig {
                target_index: 1,
                ..base
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn reports_first_differing_field() {
        let a = ModelConfig::default();
        let b = ModelConfig { horizon: 12, ..a };
        assert_eq!(a.first_difference(&b), Some(("horizon", 24, 12)));
        assert_eq!(a.first_difference(&a), None);
    }
}
