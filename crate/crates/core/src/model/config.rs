use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::features::{FeatureKind, FrontEnd, FrontEndConfig, SdcConfig};

/// Where per-character text representations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextSource {
    /// A learned embedding table over the tokenizer alphabet.
    Chars,
    /// Precomputed rows of width `char_embed_dim`, one per character.
    External,
}

/// Architecture and training hyper-parameters. `Default` is the full-size
/// model; [`ModelConfig::desk`] is a reduced variant that trains on one CPU
/// core in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature: FeatureKind,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Time stride of the first convolution.
    pub conv_stride: usize,
    /// Per-direction hidden size of the audio and text Bi-GRUs.
    pub gru_hidden: usize,
    pub audio_gru_layers: usize,
    /// Width `D` of both embeddings and of the attention projections.
    pub embed_dim: usize,
    pub char_embed_dim: usize,
    pub text_source: TextSource,
    /// Per-direction hidden size of the discriminator Bi-GRU.
    pub disc_hidden: usize,
    pub dropout: f64,
    /// Also apply dropout after the two convolution blocks.
    pub dropout_after_conv: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fraction of each class held out for model selection.
    pub val_fraction: f64,
    pub seed: u64,
    pub front_end: FrontEndConfig,
    pub sdc: SdcConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::Sdc,
            conv_filters: 32,
            conv_kernel: 3,
            conv_stride: 2,
            gru_hidden: 64,
            audio_gru_layers: 2,
            embed_dim: 128,
            char_embed_dim: 512,
            text_source: TextSource::Chars,
            disc_hidden: 128,
            dropout: 0.2,
            dropout_after_conv: true,
            learning_rate: 1e-4,
            batch_size: 128,
            val_fraction: 0.1,
            seed: 0,
            front_end: FrontEndConfig::default(),
            sdc: SdcConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Same topology with narrower layers, no dropout, a larger learning rate
    /// and smaller batches.
    pub fn desk() -> Self {
        Self {
            conv_filters: 2,
            gru_hidden: 16,
            embed_dim: 64,
            char_embed_dim: 64,
            disc_hidden: 32,
            dropout: 0.0,
            learning_rate: 2e-3,
            batch_size: 16,
            ..Self::default()
        }
    }

    pub fn front_end(&self) -> FrontEnd {
        FrontEnd {
            kind: self.feature,
            config: self.front_end.clone(),
            sdc: self.sdc,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.front_end().dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("conv_filters", self.conv_filters),
            ("conv_stride", self.conv_stride),
            ("gru_hidden", self.gru_hidden),
            ("audio_gru_layers", self.audio_gru_layers),
            ("embed_dim", self.embed_dim),
            ("char_embed_dim", self.char_embed_dim),
            ("disc_hidden", self.disc_hidden),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(ModelError::InvalidConfig("conv_kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ModelError::InvalidConfig("val_fraction must be in [0, 1)".into()));
        }
        self.front_end()
            .validate()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Parses a TOML document; absent keys keep their defaults, unknown keys
    /// are rejected.
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for cfg in [ModelConfig::default(), ModelConfig::desk()] {
            let text = cfg.to_toml();
            assert_eq!(ModelConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_documents_and_unknown_keys() {
        let cfg = ModelConfig::from_toml("feature = \"mel\"\n[sdc]\nd = 2\n").unwrap();
        assert_eq!(cfg.feature, FeatureKind::MelSpec);
        assert_eq!(cfg.sdc, SdcConfig { d: 2, ..SdcConfig::default() });
        assert!(ModelConfig::from_toml("colour = 3\n").is_err());
        assert!(ModelConfig::from_toml("[front_end]\nwindow = 1\n").is_err());
        assert!(ModelConfig::from_toml("dropout = 1.5\n").is_err());
    }

    #[test]
    fn sdc_dimension() {
        assert_eq!(ModelConfig::default().feature_dim(), 360);
    }
}
