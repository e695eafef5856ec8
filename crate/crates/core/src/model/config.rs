use serde::{Deserialize, Serialize};

use crate::autodiff::PoolMode;
use crate::dsp::AUDIO_FEATURE_DIM;
use crate::error::{Error, Result};
use crate::text::EMBEDDING_DIM;

/// Architecture hyperparameters. Each ablation of the full model is one
/// field change away from [`ModelConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub audio_kernel_sizes: Vec<usize>,
    pub text_kernel_sizes: Vec<usize>,
    pub filters_per_scale: usize,
    pub pool_modes_audio: Vec<PoolMode>,
    pub pool_modes_text: Vec<PoolMode>,
    pub use_attention: bool,
    pub use_xvector: bool,
    pub use_swem: bool,
    pub xvector_dim: usize,
    pub embedding_dim: usize,
    pub fc_hidden: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            audio_kernel_sizes: vec![5, 7, 9, 11],
            text_kernel_sizes: vec![3, 5, 7, 9],
            filters_per_scale: 128,
            pool_modes_audio: PoolMode::ALL.to_vec(),
            pool_modes_text: PoolMode::ALL.to_vec(),
            use_attention: true,
            use_xvector: true,
            use_swem: true,
            xvector_dim: 512,
            embedding_dim: EMBEDDING_DIM,
            fc_hidden: 256,
            n_classes: 4,
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    /// The small full model used for gradient checking: four filters, two
    /// scales per branch, every optional block enabled.
    pub fn tiny() -> Self {
        Self {
            audio_kernel_sizes: vec![3, 5],
            text_kernel_sizes: vec![3, 5],
            filters_per_scale: 4,
            xvector_dim: 16,
            fc_hidden: 16,
            ..Self::default()
        }
    }

    pub fn audio_dim(&self) -> usize {
        AUDIO_FEATURE_DIM
    }

    pub fn audio_channels(&self) -> usize {
        self.audio_kernel_sizes.len() * self.filters_per_scale
    }

    pub fn text_channels(&self) -> usize {
        self.text_kernel_sizes.len() * self.filters_per_scale
    }

    /// Audio pooling modes in canonical (max, avg, std) order.
    pub fn audio_modes(&self) -> Vec<PoolMode> {
        canonical(&self.pool_modes_audio)
    }

    pub fn text_modes(&self) -> Vec<PoolMode> {
        canonical(&self.pool_modes_text)
    }

    pub fn audio_block_dim(&self) -> usize {
        self.audio_modes().len() * self.audio_channels()
            + if self.use_xvector { self.xvector_dim } else { 0 }
    }

    pub fn text_block_dim(&self) -> usize {
        self.text_modes().len() * self.text_channels()
            + if self.use_swem { 2 * self.embedding_dim } else { 0 }
    }

    /// One attended vector per audio context (pooling mode).
    pub fn attention_dim(&self) -> usize {
        if self.use_attention {
            self.audio_modes().len() * self.text_channels()
        } else {
            0
        }
    }

    pub fn fusion_dim(&self) -> usize {
        self.audio_block_dim() + self.text_block_dim() + self.attention_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, detail: String| Err(Error::config(format!("model.{field}"), detail));
        for (field, sizes) in [
            ("audio_kernel_sizes", &self.audio_kernel_sizes),
            ("text_kernel_sizes", &self.text_kernel_sizes),
        ] {
            if sizes.is_empty() || sizes.contains(&0) {
                return fail(field, format!("needs at least one positive size, got {sizes:?}"));
            }
        }
        if self.filters_per_scale == 0 {
            return fail("filters_per_scale", "must be positive".into());
        }
        if self.pool_modes_audio.is_empty() {
            return fail("pool_modes_audio", "must not be empty".into());
        }
        if self.pool_modes_text.is_empty() {
            return fail("pool_modes_text", "must not be empty".into());
        }
        if self.use_attention && self.audio_channels() != self.text_channels() {
            return fail(
                "use_attention",
                format!(
                    "attention needs equal branch widths, audio has {} channels and text {}",
                    self.audio_channels(),
                    self.text_channels()
                ),
            );
        }
        if self.use_xvector && self.xvector_dim == 0 {
            return fail("xvector_dim", "must be positive when use_xvector is set".into());
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim", "must be positive".into());
        }
        if self.fc_hidden == 0 {
            return fail("fc_hidden", "must be positive".into());
        }
        if self.n_classes < 2 {
            return fail("n_classes", format!("need at least 2 classes, got {}", self.n_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout", format!("{} not in [0, 1)", self.dropout));
        }
        Ok(())
    }
}

fn canonical(modes: &[PoolMode]) -> Vec<PoolMode> {
    let mut m = modes.to_vec();
    m.sort();
    m.dedup();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fusion_dims() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.audio_block_dim(), 1536 + 512);
        assert_eq!(cfg.text_block_dim(), 1536 + 600);
        assert_eq!(cfg.fusion_dim(), 5720);
        let no_xv = ModelConfig {
            use_xvector: false,
            ..cfg
        };
        assert_eq!(no_xv.fusion_dim(), 5208);
    }

    #[test]
    fn attention_requires_equal_widths() {
        let cfg = ModelConfig {
            text_kernel_sizes: vec![3, 5],
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let cfg = ModelConfig {
            use_attention: false,
            ..cfg
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn empty_pool_set_rejected() {
        let cfg = ModelConfig {
            pool_modes_text: vec![],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn modes_are_canonicalised() {
        let cfg = ModelConfig {
            pool_modes_audio: vec![PoolMode::Std, PoolMode::Max, PoolMode::Std],
            ..ModelConfig::default()
        };
        assert_eq!(cfg.audio_modes(), vec![PoolMode::Max, PoolMode::Std]);
    }
}
