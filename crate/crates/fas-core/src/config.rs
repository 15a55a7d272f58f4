//! Model configuration: architecture hyperparameters and the variant switch.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fusion strategy. `Fas` is the full model; the rest are the baselines and
/// ablations it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fas,
    Concat,
    Gated,
    FasNoTopk,
    FasNoQlearn,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Fas,
        Variant::Concat,
        Variant::Gated,
        Variant::FasNoTopk,
        Variant::FasNoQlearn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fas => "fas",
            Variant::Concat => "concat",
            Variant::Gated => "gated",
            Variant::FasNoTopk => "fas_no_topk",
            Variant::FasNoQlearn => "fas_no_qlearn",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// Architecture hyperparameters. Defaults are the published configuration:
/// d=512, s=5, k_aco=8, k_sem=16, N_q=2, dropout 0.4, 64/1280 input dims,
/// 7 emotion classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FasConfig {
    /// Unified hidden dimension.
    pub d: usize,
    /// Patchification factor (non-overlapping mean pooling over s frames).
    pub s: usize,
    /// Retained acoustic tokens after saliency selection.
    pub k_aco: usize,
    /// Retained semantic tokens after saliency selection.
    pub k_sem: usize,
    /// Number of learnable queries.
    pub n_q: usize,
    /// Dropout rate (attention weights and the head's hidden activation).
    pub dropout: f64,
    /// Acoustic input feature dimension.
    pub d_aco_in: usize,
    /// Semantic input feature dimension.
    pub d_sem_in: usize,
    /// Emotion classes.
    pub n_classes: usize,
    /// Feed-forward expansion after attention (d -> e*d -> d).
    pub ffn_expansion: usize,
    pub variant: Variant,
}

impl Default for FasConfig {
    fn default() -> Self {
        FasConfig {
            d: 512,
            s: 5,
            k_aco: 8,
            k_sem: 16,
            n_q: 2,
            dropout: 0.4,
            d_aco_in: 64,
            d_sem_in: 1280,
            n_classes: 7,
            ffn_expansion: 3,
            variant: Variant::Fas,
        }
    }
}

impl FasConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("s", self.s),
            ("k_aco", self.k_aco),
            ("k_sem", self.k_sem),
            ("n_q", self.n_q),
            ("d_aco_in", self.d_aco_in),
            ("d_sem_in", self.d_sem_in),
            ("n_classes", self.n_classes),
            ("ffn_expansion", self.ffn_expansion),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_table() {
        let c = FasConfig::default();
        assert_eq!(c.d, 512);
        assert_eq!(c.n_q, 2);
        assert_eq!(c.dropout, 0.4);
        assert_eq!((c.k_aco, c.k_sem), (8, 16));
        assert_eq!((c.d_aco_in, c.d_sem_in), (64, 1280));
        assert_eq!(c.s, 5);
        assert_eq!(c.n_classes, 7);
        c.validate().unwrap();
    }

    #[test]
    fn dropout_range_is_enforced() {
        let c = FasConfig { dropout: 1.0, ..FasConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("bogus").is_err());
    }
}
