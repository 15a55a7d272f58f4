//! The JSON run-configuration file: model, training, synthesis, and sweep
//! sections, every field optional with published defaults. Unknown keys are
//! hard errors, and the fully resolved config is echoed before any run so it
//! can be fed back in verbatim.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fas_core::config::{FasConfig, Variant};
use fas_core::synth::SynthSpec;
use fas_core::train::TrainConfig;

use crate::error::{io_err, CliError, Result};

/// Axes of the ablation sweep. An empty axis falls back to the single value
/// from the `fas` section, so a fully empty grid is one cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub k_aco: Vec<usize>,
    pub k_sem: Vec<usize>,
    pub n_q: Vec<usize>,
    pub variant: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub fas: FasConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub sweep: SweepSpec,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.fas.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// One model config per sweep cell, in a fixed axis order.
    pub fn sweep_cells(&self) -> Vec<FasConfig> {
        let or_base = |axis: &[usize], base: usize| -> Vec<usize> {
            if axis.is_empty() {
                vec![base]
            } else {
                axis.to_vec()
            }
        };
        let k_acos = or_base(&self.sweep.k_aco, self.fas.k_aco);
        let k_sems = or_base(&self.sweep.k_sem, self.fas.k_sem);
        let n_qs = or_base(&self.sweep.n_q, self.fas.n_q);
        let variants = if self.sweep.variant.is_empty() {
            vec![self.fas.variant]
        } else {
            self.sweep.variant.clone()
        };
        let mut cells = Vec::new();
        for &variant in &variants {
            for &k_aco in &k_acos {
                for &k_sem in &k_sems {
                    for &n_q in &n_qs {
                        cells.push(FasConfig { k_aco, k_sem, n_q, variant, ..self.fas.clone() });
                    }
                }
            }
        }
        cells
    }

    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Stable key identifying one sweep cell in output tables.
pub fn cell_key(cfg: &FasConfig) -> String {
    format!(
        "variant={},k_aco={},k_sem={},n_q={}",
        cfg.variant.name(),
        cfg.k_aco,
        cfg.k_sem,
        cfg.n_q
    )
}

/// Per-cell seed: base seed plus an FNV-1a hash of the cell key, so cells
/// are decorrelated but reproducible.
pub fn cell_seed(base: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in key.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    base.wrapping_add(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_one_cell() {
        let rc = RunConfigFile::default();
        let cells = rc.sweep_cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0], rc.fas);
    }

    #[test]
    fn two_by_two_grid() {
        let rc = RunConfigFile {
            sweep: SweepSpec {
                k_aco: vec![8, 16],
                k_sem: vec![8, 16],
                ..SweepSpec::default()
            },
            ..RunConfigFile::default()
        };
        let cells = rc.sweep_cells();
        assert_eq!(cells.len(), 4);
        let keys: Vec<String> = cells.iter().map(cell_key).collect();
        let mut uniq = keys.clone();
        uniq.dedup();
        assert_eq!(keys, uniq);
    }

    #[test]
    fn cell_seeds_differ_per_key() {
        let a = cell_seed(42, "variant=fas,k_aco=8,k_sem=16,n_q=2");
        let b = cell_seed(42, "variant=fas,k_aco=16,k_sem=16,n_q=2");
        assert_ne!(a, b);
        assert_eq!(a, cell_seed(42, "variant=fas,k_aco=8,k_sem=16,n_q=2"));
    }

    #[test]
    fn echo_round_trips() {
        let rc = RunConfigFile::default();
        let parsed: RunConfigFile = serde_json::from_str(&rc.echo()).unwrap();
        assert_eq!(parsed, rc);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfigFile>(r#"{"fas": {"depth": 3}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfigFile>(r#"{"epochs": 5}"#);
        assert!(err.is_err());
    }
}
