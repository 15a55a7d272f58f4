//! Named parameter matrices and their construction per variant.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::{FasConfig, Variant};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::StreamRng;

/// Gradients keyed by parameter name. BTreeMap keeps iteration order fixed.
pub type GradMap = BTreeMap<String, Matrix>;

/// Ordered collection of named parameter matrices. Insertion order is the
/// canonical order used by the optimizer and checkpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: BTreeMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: String, value: Matrix) {
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.index
            .get(name)
            .map(|&i| &self.values[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.values[i]),
            None => Err(Error::Contract(format!("unknown parameter '{name}'"))),
        }
    }

    pub fn get_mut_by_index(&mut self, idx: usize) -> &mut Matrix {
        &mut self.values[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar entries across all matrices.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.rows() * m.cols()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Zero every parameter whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            if name.starts_with(prefix) {
                *value = Matrix::zeros(value.rows(), value.cols());
            }
        }
    }
}

enum Init {
    /// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Uniform { fan_in: usize },
    Zero,
    /// Standard normal scaled by 0.02 (learnable queries).
    Query,
}

struct ParamSpec {
    name: &'static str,
    rows: usize,
    cols: usize,
    init: Init,
}

fn weight(name: &'static str, rows: usize, cols: usize) -> ParamSpec {
    ParamSpec { name, rows, cols, init: Init::Uniform { fan_in: rows } }
}

fn bias(name: &'static str, cols: usize) -> ParamSpec {
    ParamSpec { name, rows: 1, cols, init: Init::Zero }
}

/// The full shape table for a variant, in canonical order. Baselines own
/// only their relevant subset.
fn shape_table(cfg: &FasConfig) -> Vec<ParamSpec> {
    let d = cfg.d;
    let mut t = alloc::vec![
        weight("proj_aco.w", cfg.d_aco_in, d),
        bias("proj_aco.b", d),
        weight("proj_sem.w", cfg.d_sem_in, d),
        bias("proj_sem.b", d),
    ];
    match cfg.variant {
        Variant::Fas | Variant::FasNoTopk => {
            t.push(ParamSpec { name: "q_learn", rows: cfg.n_q, cols: d, init: Init::Query });
            t.push(weight("attn_k.w", d, d));
            t.push(bias("attn_k.b", d));
            t.push(weight("attn_v.w", d, d));
            t.push(bias("attn_v.b", d));
            let e = cfg.ffn_expansion * d;
            t.push(weight("ffn.w1", d, e));
            t.push(bias("ffn.b1", e));
            t.push(weight("ffn.w2", e, d));
            t.push(bias("ffn.b2", d));
            t.push(weight("head.w1", cfg.n_q * d, d));
            t.push(bias("head.b1", d));
            t.push(weight("head.w2", d, cfg.n_classes));
            t.push(bias("head.b2", cfg.n_classes));
        }
        Variant::FasNoQlearn => {
            t.push(weight("head.w1", cfg.n_q * d, d));
            t.push(bias("head.b1", d));
            t.push(weight("head.w2", d, cfg.n_classes));
            t.push(bias("head.b2", cfg.n_classes));
        }
        Variant::Concat => {
            t.push(weight("head.w1", 2 * d, d));
            t.push(bias("head.b1", d));
            t.push(weight("head.w2", d, cfg.n_classes));
            t.push(bias("head.b2", cfg.n_classes));
        }
        Variant::Gated => {
            t.push(weight("gate.w", 2 * d, d));
            t.push(bias("gate.b", d));
            t.push(weight("head.w1", 2 * d, d));
            t.push(bias("head.b1", d));
            t.push(weight("head.w2", d, cfg.n_classes));
            t.push(bias("head.b2", cfg.n_classes));
        }
    }
    t
}

/// Fresh parameters for the variant, drawn from the init stream in table
/// order so a given seed always produces the same bytes.
pub fn init_params(cfg: &FasConfig, rng: &mut StreamRng) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut store = ParameterStore::new();
    for spec in shape_table(cfg) {
        let m = match spec.init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                Matrix::from_fn(spec.rows, spec.cols, |_, _| rng.uniform_in(-bound, bound))
            }
            Init::Zero => Matrix::zeros(spec.rows, spec.cols),
            Init::Query => Matrix::from_fn(spec.rows, spec.cols, |_, _| 0.02 * rng.normal()),
        };
        store.insert(spec.name.to_string(), m);
    }
    Ok(store)
}

/// Exact number of trainable scalars implied by the config.
pub fn param_count(cfg: &FasConfig) -> usize {
    shape_table(cfg).iter().map(|s| s.rows * s.cols).sum()
}
