//! Core numerics for acoustic-semantic fusion emotion classifiers.
//!
//! This crate is `no_std` (alloc only) and carries everything that does not
//! touch the filesystem: dense matrices with reverse-mode automatic
//! differentiation, AdamW with a warmup-cosine schedule, the fusion model and
//! its baseline variants, classification metrics, the training loop, and the
//! deterministic synthetic conflict-data generator. File formats and the CLI
//! live in the companion `fas-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod error;
pub mod features;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod train;

pub use config::{FasConfig, Variant};
pub use error::{Error, Result};
pub use features::{FeatureSequence, StreamKind};
pub use matrix::Matrix;
pub use metrics::Metrics;
pub use model::SampleData;
pub use params::{GradMap, ParameterStore};
pub use rng::{Stream, StreamRng};
pub use tape::{NodeId, Tape};
pub use train::{TrainConfig, TrainState};
