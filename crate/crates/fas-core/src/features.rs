//! In-memory feature sequences, the f32 payload the encoders would emit.
//! The on-disk container (`.fasf`) lives in the IO crate; training upcasts
//! to f64.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Acoustic,
    Semantic,
}

impl StreamKind {
    pub fn tag(self) -> u8 {
        match self {
            StreamKind::Acoustic => 0,
            StreamKind::Semantic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(StreamKind::Acoustic),
            1 => Ok(StreamKind::Semantic),
            other => Err(Error::Input(format!("unknown stream tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Acoustic => "acoustic",
            StreamKind::Semantic => "semantic",
        }
    }
}

/// One utterance's per-frame feature matrix for one stream, row-major f32.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub kind: StreamKind,
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(kind: StreamKind, frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::Input(format!(
                "feature payload length {} does not match {frames} frames x {dim} dims",
                data.len()
            )));
        }
        Ok(FeatureSequence { kind, frames, dim, data })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.frames, self.dim, |r, c| self.data[r * self.dim + c] as f64)
    }
}
